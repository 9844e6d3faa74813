//! Closed forms for two special families, conformal p-values with the BH
//! step-up rule, and the split-conformal baselines.
//!
//! Nonconformity scores are `s(x, y) = 1 - p(y | x)`. Every comparison of a
//! count ratio against a level is decided exactly on the binary value of
//! the level, so the threshold forms and their BH counterparts agree
//! without floating-point slack.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_labels, ProbabilityMatrix};
use crate::envelope::check_alpha;
use crate::error::{Error, Result};
use crate::family::{InformativeFamily, LabelSet};
use crate::ratio;
use crate::selector::{count_above, fcp_within, sorted};

/// `s(x, y) = 1 - p(y | x)` for a 1-based label.
pub fn nonconformity(prob_row: &[f64], label: u32) -> f64 {
    1.0 - prob_row[label as usize - 1]
}

/// Scores of the true labels of a calibration sample.
pub fn calibration_scores(cal: &ProbabilityMatrix, labels: &[u32]) -> Result<Vec<f64>> {
    if cal.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: cal.len(),
            got: labels.len(),
        });
    }
    validate_labels(labels, cal.k())?;
    Ok(cal
        .rows()
        .zip(labels)
        .map(|(row, &y)| nonconformity(row, y))
        .collect())
}

/// `1 + #{j : cal_j >= test}`, the numerator of the conformal p-value over
/// `n + 1`.
pub fn conformal_rank(cal_scores: &[f64], test_score: f64) -> usize {
    1 + cal_scores.iter().filter(|&&c| c >= test_score).count()
}

pub fn conformal_pvalue(cal_scores: &[f64], test_score: f64) -> f64 {
    conformal_rank(cal_scores, test_score) as f64 / (cal_scores.len() + 1) as f64
}

/// Benjamini-Hochberg step-up rule on floating-point p-values. Returns the
/// rejected indices in increasing order.
pub fn bh_select(pvalues: &[f64], alpha: f64) -> Vec<usize> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let k_hat = (1..=m)
        .rev()
        .find(|&k| pvalues[order[k - 1]] <= k as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut out: Vec<usize> = order[..k_hat].to_vec();
    out.sort_unstable();
    out
}

/// Step-up rule on p-values `ranks[i] / (n + 1)`, decided exactly.
pub fn bh_select_ranks(ranks: &[usize], n: usize, alpha: f64) -> Vec<usize> {
    let m = ranks.len() as u128;
    let den = (n + 1) as u128;
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&i| ranks[i]);
    let k_hat = (1..=ranks.len())
        .rev()
        .find(|&k| ratio::at_most(ranks[order[k - 1]] as u128 * m, k as u128 * den, alpha))
        .unwrap_or(0);
    let mut out: Vec<usize> = order[..k_hat].to_vec();
    out.sort_unstable();
    out
}

/// The probability threshold `mu (1 - alpha) / (1 + mu)` that corresponds to
/// a multiplier in the two closed forms; `1 - alpha` at infinity.
pub fn threshold_of_mu(mu: f64, alpha: f64) -> f64 {
    if mu.is_infinite() {
        1.0 - alpha
    } else {
        mu * (1.0 - alpha) / (1.0 + mu)
    }
}

fn argmax(row: &[f64]) -> (u32, f64) {
    let mut best = (1, row[0]);
    for (j, &p) in row.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (j as u32 + 1, p);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstentionOutput {
    /// Infinite when no threshold qualifies.
    #[serde(with = "crate::selector::mu_serde")]
    pub t_alpha: f64,
    /// Test index to predicted class.
    pub reported: BTreeMap<usize, u32>,
}

fn check_pair(cal: &ProbabilityMatrix, labels: &[u32], test: &ProbabilityMatrix) -> Result<()> {
    if test.is_empty() {
        return Err(Error::EmptyTest);
    }
    if !cal.is_empty() && cal.k() != test.k() {
        return Err(Error::DimensionMismatch {
            expected: cal.k(),
            got: test.k(),
        });
    }
    if cal.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: cal.len(),
            got: labels.len(),
        });
    }
    validate_labels(labels, test.k())
}

/// First threshold in `{0} ∪ errors` at which the estimated proportion is
/// at most `alpha`, where a calibration example counts when it is an error
/// scoring above the threshold and a test example counts when it scores
/// above it.
fn threshold_rule(errors: &[f64], n: usize, test: &[f64], alpha: f64) -> f64 {
    let errors = sorted(errors.iter().copied());
    let test = sorted(test.iter().copied());
    let m = test.len();
    let mut candidates = vec![0.0];
    candidates.extend(errors.iter().copied().filter(|&e| e > 0.0));
    candidates.dedup_by(|a, b| a.to_bits() == b.to_bits());
    candidates
        .into_iter()
        .find(|&t| fcp_within(count_above(&errors, t), n, count_above(&test, t), m, alpha))
        .unwrap_or(f64::INFINITY)
}

/// Classification with abstention: predict the most probable class (lowest
/// index on ties) and report it when its probability exceeds a threshold
/// fitted on the calibration errors.
pub fn classify_with_abstention(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    alpha: f64,
) -> Result<AbstentionOutput> {
    check_alpha(alpha)?;
    check_pair(cal, labels, test)?;
    let errors: Vec<f64> = cal
        .rows()
        .zip(labels)
        .filter_map(|(row, &y)| {
            let (y_hat, p) = argmax(row);
            (y_hat != y).then_some(p)
        })
        .collect();
    let predictions: Vec<(u32, f64)> = test.rows().map(argmax).collect();
    let top: Vec<f64> = predictions.iter().map(|&(_, p)| p).collect();
    let t_alpha = threshold_rule(&errors, cal.len(), &top, alpha);
    let reported = predictions
        .iter()
        .enumerate()
        .filter(|(_, &(_, p))| p > t_alpha)
        .map(|(i, &(y, _))| (i, y))
        .collect();
    Ok(AbstentionOutput { t_alpha, reported })
}

/// Conformal p-value numerators for the abstention problem, built from the
/// score that is the top probability on calibration errors and zero on
/// correct predictions.
pub fn abstention_ranks(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
) -> Result<Vec<usize>> {
    check_pair(cal, labels, test)?;
    let cal_scores: Vec<f64> = cal
        .rows()
        .zip(labels)
        .map(|(row, &y)| {
            let (y_hat, p) = argmax(row);
            if y_hat == y {
                0.0
            } else {
                p
            }
        })
        .collect();
    Ok(test
        .rows()
        .map(|row| conformal_rank(&cal_scores, argmax(row).1))
        .collect())
}

fn check_unit(values: &[f64]) -> Result<()> {
    match values
        .iter()
        .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
    {
        Some(row) => Err(Error::ProbabilityOutOfRange {
            row,
            reason: format!("novelty probability {} outside [0, 1]", values[row]),
        }),
        None => Ok(()),
    }
}

/// Novelty detection from estimated novelty probabilities of a calibration
/// sample of inliers and a test sample. Returns the flagged test indices.
pub fn detect_novelties(cal_probs: &[f64], test_probs: &[f64], alpha: f64) -> Result<Vec<usize>> {
    check_alpha(alpha)?;
    if test_probs.is_empty() {
        return Err(Error::EmptyTest);
    }
    check_unit(cal_probs)?;
    check_unit(test_probs)?;
    let t_alpha = threshold_rule(cal_probs, cal_probs.len(), test_probs, alpha);
    Ok((0..test_probs.len())
        .filter(|&i| test_probs[i] > t_alpha)
        .collect())
}

/// Conformal p-value numerators of the test novelty probabilities against
/// the inlier calibration sample.
pub fn novelty_ranks(cal_probs: &[f64], test_probs: &[f64]) -> Vec<usize> {
    test_probs
        .iter()
        .map(|&t| conformal_rank(cal_probs, t))
        .collect()
}

/// `floor(alpha (n + 1))` on the exact value of `alpha`: the number of
/// largest calibration scores a level-`alpha` quantile skips.
fn excluded_count(n: usize, alpha: f64) -> usize {
    let den = (n + 1) as u128;
    let mut k = ((alpha * (n + 1) as f64).floor().max(0.0) as usize).min(n + 1);
    while k > 0 && !ratio::at_most(k as u128, den, alpha) {
        k -= 1;
    }
    while k < n + 1 && ratio::at_most(k as u128 + 1, den, alpha) {
        k += 1;
    }
    k
}

/// Labels whose score is within the quantile that skips the `excluded`
/// largest of the ascending calibration scores. Empty when every score is
/// skipped.
fn set_skipping(sorted_scores: &[f64], prob_row: &[f64], excluded: usize) -> Vec<u32> {
    let n = sorted_scores.len();
    if excluded > n {
        return Vec::new();
    }
    let q_hat = if excluded == 0 {
        f64::INFINITY
    } else {
        sorted_scores[n - excluded]
    };
    (1..=prob_row.len() as u32)
        .filter(|&y| nonconformity(prob_row, y) <= q_hat)
        .collect()
}

/// The `ceil((1 - alpha)(n + 1))`-th smallest calibration score, infinite
/// when that rank exceeds `n`.
pub fn split_conformal_quantile(cal_scores: &[f64], alpha: f64) -> f64 {
    let scores = sorted(cal_scores.iter().copied());
    let k = excluded_count(scores.len(), alpha);
    if k == 0 {
        f64::INFINITY
    } else {
        scores[scores.len() - k]
    }
}

/// Split-conformal prediction set `{y : s(x, y) <= q_hat}`; `None` when no
/// label qualifies.
pub fn split_conformal_set(
    cal_scores: &[f64],
    prob_row: &[f64],
    alpha: f64,
) -> Result<Option<LabelSet>> {
    check_alpha(alpha)?;
    if cal_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores = sorted(cal_scores.iter().copied());
    let set = set_skipping(&scores, prob_row, excluded_count(scores.len(), alpha));
    Ok((!set.is_empty()).then(|| LabelSet::from_sorted_unchecked(set)))
}

/// Smallest `k` such that the level `k / (n + 1)` split-conformal set is a
/// member of the family.
fn adjusted_rank_sorted(
    prob_row: &[f64],
    sorted_scores: &[f64],
    family: &InformativeFamily,
) -> Result<usize> {
    let n = sorted_scores.len();
    let mut k = 1;
    while k <= n {
        let set = set_skipping(sorted_scores, prob_row, k);
        let Some(worst) = set
            .iter()
            .map(|&y| nonconformity(prob_row, y))
            .max_by(f64::total_cmp)
        else {
            break;
        };
        if family.contains(&LabelSet::from_sorted_unchecked(set)) {
            return Ok(k);
        }
        // The set keeps its current members until the quantile drops below
        // its largest score.
        k = 1 + count_above(sorted_scores, worst.next_down());
    }
    Err(Error::NeverInformative)
}

/// Numerator of the adjusted level over `n + 1`.
pub fn adjusted_rank(
    prob_row: &[f64],
    cal_scores: &[f64],
    family: &InformativeFamily,
) -> Result<usize> {
    if cal_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    adjusted_rank_sorted(prob_row, &sorted(cal_scores.iter().copied()), family)
}

/// Smallest level on the grid `k / (n + 1)` whose split-conformal set is
/// informative.
pub fn adjusted_level(
    prob_row: &[f64],
    cal_scores: &[f64],
    family: &InformativeFamily,
) -> Result<f64> {
    let k = adjusted_rank(prob_row, cal_scores, family)?;
    Ok(k as f64 / (cal_scores.len() + 1) as f64)
}

/// Selection and sets of a baseline. Sets may be empty or outside the
/// family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub selected: Vec<usize>,
    pub sets: BTreeMap<usize, Vec<u32>>,
}

fn baseline_inputs(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if cal.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    check_pair(cal, labels, test)?;
    if test.k() != family.k() {
        return Err(Error::DimensionMismatch {
            expected: family.k(),
            got: test.k(),
        });
    }
    Ok(sorted(calibration_scores(cal, labels)?))
}

/// BH on adjusted levels, then split-conformal sets for the selected
/// examples at level `alpha |S| / m`.
pub fn run_info_sp(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<BaselineOutcome> {
    let scores = baseline_inputs(cal, labels, test, family, alpha)?;
    let n = scores.len();
    let m = test.len();
    let ranks: Vec<Option<usize>> = (0..m)
        .into_par_iter()
        .map(|i| match adjusted_rank_sorted(test.row(i), &scores, family) {
            Ok(k) => Ok(Some(k)),
            Err(Error::NeverInformative) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    // Examples that are never informative still count towards m.
    let eligible: Vec<usize> = (0..m).filter(|&i| ranks[i].is_some()).collect();
    let eligible_ranks: Vec<usize> = eligible.iter().map(|&i| ranks[i].unwrap()).collect();
    let selected = bh_select_ranks_of_m(&eligible_ranks, n, m, alpha)
        .into_iter()
        .map(|j| eligible[j])
        .collect::<Vec<_>>();
    if selected.is_empty() {
        return Ok(BaselineOutcome::default());
    }
    // Largest k with k / (n + 1) <= alpha |S| / m.
    let s = selected.len() as u128;
    let mut k = n + 1;
    while k > 0 && !ratio::at_most(k as u128 * m as u128, s * (n + 1) as u128, alpha) {
        k -= 1;
    }
    let sets = selected
        .iter()
        .map(|&i| (i, set_skipping(&scores, test.row(i), k)))
        .collect();
    Ok(BaselineOutcome { selected, sets })
}

/// Step-up rule where `ranks` are the only candidates among `m` hypotheses.
fn bh_select_ranks_of_m(ranks: &[usize], n: usize, m: usize, alpha: f64) -> Vec<usize> {
    let den = (n + 1) as u128;
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&i| ranks[i]);
    let k_hat = (1..=ranks.len())
        .rev()
        .find(|&k| ratio::at_most(ranks[order[k - 1]] as u128 * m as u128, k as u128 * den, alpha))
        .unwrap_or(0);
    let mut out: Vec<usize> = order[..k_hat].to_vec();
    out.sort_unstable();
    out
}

/// Level-`alpha` split-conformal sets for every test example, reporting
/// those that are informative. No selection adjustment.
pub fn run_classic_baseline(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<BaselineOutcome> {
    let scores = baseline_inputs(cal, labels, test, family, alpha)?;
    let k = excluded_count(scores.len(), alpha);
    let sets: BTreeMap<usize, Vec<u32>> = test
        .rows()
        .enumerate()
        .map(|(i, row)| (i, set_skipping(&scores, row, k)))
        .filter(|(_, set)| {
            !set.is_empty() && family.contains(&LabelSet::from_sorted_unchecked(set.clone()))
        })
        .collect();
    Ok(BaselineOutcome {
        selected: sets.keys().copied().collect(),
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_family, FamilySpec};

    fn set(v: &[u32]) -> LabelSet {
        LabelSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn pvalues() {
        let cal = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(conformal_pvalue(&cal, 0.5), 0.2);
        assert_eq!(conformal_pvalue(&cal, 0.25), 0.6);
        assert_eq!(conformal_pvalue(&[], 0.3), 1.0);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_select(&[0.01, 0.02, 0.5], 0.05), vec![0, 1]);
        assert!(bh_select(&[1.0, 1.0], 0.05).is_empty());
        assert_eq!(bh_select(&[0.05], 0.05), vec![0]);
        // ranks over n + 1 = 100
        assert_eq!(bh_select_ranks(&[1, 2, 50], 99, 0.05), vec![0, 1]);
        assert_eq!(bh_select_ranks(&[5], 99, 0.05), vec![0]);
        assert!(bh_select_ranks(&[6], 99, 0.05).is_empty());
    }

    #[test]
    fn bh_step_up_rescues_larger_pvalues() {
        // 0.03 > 1 * 0.05 / 2 but the second order statistic passes
        assert_eq!(bh_select(&[0.03, 0.04], 0.05), vec![0, 1]);
        assert_eq!(bh_select_ranks(&[3, 4], 99, 0.05), vec![0, 1]);
    }

    #[test]
    fn abstention_all_correct() {
        let rows: Vec<Vec<f64>> = (0..19).map(|_| vec![0.8, 0.2]).collect();
        let cal = ProbabilityMatrix::from_rows(&rows).unwrap();
        let test = ProbabilityMatrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let out = classify_with_abstention(&cal, &[1; 19], &test, 0.05).unwrap();
        assert_eq!(out.t_alpha, 0.0);
        assert_eq!(out.reported, BTreeMap::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn abstention_threshold_moves_past_errors() {
        // one confident error among twenty calibration rows; at threshold
        // zero the estimate is (2 / 20) / 1, above 0.09
        let mut rows: Vec<Vec<f64>> = (0..19).map(|_| vec![0.9, 0.1]).collect();
        rows.push(vec![0.7, 0.3]);
        let mut labels = vec![1; 19];
        labels.push(2);
        let cal = ProbabilityMatrix::from_rows(&rows).unwrap();
        let mut tests: Vec<Vec<f64>> = (0..9).map(|_| vec![0.95, 0.05]).collect();
        tests.push(vec![0.6, 0.4]);
        let test = ProbabilityMatrix::from_rows(&tests).unwrap();
        let out = classify_with_abstention(&cal, &labels, &test, 0.09).unwrap();
        assert_eq!(out.t_alpha, 0.7);
        assert_eq!(out.reported.len(), 9);
        assert!(!out.reported.contains_key(&9));
        let ranks = abstention_ranks(&cal, &labels, &test).unwrap();
        assert_eq!(ranks[0], 1);
        assert_eq!(ranks[9], 2);
        assert_eq!(
            bh_select_ranks(&ranks, 20, 0.09),
            out.reported.keys().copied().collect::<Vec<_>>()
        );
    }

    #[test]
    fn novelty_examples() {
        let cal: Vec<f64> = (0..19).map(|i| i as f64 / 100.0).collect();
        assert_eq!(detect_novelties(&cal, &[0.5], 0.1).unwrap(), vec![0]);
        assert!(detect_novelties(&cal, &[0.001], 0.1).unwrap().is_empty());
        assert_eq!(novelty_ranks(&cal, &[0.5, 0.0]), vec![1, 20]);
    }

    #[test]
    fn split_conformal_examples() {
        let cal = [0.1, 0.2, 0.3];
        assert_eq!(split_conformal_quantile(&cal, 0.5), 0.2);
        assert_eq!(
            split_conformal_set(&cal, &[0.9, 0.07, 0.03], 0.5).unwrap(),
            Some(set(&[1]))
        );
        assert_eq!(
            split_conformal_set(&cal, &[0.5, 0.3, 0.2], 0.01).unwrap(),
            Some(set(&[1, 2, 3]))
        );
        assert_eq!(
            split_conformal_set(&[0.3], &[0.5, 0.3, 0.2], 0.1).unwrap(),
            Some(set(&[1, 2, 3]))
        );
        // no label within the quantile
        assert_eq!(split_conformal_set(&cal, &[0.4, 0.3, 0.3], 0.5).unwrap(), None);
    }

    #[test]
    fn excluded_counts_are_exact() {
        assert_eq!(excluded_count(9, 0.1), 1);
        assert_eq!(excluded_count(19, 0.05), 1);
        assert_eq!(excluded_count(3, 0.5), 2);
        // 0.7 as a double is below seven tenths
        assert_eq!(excluded_count(9, 0.7), 6);
        assert_eq!(excluded_count(1, 0.1), 0);
    }

    #[test]
    fn adjusted_level_nontrivial_is_a_pvalue() {
        let family = build_family(FamilySpec::nontrivial(3), 3).unwrap();
        let cal = [0.05, 0.1, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 0.95];
        for row in [[0.9, 0.07, 0.03], [0.5, 0.3, 0.2], [0.4, 0.35, 0.25]] {
            let s_max = row
                .iter()
                .map(|p| 1.0 - p)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(
                adjusted_level(&row, &cal, &family).unwrap(),
                conformal_pvalue(&cal, s_max)
            );
        }
    }

    #[test]
    fn adjusted_level_by_grid_scan() {
        let family = build_family(FamilySpec::Cardinality {
            excluded: [3].into(),
            min_card: 1,
            max_card: 2,
        }, 3)
        .unwrap();
        let cal = [0.05, 0.1, 0.2, 0.4, 0.6, 0.7, 0.8];
        let n = cal.len();
        for row in [[0.2, 0.1, 0.7], [0.6, 0.3, 0.1], [0.34, 0.33, 0.33]] {
            let scan = (1..=n).find(|&k| {
                split_conformal_set(&cal, &row, k as f64 / (n + 1) as f64)
                    .unwrap()
                    .is_some_and(|s| family.contains(&s))
            });
            match adjusted_rank(&row, &cal, &family) {
                Ok(k) => assert_eq!(Some(k), scan),
                Err(Error::NeverInformative) => assert_eq!(scan, None),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn all_nonempty_sets_are_informative_immediately() {
        let family = build_family(
            FamilySpec::Cardinality {
                excluded: Default::default(),
                min_card: 1,
                max_card: 3,
            },
            3,
        )
        .unwrap();
        assert_eq!(
            adjusted_level(&[0.5, 0.3, 0.2], &[0.1, 0.6, 0.9], &family).unwrap(),
            0.25
        );
    }

    #[test]
    fn baselines() {
        let family = build_family(FamilySpec::nontrivial(2), 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..19).map(|_| vec![0.9, 0.1]).collect();
        let cal = ProbabilityMatrix::from_rows(&rows).unwrap();
        let labels = [1; 19];
        let confident =
            ProbabilityMatrix::from_rows(&[vec![0.95, 0.05], vec![0.97, 0.03]]).unwrap();
        let info = run_info_sp(&cal, &labels, &confident, &family, 0.1).unwrap();
        assert_eq!(info.selected, vec![0, 1]);
        assert_eq!(info.sets[&0], vec![1]);
        let classic = run_classic_baseline(&cal, &labels, &confident, &family, 0.1).unwrap();
        assert_eq!(classic.selected, vec![0, 1]);

        let vague = ProbabilityMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(run_info_sp(&cal, &labels, &vague, &family, 0.1)
            .unwrap()
            .selected
            .is_empty());
        assert!(run_classic_baseline(&cal, &labels, &vague, &family, 0.1)
            .unwrap()
            .selected
            .is_empty());
    }

    #[test]
    fn thresholds_of_mu() {
        assert_eq!(threshold_of_mu(0.0, 0.1), 0.0);
        assert!((threshold_of_mu(1.0, 0.1) - 0.45).abs() < 1e-15);
        assert_eq!(threshold_of_mu(f64::INFINITY, 0.5), 0.5);
    }
}
