//! Per-example decisions: candidate reduction, the set/decision pair at a
//! given multiplier, the key selection statistics, and nestedness checks.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{validate_labels, ProbabilityMatrix};
use crate::envelope::{
    build_lines, canonical_lines, check_alpha, envelope_of_canonical, validate_row, Line,
    UpperEnvelope,
};
use crate::error::{Error, Result, Sample};
use crate::exact;
use crate::family::{nestedness_certificate, InformativeFamily, LabelSet, Members};

/// Tie and decision conventions.
///
/// `Practical` breaks value ties toward the steeper line (so the set is
/// right-continuous in `mu`) and then toward smaller weight, and selects when
/// the envelope is strictly positive. `Oracle` breaks ties toward larger
/// weight and selects when the envelope is non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Practical,
    Oracle,
}

/// Candidates that can appear on the envelope of `prob_row`.
///
/// For cardinality-based families this is, for every allowed size `j`, the
/// `j` most probable non-excluded classes (ties by smaller index). Explicit
/// families are returned whole.
pub fn reduce_candidates(prob_row: &[f64], family: &InformativeFamily) -> Vec<LabelSet> {
    match family.members_repr() {
        Members::Explicit(sets) => sets.clone(),
        Members::Cardinality {
            allowed,
            min_card,
            max_card,
        } => {
            let mut ranked = allowed.clone();
            ranked.sort_by(|&a, &b| {
                prob_row[b as usize - 1]
                    .total_cmp(&prob_row[a as usize - 1])
                    .then(a.cmp(&b))
            });
            (*min_card..=*max_card)
                .map(|j| {
                    let mut top = ranked[..j].to_vec();
                    top.sort_unstable();
                    LabelSet::from_sorted_unchecked(top)
                })
                .collect()
        }
    }
}

/// Whether `a` beats `b` when both attain the same value.
fn wins_tie(a: &Line, b: &Line, mode: PolicyMode) -> bool {
    let order = match mode {
        PolicyMode::Practical => b
            .slope
            .total_cmp(&a.slope)
            .then(a.weight.total_cmp(&b.weight)),
        PolicyMode::Oracle => b
            .weight
            .total_cmp(&a.weight)
            .then(a.slope.total_cmp(&b.slope)),
    };
    order.then_with(|| a.candidate.cmp(&b.candidate)) == Ordering::Less
}

/// Exact argmax scan over canonical lines.
pub(crate) fn scan(lines: &[Line], mu: f64, mode: PolicyMode) -> (&Line, bool) {
    let mut best = &lines[0];
    for line in &lines[1..] {
        match exact::cmp_at(line.coef(), best.coef(), mu) {
            Ordering::Greater => best = line,
            Ordering::Equal if wins_tie(line, best, mode) => best = line,
            _ => {}
        }
    }
    let sign = exact::sign_at(best.coef(), mu);
    let selected = match mode {
        PolicyMode::Practical => sign == Ordering::Greater,
        PolicyMode::Oracle => sign != Ordering::Less,
    };
    (best, selected)
}

/// Canonical candidate lines of one row under `mode`.
pub(crate) fn row_lines(
    prob_row: &[f64],
    family: &InformativeFamily,
    alpha: f64,
    mode: PolicyMode,
) -> Result<Vec<Line>> {
    let candidates = reduce_candidates(prob_row, family);
    let lines = build_lines(prob_row, family, alpha, &candidates)?;
    Ok(canonical_lines(&lines, mode))
}

/// The chosen set and decision at `mu`.
pub fn policy_at(
    prob_row: &[f64],
    family: &InformativeFamily,
    alpha: f64,
    mu: f64,
    mode: PolicyMode,
) -> Result<(LabelSet, bool)> {
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::NegativeMu(mu));
    }
    if mu.is_infinite() {
        return Err(Error::NonFinite("mu".into()));
    }
    let lines = row_lines(prob_row, family, alpha, mode)?;
    let (line, selected) = scan(&lines, mu, mode);
    Ok((line.candidate.clone(), selected))
}

/// Practical-mode envelope of one row over its reduced candidates.
pub fn row_envelope(
    prob_row: &[f64],
    family: &InformativeFamily,
    alpha: f64,
) -> Result<UpperEnvelope> {
    let lines = row_lines(prob_row, family, alpha, PolicyMode::Practical)?;
    Ok(envelope_of_canonical(&lines))
}

/// Smallest `mu` at which a calibration label is covered or the example is
/// no longer selected. Infinite when neither ever happens.
pub fn tilde_mu(env: &UpperEnvelope, label: u32) -> f64 {
    let covered = env
        .segments()
        .iter()
        .find(|s| s.line.candidate.contains(label))
        .map_or(f64::INFINITY, |s| s.start);
    covered.min(hat_mu(env))
}

/// Smallest `mu` at which a test example is no longer selected.
pub fn hat_mu(env: &UpperEnvelope) -> f64 {
    env.zero_crossing().unwrap_or(f64::INFINITY)
}

/// Key statistics of the calibration and test samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyStats {
    pub tilde_mu: Vec<f64>,
    pub hat_mu: Vec<f64>,
}

/// Result of walking an envelope's active sets.
#[derive(Debug, Clone, PartialEq)]
pub enum NestednessCheck {
    Nested,
    Violation {
        mu: f64,
        before: LabelSet,
        after: LabelSet,
    },
}

fn first_violation(env: &UpperEnvelope) -> NestednessCheck {
    for w in env.segments().windows(2) {
        if !w[0].line.candidate.is_subset(&w[1].line.candidate) {
            return NestednessCheck::Violation {
                mu: w[1].start,
                before: w[0].line.candidate.clone(),
                after: w[1].line.candidate.clone(),
            };
        }
    }
    NestednessCheck::Nested
}

/// Checks that the practical-mode set of `prob_row` only grows with `mu`.
pub fn verify_nestedness(
    prob_row: &[f64],
    family: &InformativeFamily,
    alpha: f64,
) -> Result<NestednessCheck> {
    Ok(first_violation(&row_envelope(prob_row, family, alpha)?))
}

/// Envelopes of every row of a sample, validated and checked for nestedness
/// when the family does not guarantee it.
pub(crate) fn sample_envelopes(
    rows: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
    sample: Sample,
) -> Result<Vec<UpperEnvelope>> {
    check_alpha(alpha)?;
    if rows.k() != family.k() {
        return Err(Error::DimensionMismatch {
            expected: family.k(),
            got: rows.k(),
        });
    }
    let check = !nestedness_certificate(family).is_guaranteed();
    (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let row = rows.row(i);
            validate_row(row, family.k(), i)?;
            let env = row_envelope(row, family, alpha)?;
            if check {
                if let NestednessCheck::Violation { mu, before, after } = first_violation(&env) {
                    return Err(Error::NestednessViolated {
                        sample,
                        row: i,
                        mu,
                        before,
                        after,
                    });
                }
            }
            Ok(env)
        })
        .collect()
}

pub(crate) fn check_calibration(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    family: &InformativeFamily,
) -> Result<()> {
    if cal.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: cal.len(),
            got: labels.len(),
        });
    }
    validate_labels(labels, family.k())
}

/// `tilde_mu` for calibration rows and `hat_mu` for test rows.
pub fn key_statistics(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<KeyStats> {
    check_calibration(cal, labels, family)?;
    let cal_env = sample_envelopes(cal, family, alpha, Sample::Calibration)?;
    let test_env = sample_envelopes(test, family, alpha, Sample::Test)?;
    Ok(KeyStats {
        tilde_mu: cal_env
            .iter()
            .zip(labels)
            .map(|(e, &y)| tilde_mu(e, y))
            .collect(),
        hat_mu: test_env.iter().map(hat_mu).collect(),
    })
}
