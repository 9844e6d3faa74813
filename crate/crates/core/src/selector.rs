//! The selection procedure: find the smallest multiplier whose estimated
//! false coverage proportion is at most `alpha`, then report the sets of the
//! test examples still selected there.
//!
//! Three implementations are provided and return identical outcomes:
//! a reference scan over all pairwise line intersections, a sweep over the
//! envelope events of every row, and the closed-form threshold rule on the
//! sorted key statistics.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ProbabilityMatrix;
use crate::envelope::{check_alpha, validate_row, Line, UpperEnvelope};
use crate::error::{Error, Result, Sample};
use crate::exact;
use crate::ratio;
use crate::family::{InformativeFamily, LabelSet};
use crate::policy::{
    check_calibration, hat_mu, row_envelope, row_lines, sample_envelopes, scan, tilde_mu,
    PolicyMode,
};

/// Serializes an `f64` multiplier, writing infinity as `"inf"`.
pub mod mu_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mu: &f64, s: S) -> Result<S::Ok, S::Error> {
        if mu.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*mu)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad multiplier {t:?}"))),
        }
    }
}

/// How `mu_alpha` is searched for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Recomputes every policy at each pairwise intersection of calibration
    /// lines. Slow; the reference.
    AllIntersections,
    /// Sweeps the breakpoints and zero crossings of all envelopes in order.
    EnvelopeTraversal,
    /// Threshold rule on the sorted key statistics.
    ThresholdForm,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::AllIntersections,
        Method::EnvelopeTraversal,
        Method::ThresholdForm,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::AllIntersections => "all-intersections",
            Method::EnvelopeTraversal => "envelope-traversal",
            Method::ThresholdForm => "threshold-form",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    #[serde(with = "mu_serde")]
    pub mu_alpha: f64,
    /// Selected test indices (0-based), ascending.
    pub selected: Vec<usize>,
    pub sets: BTreeMap<usize, LabelSet>,
    /// Estimated false coverage proportion at `mu_alpha`; absent when no
    /// multiplier qualifies.
    pub fcp_hat_at_solution: Option<f64>,
}

impl SelectionOutcome {
    fn empty() -> Self {
        SelectionOutcome {
            mu_alpha: f64::INFINITY,
            selected: Vec::new(),
            sets: BTreeMap::new(),
            fcp_hat_at_solution: None,
        }
    }
}

/// Estimated false coverage proportion from counts: `miscovered` of `n`
/// calibration examples are miscovered and selected, `selected` of `m` test
/// examples are selected.
pub fn fcp_from_counts(miscovered: usize, n: usize, selected: usize, m: usize) -> f64 {
    let numerator = (1 + miscovered) as f64 / (n + 1) as f64;
    let denominator = selected.max(1) as f64 / m as f64;
    numerator / denominator
}

/// Whether the estimated proportion from these counts is at most `alpha`,
/// decided exactly on the rational value.
pub fn fcp_within(miscovered: usize, n: usize, selected: usize, m: usize, alpha: f64) -> bool {
    ratio::at_most(
        (1 + miscovered) as u128 * m as u128,
        (n + 1) as u128 * selected.max(1) as u128,
        alpha,
    )
}

/// Estimated false coverage proportion at `mu` from key statistics.
pub fn fcp_hat(mu: f64, tilde: &[f64], hat: &[f64]) -> f64 {
    let miscovered = tilde.iter().filter(|&&t| t > mu).count();
    let selected = hat.iter().filter(|&&h| h > mu).count();
    fcp_from_counts(miscovered, tilde.len(), selected, hat.len())
}

/// Number of entries of an ascending slice strictly above `mu`.
pub(crate) fn count_above(sorted: &[f64], mu: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v <= mu)
}

pub(crate) fn sorted(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `{0}` followed by the distinct finite values of an ascending slice.
fn threshold_candidates(sorted_tilde: &[f64]) -> impl Iterator<Item = f64> + '_ {
    std::iter::once(0.0).chain(
        sorted_tilde
            .iter()
            .copied()
            .filter(|t| t.is_finite() && *t > 0.0)
            .scan(None, |prev: &mut Option<u64>, t| {
                let fresh = *prev != Some(t.to_bits());
                *prev = Some(t.to_bits());
                Some(fresh.then_some(t))
            })
            .flatten(),
    )
}

/// First candidate `mu` with estimated proportion at most `alpha`.
fn threshold_search(tilde: &[f64], hat: &[f64], alpha: f64) -> Option<(f64, f64)> {
    let (n, m) = (tilde.len(), hat.len());
    let tilde = sorted(tilde.iter().copied());
    let hat = sorted(hat.iter().copied());
    let found = threshold_candidates(&tilde).find_map(|mu| {
        let (a, b) = (count_above(&tilde, mu), count_above(&hat, mu));
        fcp_within(a, n, b, m, alpha).then(|| (mu, fcp_from_counts(a, n, b, m)))
    });
    found
}

fn envelope_search(
    cal: &[UpperEnvelope],
    labels: &[u32],
    test: &[UpperEnvelope],
    alpha: f64,
) -> Option<(f64, f64)> {
    let (n, m) = (cal.len(), test.len());
    let rows = cal.iter().chain(test);

    struct RowState {
        segment: usize,
        alive: bool,
    }
    let contribution = |r: usize, env: &UpperEnvelope, st: &RowState| -> (usize, usize) {
        if !st.alive {
            (0, 0)
        } else if r < n {
            let covered = env.segments()[st.segment].line.candidate.contains(labels[r]);
            (usize::from(!covered), 0)
        } else {
            (0, 1)
        }
    };
    let next_event = |env: &UpperEnvelope, st: &RowState| -> Option<f64> {
        if !st.alive {
            return None;
        }
        let next_start = env
            .segments()
            .get(st.segment + 1)
            .map_or(f64::INFINITY, |s| s.start);
        let z = env.zero_crossing().unwrap_or(f64::INFINITY);
        let e = next_start.min(z);
        e.is_finite().then_some(e)
    };

    let envs: Vec<&UpperEnvelope> = rows.collect();
    let mut states: Vec<RowState> = Vec::with_capacity(n + m);
    let mut heap = BinaryHeap::new();
    let (mut miscovered, mut selected) = (0usize, 0usize);
    for (r, env) in envs.iter().enumerate() {
        let st = RowState {
            segment: 0,
            alive: env.decision(0.0),
        };
        let (a, b) = contribution(r, env, &st);
        miscovered += a;
        selected += b;
        if let Some(e) = next_event(env, &st) {
            heap.push(Reverse((e.to_bits(), r)));
        }
        states.push(st);
    }

    let mut mu = 0.0;
    loop {
        if fcp_within(miscovered, n, selected, m, alpha) {
            return Some((mu, fcp_from_counts(miscovered, n, selected, m)));
        }
        let Reverse((bits, _)) = heap.peek().copied()?;
        mu = f64::from_bits(bits);
        while let Some(&Reverse((b, r))) = heap.peek() {
            if b != bits {
                break;
            }
            heap.pop();
            let env = envs[r];
            let (a, s) = contribution(r, env, &states[r]);
            miscovered -= a;
            selected -= s;
            let st = &mut states[r];
            let segs = env.segments();
            while st.segment + 1 < segs.len() && segs[st.segment + 1].start <= mu {
                st.segment += 1;
            }
            st.alive = env.decision(mu);
            let (a, s) = contribution(r, env, &states[r]);
            miscovered += a;
            selected += s;
            if let Some(e) = next_event(env, &states[r]) {
                heap.push(Reverse((e.to_bits(), r)));
            }
        }
    }
}

/// Candidate multipliers of the reference method: zero, every pairwise
/// intersection of a calibration row's lines, and every line's root.
fn intersection_candidates(cal_lines: &[Vec<Line>]) -> Vec<f64> {
    let mut out: Vec<f64> = cal_lines
        .par_iter()
        .flat_map_iter(|lines| {
            let mut v = Vec::new();
            for (i, a) in lines.iter().enumerate() {
                v.push(exact::ceil_root(a.coef()));
                for b in &lines[i + 1..] {
                    v.push(exact::ceil_breakpoint(a.coef(), b.coef()));
                }
            }
            v
        })
        .filter(|mu| mu.is_finite())
        .collect();
    out.push(0.0);
    out.par_sort_unstable_by(f64::total_cmp);
    out.dedup_by(|a, b| a.to_bits() == b.to_bits());
    out
}

fn intersection_search(
    cal_lines: &[Vec<Line>],
    labels: &[u32],
    test_lines: &[Vec<Line>],
    alpha: f64,
) -> Option<(f64, f64)> {
    let (n, m) = (cal_lines.len(), test_lines.len());
    intersection_candidates(cal_lines).into_iter().find_map(|mu| {
        let miscovered = cal_lines
            .par_iter()
            .zip(labels)
            .filter(|(lines, &y)| {
                let (line, d) = scan(lines, mu, PolicyMode::Practical);
                d && !line.candidate.contains(y)
            })
            .count();
        let selected = test_lines
            .par_iter()
            .filter(|lines| scan(lines, mu, PolicyMode::Practical).1)
            .count();
        fcp_within(miscovered, n, selected, m, alpha)
            .then(|| (mu, fcp_from_counts(miscovered, n, selected, m)))
    })
}

fn sample_lines(
    rows: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Vec<Vec<Line>>> {
    (0..rows.len())
        .into_par_iter()
        .map(|i| {
            validate_row(rows.row(i), family.k(), i)?;
            row_lines(rows.row(i), family, alpha, PolicyMode::Practical)
        })
        .collect()
}

/// Runs the selection procedure.
///
/// Fails with [`Error::NestednessViolated`] when the family carries no
/// nestedness guarantee and some row's selected set shrinks as `mu` grows.
pub fn run_og_infosp(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
    method: Method,
) -> Result<SelectionOutcome> {
    check_alpha(alpha)?;
    check_calibration(cal, labels, family)?;
    if test.is_empty() {
        return Err(Error::EmptyTest);
    }
    // Envelopes also validate rows and nestedness for every method.
    let cal_env = sample_envelopes(cal, family, alpha, Sample::Calibration)?;
    let test_env = sample_envelopes(test, family, alpha, Sample::Test)?;

    let found = match method {
        Method::ThresholdForm => {
            let tilde: Vec<f64> = cal_env
                .iter()
                .zip(labels)
                .map(|(e, &y)| tilde_mu(e, y))
                .collect();
            let hat: Vec<f64> = test_env.iter().map(hat_mu).collect();
            threshold_search(&tilde, &hat, alpha)
        }
        Method::EnvelopeTraversal => envelope_search(&cal_env, labels, &test_env, alpha),
        Method::AllIntersections => {
            let cal_lines = sample_lines(cal, family, alpha)?;
            let test_lines = sample_lines(test, family, alpha)?;
            let found = intersection_search(&cal_lines, labels, &test_lines, alpha);
            return Ok(match found {
                None => SelectionOutcome::empty(),
                Some((mu, fcp)) => {
                    let mut sets = BTreeMap::new();
                    for (i, lines) in test_lines.iter().enumerate() {
                        let (line, d) = scan(lines, mu, PolicyMode::Practical);
                        if d {
                            sets.insert(i, line.candidate.clone());
                        }
                    }
                    SelectionOutcome {
                        mu_alpha: mu,
                        selected: sets.keys().copied().collect(),
                        sets,
                        fcp_hat_at_solution: Some(fcp),
                    }
                }
            });
        }
    };

    Ok(match found {
        None => SelectionOutcome::empty(),
        Some((mu, fcp)) => {
            let sets: BTreeMap<usize, LabelSet> = test_env
                .iter()
                .enumerate()
                .filter(|(_, e)| e.decision(mu))
                .map(|(i, e)| (i, e.active(mu).candidate.clone()))
                .collect();
            SelectionOutcome {
                mu_alpha: mu,
                selected: sets.keys().copied().collect(),
                sets,
                fcp_hat_at_solution: Some(fcp),
            }
        }
    })
}

/// A selection threshold fitted on calibration data alone, applied to
/// examples one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct CalOnlyRule {
    pub mu_alpha: f64,
    pub family: InformativeFamily,
    pub alpha: f64,
}

/// Fits the calibration-only rule: the smallest `mu` at which
/// `(1 + miscovered and selected) / (1 + selected)` over the calibration
/// sample is at most `alpha`.
pub fn fit_cal_only(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    family: &InformativeFamily,
    alpha: f64,
) -> Result<CalOnlyRule> {
    check_alpha(alpha)?;
    check_calibration(cal, labels, family)?;
    let env = sample_envelopes(cal, family, alpha, Sample::Calibration)?;
    let tilde = sorted(env.iter().zip(labels).map(|(e, &y)| tilde_mu(e, y)));
    let hat = sorted(env.iter().map(hat_mu));
    let mu_alpha = threshold_candidates(&tilde)
        .find(|&mu| {
            ratio::at_most(
                1 + count_above(&tilde, mu) as u128,
                1 + count_above(&hat, mu) as u128,
                alpha,
            )
        })
        .unwrap_or(f64::INFINITY);
    Ok(CalOnlyRule {
        mu_alpha,
        family: family.clone(),
        alpha,
    })
}

/// The set reported for `row` under a calibration-only rule, if any.
pub fn apply_cal_only(rule: &CalOnlyRule, row: &[f64]) -> Result<Option<LabelSet>> {
    if row.len() != rule.family.k() {
        return Err(Error::DimensionMismatch {
            expected: rule.family.k(),
            got: row.len(),
        });
    }
    if rule.mu_alpha.is_infinite() {
        validate_row(row, rule.family.k(), 0)?;
        return Ok(None);
    }
    let env = row_envelope(row, &rule.family, rule.alpha)?;
    Ok(env
        .decision(rule.mu_alpha)
        .then(|| env.active(rule.mu_alpha).candidate.clone()))
}
