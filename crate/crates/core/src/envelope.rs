//! Candidate lines and their upper envelope over `mu >= 0`.
//!
//! For an example with estimated class probabilities `p`, each candidate set
//! `C` contributes the line
//!
//! ```text
//! mu  ->  w(C) * p(C)  +  mu * (p(C) - (1 - alpha))
//! ```
//!
//! The envelope is built by divide and conquer over slope-sorted hulls and is
//! then restricted to the non-negative doubles. Segment starts are the
//! smallest doubles at which the next line is at least as high as the
//! previous one, so evaluating at a start returns the right-hand segment.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{self, Coef};
use crate::family::{weight_of, InformativeFamily, LabelSet};
use crate::policy::PolicyMode;

/// Slope and intercept tolerance under which two lines count as one.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// The line of one candidate set for one example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    #[serde(rename = "set")]
    pub candidate: LabelSet,
    pub intercept: f64,
    pub slope: f64,
    #[serde(skip)]
    pub prob: f64,
    #[serde(skip)]
    pub weight: f64,
}

impl Line {
    pub fn new(candidate: LabelSet, prob: f64, weight: f64, alpha: f64) -> Self {
        Line {
            candidate,
            intercept: weight * prob,
            slope: prob - (1.0 - alpha),
            prob,
            weight,
        }
    }

    /// Floating-point value at `mu`; comparisons elsewhere are exact.
    pub fn value_at(&self, mu: f64) -> f64 {
        self.intercept + self.slope * mu
    }

    pub(crate) fn coef(&self) -> Coef {
        Coef {
            intercept: self.intercept,
            slope: self.slope,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Validates one probability row: entries in `[0, 1]`, sum at most `1 + 1e-9`.
pub fn validate_row(row: &[f64], k: usize, index: usize) -> Result<()> {
    if row.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: row.len(),
        });
    }
    if let Some((j, v)) = row
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
    {
        return Err(Error::ProbabilityOutOfRange {
            row: index,
            reason: format!("p_{} = {v} is outside [0, 1]", j + 1),
        });
    }
    let total: f64 = row.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::ProbabilityOutOfRange {
            row: index,
            reason: format!("probabilities sum to {total}"),
        });
    }
    Ok(())
}

/// One line per candidate, with `prob` the summed class probabilities.
pub fn build_lines(
    prob_row: &[f64],
    family: &InformativeFamily,
    alpha: f64,
    candidates: &[LabelSet],
) -> Result<Vec<Line>> {
    check_alpha(alpha)?;
    validate_row(prob_row, family.k(), 0)?;
    candidates
        .iter()
        .map(|c| {
            let w = weight_of(family, c)?;
            Ok(Line::new(c.clone(), c.probability(prob_row), w, alpha))
        })
        .collect()
}

/// Whether `a` should represent a group of coincident lines instead of `b`.
fn preferred(a: &Line, b: &Line, mode: PolicyMode) -> bool {
    let by_weight = match mode {
        PolicyMode::Practical => a.weight.total_cmp(&b.weight),
        PolicyMode::Oracle => b.weight.total_cmp(&a.weight),
    };
    by_weight.then_with(|| a.candidate.cmp(&b.candidate)) == Ordering::Less
}

/// Sorts lines by slope and merges lines whose slope and intercept are both
/// within [`MERGE_TOLERANCE`], keeping the representative favoured by the
/// mode's tie rule.
pub(crate) fn canonical_lines(lines: &[Line], mode: PolicyMode) -> Vec<Line> {
    let mut sorted: Vec<&Line> = lines.iter().collect();
    sorted.sort_by(|a, b| {
        a.slope
            .total_cmp(&b.slope)
            .then(a.intercept.total_cmp(&b.intercept))
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
    let mut kept: Vec<Line> = Vec::with_capacity(sorted.len());
    for line in sorted {
        let mut merged = false;
        for rep in kept.iter_mut().rev() {
            if line.slope - rep.slope > MERGE_TOLERANCE {
                break;
            }
            if (line.intercept - rep.intercept).abs() <= MERGE_TOLERANCE {
                if preferred(line, rep, mode) {
                    *rep = line.clone();
                }
                merged = true;
                break;
            }
        }
        if !merged {
            kept.push(line.clone());
        }
    }
    // Replacing a representative can move its slope slightly.
    kept.sort_by(|a, b| a.slope.total_cmp(&b.slope).then(a.intercept.total_cmp(&b.intercept)));
    kept
}

/// One piece of an envelope: `line` is active on `[start, next start)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub start: f64,
    #[serde(flatten)]
    pub line: Line,
}

/// Upper envelope of a set of lines over the non-negative doubles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperEnvelope {
    segments: Vec<Segment>,
    zero_crossing: Option<f64>,
}

impl UpperEnvelope {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn zero_crossing(&self) -> Option<f64> {
        self.zero_crossing
    }

    /// Segment starts after the first one.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.start)
    }

    pub(crate) fn segment_index(&self, mu: f64) -> usize {
        self.segments.partition_point(|s| s.start <= mu) - 1
    }

    pub(crate) fn active(&self, mu: f64) -> &Line {
        &self.segments[self.segment_index(mu)].line
    }

    /// Right-continuous decision: the envelope is strictly positive at `mu`.
    pub(crate) fn decision(&self, mu: f64) -> bool {
        self.zero_crossing.is_none_or(|z| mu < z)
    }
}

/// Keeps the higher of two parallel lines; coincident lines follow the
/// practical tie rule.
fn parallel_winner(a: Line, b: Line) -> Line {
    match a.intercept.total_cmp(&b.intercept) {
        Ordering::Greater => a,
        Ordering::Less => b,
        Ordering::Equal => {
            if preferred(&b, &a, PolicyMode::Practical) {
                b
            } else {
                a
            }
        }
    }
}

fn push_hull(hull: &mut Vec<Line>, line: Line) {
    let line = match hull.last() {
        Some(top) if top.slope == line.slope => {
            let top = hull.pop().expect("nonempty");
            parallel_winner(top, line)
        }
        _ => line,
    };
    while hull.len() >= 2
        && exact::is_redundant(
            hull[hull.len() - 2].coef(),
            hull[hull.len() - 1].coef(),
            line.coef(),
        )
    {
        hull.pop();
    }
    hull.push(line);
}

/// Hull of the full lines (over all real `mu`), slopes strictly increasing.
fn hull_of(lines: &[Line]) -> Vec<Line> {
    if lines.len() == 1 {
        return vec![lines[0].clone()];
    }
    let mid = lines.len() / 2;
    let left = hull_of(&lines[..mid]);
    let right = hull_of(&lines[mid..]);
    let mut merged = Vec::with_capacity(left.len() + right.len());
    let (mut i, mut j) = (0, 0);
    while i < left.len() || j < right.len() {
        let take_left = j >= right.len()
            || (i < left.len() && left[i].slope.total_cmp(&right[j].slope) != Ordering::Greater);
        let next = if take_left {
            i += 1;
            left[i - 1].clone()
        } else {
            j += 1;
            right[j - 1].clone()
        };
        push_hull(&mut merged, next);
    }
    merged
}

/// Builds the upper envelope of `lines` on `[0, inf)`.
///
/// Coincident lines are merged first; among them the one with the smaller
/// weight, then the lexicographically smaller set, is kept.
pub fn upper_envelope(lines: &[Line]) -> Result<UpperEnvelope> {
    if lines.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = lines
        .iter()
        .find(|l| !(l.intercept.is_finite() && l.slope.is_finite()))
    {
        return Err(Error::NonFinite(format!("line for {}", bad.candidate)));
    }
    let canonical = canonical_lines(lines, PolicyMode::Practical);
    Ok(envelope_of_canonical(&canonical))
}

pub(crate) fn envelope_of_canonical(canonical: &[Line]) -> UpperEnvelope {
    let hull = hull_of(canonical);

    let mut segments: Vec<Segment> = Vec::with_capacity(hull.len());
    for line in hull {
        let mut start = 0.0;
        while let Some(last) = segments.last() {
            start = exact::ceil_breakpoint(last.line.coef(), line.coef());
            if start > last.start {
                break;
            }
            segments.pop();
            start = 0.0;
        }
        if start.is_infinite() {
            break;
        }
        segments.push(Segment { start, line });
    }

    let zero_crossing = zero_crossing_of_segments(&segments);
    UpperEnvelope {
        segments,
        zero_crossing,
    }
}

fn zero_crossing_of_segments(segments: &[Segment]) -> Option<f64> {
    let last = segments.last().expect("envelope has a segment");
    if last.line.slope >= 0.0 {
        return None;
    }
    for (k, seg) in segments.iter().enumerate() {
        let end = segments.get(k + 1).map_or(f64::INFINITY, |s| s.start);
        if exact::sign_at(seg.line.coef(), seg.start) != Ordering::Greater {
            return Some(seg.start);
        }
        let root = exact::ceil_root(seg.line.coef());
        if root < end {
            return Some(root);
        }
    }
    None
}

/// Envelope value and active line at `mu`, using the right-hand segment at
/// breakpoints.
pub fn evaluate_at(env: &UpperEnvelope, mu: f64) -> Result<(f64, &LabelSet)> {
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::NegativeMu(mu));
    }
    let line = env.active(mu);
    Ok((line.value_at(mu), &line.candidate))
}

/// Smallest `mu` at which the envelope is no longer positive. `None` when
/// the last segment does not slope downwards.
pub fn zero_crossing_of(env: &UpperEnvelope) -> Option<f64> {
    env.zero_crossing
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{build_family, FamilySpec};
    use crate::policy::reduce_candidates;
    use proptest::prelude::*;

    fn set(v: &[u32]) -> LabelSet {
        LabelSet::new(v.iter().copied()).unwrap()
    }

    fn small_family() -> InformativeFamily {
        build_family(
            FamilySpec::Cardinality {
                excluded: Default::default(),
                min_card: 1,
                max_card: 2,
            },
            3,
        )
        .unwrap()
    }

    fn all_lines(row: &[f64]) -> Vec<Line> {
        let f = small_family();
        build_lines(row, &f, 0.1, &f.enumerate()).unwrap()
    }

    #[test]
    fn line_coefficients() {
        let f = small_family();
        let l = build_lines(&[0.5, 0.3, 0.2], &f, 0.1, &[set(&[1]), set(&[1, 2])]).unwrap();
        assert!((l[0].intercept - 0.5).abs() < 1e-15);
        assert!((l[0].slope + 0.4).abs() < 1e-15);
        assert!((l[1].intercept - 0.4).abs() < 1e-15);
        assert!((l[1].slope + 0.1).abs() < 1e-15);
        let point = build_lines(&[1.0, 0.0, 0.0], &f, 0.1, &[set(&[1])]).unwrap();
        assert_eq!(point[0].intercept, 1.0);
        assert!((point[0].slope - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        let f = small_family();
        assert!(matches!(
            build_lines(&[0.7, 0.5, 0.0], &f, 0.1, &[set(&[1])]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
        assert!(matches!(
            build_lines(&[-0.1, 0.5, 0.0], &f, 0.1, &[set(&[1])]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
        assert!(matches!(
            build_lines(&[0.5, 0.5, 0.0], &f, 0.1, &[set(&[1, 2, 3])]),
            Err(Error::NotInFamily(_))
        ));
    }

    #[test]
    fn running_example_left_row() {
        let env = upper_envelope(&all_lines(&[0.5, 0.3, 0.2])).unwrap();
        let segs = env.segments();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].start, 0.0);
        assert_eq!(segs[0].line.candidate, set(&[1]));
        assert_eq!(segs[1].line.candidate, set(&[1, 2]));
        assert!((segs[1].start - 1.0 / 3.0).abs() <= 1e-12);
        let z = zero_crossing_of(&env).unwrap();
        assert!((z - 4.0).abs() <= 1e-12);

        let (v0, c0) = evaluate_at(&env, 0.0).unwrap();
        assert_eq!((v0, c0), (0.5, &set(&[1])));
        let bp = segs[1].start;
        let (v, c) = evaluate_at(&env, bp).unwrap();
        assert_eq!(c, &set(&[1, 2]));
        assert!((v - (0.5 - 0.4 / 3.0)).abs() < 1e-12);
        let (vz, cz) = evaluate_at(&env, z).unwrap();
        assert_eq!(cz, &set(&[1, 2]));
        assert!(vz.abs() < 1e-12);
        assert!(matches!(evaluate_at(&env, -1.0), Err(Error::NegativeMu(_))));
    }

    #[test]
    fn running_example_right_row() {
        let env = upper_envelope(&all_lines(&[0.7, 0.25, 0.05])).unwrap();
        let segs = env.segments();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].line.candidate, set(&[1]));
        assert_eq!(segs[1].line.candidate, set(&[1, 2]));
        assert!((segs[1].start - 0.9).abs() <= 1e-12);
        assert_eq!(zero_crossing_of(&env), None);
    }

    #[test]
    fn degenerate_envelopes() {
        let f = small_family();
        let one = build_lines(&[0.5, 0.3, 0.2], &f, 0.1, &[set(&[2])]).unwrap();
        let env = upper_envelope(&one).unwrap();
        assert_eq!(env.segments().len(), 1);
        assert!(matches!(upper_envelope(&[]), Err(Error::EmptyInput)));

        let zeros = upper_envelope(&all_lines(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(zero_crossing_of(&zeros), Some(0.0));
        // all six lines coincide; smaller weight wins, then lexicographic order
        assert_eq!(zeros.segments().len(), 1);
        assert_eq!(zeros.segments()[0].line.candidate, set(&[1, 2]));
    }

    #[test]
    fn horizontal_last_line() {
        let f = small_family();
        // p({1,2}) = 0.9 exactly 1 - alpha after rounding is not guaranteed,
        // so build the horizontal line directly
        let mut lines = build_lines(&[0.6, 0.3, 0.1], &f, 0.1, &[set(&[1])]).unwrap();
        lines.push(Line {
            candidate: set(&[1, 2]),
            intercept: 0.45,
            slope: 0.0,
            prob: 0.9,
            weight: 0.5,
        });
        let env = upper_envelope(&lines).unwrap();
        assert_eq!(env.segments().last().unwrap().line.slope, 0.0);
        assert_eq!(zero_crossing_of(&env), None);
    }

    #[test]
    fn reduced_lines_give_same_envelope() {
        let f = small_family();
        let row = [0.5, 0.3, 0.2];
        let reduced = reduce_candidates(&row, &f);
        let a = upper_envelope(&build_lines(&row, &f, 0.1, &reduced).unwrap()).unwrap();
        let b = upper_envelope(&all_lines(&row)).unwrap();
        assert_eq!(a, b);
    }

    fn arb_lines() -> impl Strategy<Value = Vec<Line>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..64).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (a, b))| Line {
                    candidate: LabelSet::new([i as u32 + 1]).unwrap(),
                    intercept: a,
                    slope: b,
                    prob: 0.5,
                    weight: 1.0,
                })
                .collect()
        })
    }

    fn brute_max(lines: &[Line], mu: f64) -> f64 {
        lines.iter().map(|l| l.value_at(mu)).fold(f64::NEG_INFINITY, f64::max)
    }

    proptest! {
        #[test]
        fn envelope_is_pointwise_max(lines in arb_lines(), mus in prop::collection::vec(0.0f64..100.0, 32)) {
            let env = upper_envelope(&lines).unwrap();
            prop_assert!(env.segments().len() <= lines.len());
            for mu in mus {
                let (v, _) = evaluate_at(&env, mu).unwrap();
                let m = brute_max(&lines, mu);
                prop_assert!((v - m).abs() <= 1e-9 * (1.0 + m.abs()), "mu {} env {} max {}", mu, v, m);
            }
        }

        #[test]
        fn envelope_shape(lines in arb_lines()) {
            let env = upper_envelope(&lines).unwrap();
            let segs = env.segments();
            prop_assert_eq!(segs[0].start, 0.0);
            for w in segs.windows(2) {
                prop_assert!(w[0].start < w[1].start);
                prop_assert!(w[0].line.slope <= w[1].line.slope);
                prop_assert!(w[0].line.intercept >= w[1].line.intercept);
                let b = w[1].start;
                prop_assert!((w[0].line.value_at(b) - w[1].line.value_at(b)).abs() < 1e-9 * (1.0 + b));
            }
            let max_slope = lines.iter().map(|l| l.slope).fold(f64::NEG_INFINITY, f64::max);
            let last = &segs.last().unwrap().line;
            prop_assert!((last.slope - max_slope).abs() <= MERGE_TOLERANCE);
            let top = lines.iter().filter(|l| l.slope == max_slope).map(|l| l.intercept).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(last.intercept >= top - MERGE_TOLERANCE);
        }

        #[test]
        fn envelope_is_convex(lines in arb_lines(), a in 0.0f64..100.0, b in 0.0f64..100.0, t in 0.0f64..1.0) {
            let env = upper_envelope(&lines).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let mid = lo + t * (hi - lo);
            let f = |m: f64| evaluate_at(&env, m).unwrap().0;
            let chord = f(lo) + t * (f(hi) - f(lo));
            prop_assert!(f(mid) <= chord + 1e-9 * (1.0 + chord.abs()));
        }

        #[test]
        fn zero_crossing_is_first_nonpositive(lines in arb_lines()) {
            let env = upper_envelope(&lines).unwrap();
            if let Some(z) = zero_crossing_of(&env) {
                prop_assert!(env.active(z).value_at(z) <= 1e-12);
                if z > 0.0 {
                    let before = z.next_down();
                    prop_assert_eq!(
                        exact::sign_at(env.active(before).coef(), before),
                        Ordering::Greater
                    );
                }
            }
        }
    }
}
