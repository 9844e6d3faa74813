//! The population problem on a finite atomic model: power, constraint and
//! mFCR of the envelope policy at a multiplier, the smallest feasible
//! multiplier, the two-point randomized policy that makes the constraint
//! tight, and the fallback policy for the degenerate regime.
//!
//! Policies are evaluated with the right-continuous practical conventions,
//! which always attain the minimum on atomic inputs.

use serde::{Deserialize, Serialize};

use crate::envelope::{check_alpha, envelope_of_canonical, validate_row, Line};
use crate::error::{Error, Result};
use crate::family::{InformativeFamily, LabelSet};
use crate::policy::{reduce_candidates, row_lines, scan, PolicyMode};
use crate::selector::mu_serde;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub probs: Vec<f64>,
}

/// A distribution over finitely many covariate values, each carrying its
/// true class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicModel {
    atoms: Vec<Atom>,
}

impl AtomicModel {
    /// Masses must be positive and sum to one within `1e-12`; rows must be
    /// probability vectors within `1e-9`.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidModel("no atoms".into()));
        }
        let k = atoms[0].probs.len();
        for (i, a) in atoms.iter().enumerate() {
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::InvalidModel(format!("atom {i} has mass {}", a.mass)));
            }
            if a.probs.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: a.probs.len(),
                });
            }
            validate_row(&a.probs, k, i)?;
            let total: f64 = a.probs.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "atom {i} probabilities sum to {total}"
                )));
            }
        }
        let mass: f64 = atoms.iter().map(|a| a.mass).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("masses sum to {mass}")));
        }
        Ok(AtomicModel { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn k(&self) -> usize {
        self.atoms[0].probs.len()
    }
}

/// Population quantities of a (possibly randomized) policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub power: f64,
    pub constraint: f64,
    pub mfcr: f64,
    /// Probability that an example is selected.
    pub selected_mass: f64,
    /// Expected miscoverage among selections, unnormalized.
    pub miscoverage_mass: f64,
}

impl Functionals {
    fn mix(self, other: Functionals, q: f64) -> Functionals {
        let lerp = |a: f64, b: f64| q * a + (1.0 - q) * b;
        let selected_mass = lerp(self.selected_mass, other.selected_mass);
        let miscoverage_mass = lerp(self.miscoverage_mass, other.miscoverage_mass);
        Functionals {
            power: lerp(self.power, other.power),
            constraint: lerp(self.constraint, other.constraint),
            mfcr: ratio_or_zero(miscoverage_mass, selected_mass),
            selected_mass,
            miscoverage_mass,
        }
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Functionals of an explicit per-atom assignment; `None` means not selected.
pub fn policy_functionals(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    assignment: &[Option<LabelSet>],
) -> Result<Functionals> {
    if assignment.len() != model.atoms.len() {
        return Err(Error::DimensionMismatch {
            expected: model.atoms.len(),
            got: assignment.len(),
        });
    }
    let (mut power, mut constraint, mut miscoverage, mut selected) = (0.0, 0.0, 0.0, 0.0);
    for (atom, choice) in model.atoms.iter().zip(assignment) {
        if let Some(set) = choice {
            let p = set.probability(&atom.probs);
            let w = crate::family::weight_of(family, set)?;
            power += atom.mass * w * p;
            constraint += atom.mass * (1.0 - p - alpha);
            miscoverage += atom.mass * (1.0 - p);
            selected += atom.mass;
        }
    }
    Ok(Functionals {
        power,
        constraint,
        mfcr: ratio_or_zero(miscoverage, selected),
        selected_mass: selected,
        miscoverage_mass: miscoverage,
    })
}

fn atom_lines(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Vec<Vec<Line>>> {
    check_alpha(alpha)?;
    if model.k() != family.k() {
        return Err(Error::DimensionMismatch {
            expected: family.k(),
            got: model.k(),
        });
    }
    model
        .atoms
        .iter()
        .map(|a| row_lines(&a.probs, family, alpha, PolicyMode::Practical))
        .collect()
}

fn assignment_at(lines: &[Vec<Line>], mu: f64) -> Vec<Option<LabelSet>> {
    lines
        .iter()
        .map(|l| {
            let (line, d) = scan(l, mu, PolicyMode::Practical);
            d.then(|| line.candidate.clone())
        })
        .collect()
}

/// The envelope policy's set and decision for every atom at `mu`.
pub fn envelope_policy(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    mu: f64,
) -> Result<Vec<Option<LabelSet>>> {
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::NegativeMu(mu));
    }
    Ok(assignment_at(&atom_lines(model, family, alpha)?, mu))
}

/// Power, constraint and mFCR of the envelope policy at `mu`.
pub fn oracle_functionals(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    mu: f64,
) -> Result<Functionals> {
    let assignment = envelope_policy(model, family, alpha, mu)?;
    policy_functionals(model, family, alpha, &assignment)
}

/// Largest coverage probability over the family for one probability row.
pub fn top_coverage(probs: &[f64], family: &InformativeFamily) -> f64 {
    reduce_candidates(probs, family)
        .iter()
        .map(|c| c.probability(probs))
        .fold(0.0, f64::max)
}

/// `1 - (1 - selected_mass)^m`: the chance that at least one of `m` test
/// examples is selected.
pub fn fcr_factor(selected_mass: f64, m: usize) -> f64 {
    1.0 - (1.0 - selected_mass).powi(m as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    #[serde(with = "mu_serde")]
    pub mu_star: f64,
    pub power: f64,
    pub constraint: f64,
    pub mfcr: f64,
    pub selected_mass: f64,
    /// Probability of at least one selection among `test_size` examples.
    pub fcr_factor: f64,
    pub fcr: f64,
    pub test_size: usize,
}

/// Sorted distinct event multipliers: zero, every breakpoint and every zero
/// crossing of the atoms' envelopes.
fn events(lines: &[Vec<Line>]) -> Vec<f64> {
    let mut out = vec![0.0];
    for l in lines {
        let env = envelope_of_canonical(l);
        out.extend(env.breakpoints());
        out.extend(env.zero_crossing());
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| a.to_bits() == b.to_bits());
    out
}

fn check_regime(model: &AtomicModel, family: &InformativeFamily, alpha: f64) -> Result<()> {
    let informative: f64 = model
        .atoms
        .iter()
        .filter(|a| top_coverage(&a.probs, family) > 1.0 - alpha)
        .map(|a| a.mass)
        .sum();
    if informative > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateRegime)
    }
}

/// Smallest event multiplier at which the envelope policy is feasible,
/// with its functionals and the FCR for `test_size` test examples.
pub fn solve_mu_star(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    test_size: usize,
) -> Result<OracleReport> {
    let lines = atom_lines(model, family, alpha)?;
    check_regime(model, family, alpha)?;
    if test_size == 0 {
        return Err(Error::EmptyTest);
    }
    for mu in events(&lines) {
        let f = policy_functionals(model, family, alpha, &assignment_at(&lines, mu))?;
        if f.constraint <= 0.0 {
            let factor = fcr_factor(f.selected_mass, test_size);
            return Ok(OracleReport {
                mu_star: mu,
                power: f.power,
                constraint: f.constraint,
                mfcr: f.mfcr,
                selected_mass: f.selected_mass,
                fcr_factor: factor,
                fcr: f.mfcr * factor,
                test_size,
            });
        }
    }
    unreachable!("the policy after the last event only selects atoms with top coverage >= 1 - alpha")
}

/// Weight `q` on the left policy so that `q * g_minus + (1 - q) * g_plus = 0`.
pub fn mixing_weight(g_minus: f64, g_plus: f64) -> Result<f64> {
    if !(g_minus > 0.0 && g_plus <= 0.0) {
        return Err(Error::InvalidBracket { g_minus, g_plus });
    }
    Ok(-g_plus / (g_minus - g_plus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    pub mu_star: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// Probability of following the policy at `mu_minus`.
    pub q: f64,
    pub g_minus: f64,
    pub g_plus: f64,
    pub mixture: Functionals,
}

/// Mixes the envelope policies just left and right of `mu_star` so that the
/// constraint holds with equality.
///
/// `epsilon` defaults to half the distance from `mu_star` to the nearest
/// other event.
pub fn randomized_policy(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    epsilon: Option<f64>,
) -> Result<RandomizedPolicy> {
    let lines = atom_lines(model, family, alpha)?;
    let report = solve_mu_star(model, family, alpha, 1)?;
    let mu_star = report.mu_star;
    let ev = events(&lines);
    let pos = ev
        .iter()
        .position(|e| e.to_bits() == mu_star.to_bits())
        .expect("mu_star is an event");
    let eps = match epsilon {
        Some(e) => e,
        None => {
            let left = if pos > 0 { mu_star - ev[pos - 1] } else { f64::INFINITY };
            let right = ev.get(pos + 1).map_or(f64::INFINITY, |r| r - mu_star);
            0.5 * left.min(right)
        }
    };
    let at = |mu: f64| policy_functionals(model, family, alpha, &assignment_at(&lines, mu));
    if !(eps > 0.0 && eps.is_finite() && mu_star - eps >= 0.0) {
        let g = at(mu_star)?.constraint;
        return Err(Error::InvalidBracket {
            g_minus: g,
            g_plus: g,
        });
    }
    let (mu_minus, mu_plus) = (mu_star - eps, mu_star + eps);
    let left = at(mu_minus)?;
    let right = at(mu_plus)?;
    let q = mixing_weight(left.constraint, right.constraint)?;
    Ok(RandomizedPolicy {
        mu_star,
        mu_minus,
        mu_plus,
        q,
        g_minus: left.constraint,
        g_plus: right.constraint,
        mixture: left.mix(right, q),
    })
}

/// The policy for the degenerate regime: the most probable set (larger
/// weight on ties), selected when its coverage is at least `1 - alpha`.
pub fn trivial_policy(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Vec<(LabelSet, bool)>> {
    check_alpha(alpha)?;
    model
        .atoms
        .iter()
        .map(|a| {
            let mut best: Option<(LabelSet, f64, f64)> = None;
            for c in reduce_candidates(&a.probs, family) {
                let p = c.probability(&a.probs);
                let w = crate::family::weight_of(family, &c)?;
                let better = match &best {
                    None => true,
                    Some((bc, bp, bw)) => {
                        p > *bp || (p == *bp && (w > *bw || (w == *bw && c < *bc)))
                    }
                };
                if better {
                    best = Some((c, p, w));
                }
            }
            let (set, p, _) = best.expect("family is nonempty");
            Ok((set, p >= 1.0 - alpha))
        })
        .collect()
}

/// FCR of the envelope policy at `mu` with `m` test examples, and the factor
/// relating it to the mFCR.
pub fn fcr_from_mfcr(
    model: &AtomicModel,
    family: &InformativeFamily,
    alpha: f64,
    mu: f64,
    m: usize,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Err(Error::EmptyTest);
    }
    let f = oracle_functionals(model, family, alpha, mu)?;
    let factor = fcr_factor(f.selected_mass, m);
    Ok((f.mfcr * factor, factor))
}
