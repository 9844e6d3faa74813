//! Label-shift correction by vector scaling: per-class offsets `b` added to
//! the log probabilities of a model trained under different class priors,
//! fitted by maximum likelihood on labelled target data with `sum(b) = 0`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{validate_labels, ProbabilityMatrix};
use crate::error::{Error, Result};

/// Lower clip for log probabilities of zero-probability classes.
pub const LOG_FLOOR: f64 = -30.0;

/// Largest Newton step, in any coordinate, accepted at convergence.
const NEWTON_STEP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftCoefficients {
    pub b: Vec<f64>,
    pub converged: bool,
    #[serde(rename = "grad_norm")]
    pub final_gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop once the gradient, projected onto `sum(b) = 0`, is this small.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Box bound on every coefficient.
    pub bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 10_000,
            bound: 15.0,
        }
    }
}

/// Negative log-likelihood of labelled logit rows as a function of `b`.
#[derive(Debug, Clone)]
pub struct ShiftObjective {
    k: usize,
    logits: Vec<f64>,
    counts: Vec<f64>,
    labels: Vec<u32>,
}

/// Natural logs of a probability row, clipped below at [`LOG_FLOOR`].
pub fn log_row(prob_row: &[f64]) -> Vec<f64> {
    prob_row.iter().map(|&p| p.ln().max(LOG_FLOOR)).collect()
}

fn softmax_into(out: &mut [f64], z: &[f64], b: &[f64]) {
    let top = z
        .iter()
        .zip(b)
        .map(|(z, b)| z + b)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for ((o, z), b) in out.iter_mut().zip(z).zip(b) {
        *o = (z + b - top).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_sum_exp(z: &[f64], b: &[f64]) -> f64 {
    let top = z
        .iter()
        .zip(b)
        .map(|(z, b)| z + b)
        .fold(f64::NEG_INFINITY, f64::max);
    top + z
        .iter()
        .zip(b)
        .map(|(z, b)| (z + b - top).exp())
        .sum::<f64>()
        .ln()
}

impl ShiftObjective {
    /// Row-major `logits` with `k` columns and 1-based labels.
    pub fn from_logits(k: usize, logits: Vec<f64>, labels: &[u32]) -> Result<Self> {
        if k == 0 || logits.len() != k * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: k * labels.len(),
                got: logits.len(),
            });
        }
        if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!(
                "logit at row {}, class {}",
                i / k,
                i % k + 1
            )));
        }
        validate_labels(labels, k)?;
        let mut counts = vec![0.0; k];
        for &y in labels {
            counts[y as usize - 1] += 1.0;
        }
        Ok(ShiftObjective {
            k,
            logits,
            counts,
            labels: labels.to_vec(),
        })
    }

    pub fn from_probabilities(probs: &ProbabilityMatrix, labels: &[u32]) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: probs.len(),
                got: labels.len(),
            });
        }
        let logits = probs.rows().flat_map(log_row).collect();
        Self::from_logits(probs.k(), logits, labels)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self, b: &[f64]) -> f64 {
        self.logits
            .chunks_exact(self.k)
            .zip(&self.labels)
            .map(|(z, &y)| {
                let j = y as usize - 1;
                log_sum_exp(z, b) - z[j] - b[j]
            })
            .sum()
    }

    /// Gradient in `b`, projected onto the zero-sum hyperplane.
    pub fn gradient(&self, b: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.counts.iter().map(|c| -c).collect();
        let mut s = vec![0.0; self.k];
        for z in self.logits.chunks_exact(self.k) {
            softmax_into(&mut s, z, b);
            for (g, s) in g.iter_mut().zip(&s) {
                *g += s;
            }
        }
        project(&mut g);
        g
    }

    /// Gradient and Hessian in the first `k - 1` coordinates, the last one
    /// being minus their sum.
    fn reduced_derivatives(&self, b: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let k = self.k;
        let mut g = DVector::from_iterator(k, self.counts.iter().map(|c| -c));
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut s = vec![0.0; k];
        for z in self.logits.chunks_exact(k) {
            softmax_into(&mut s, z, b);
            for i in 0..k {
                g[i] += s[i];
                h[(i, i)] += s[i];
                for j in 0..k {
                    h[(i, j)] -= s[i] * s[j];
                }
            }
        }
        let r = k - 1;
        let reduced_g = DVector::from_fn(r, |i, _| g[i] - g[r]);
        let reduced_h = DMatrix::from_fn(r, r, |i, j| h[(i, j)] - h[(i, r)] - h[(r, j)] + h[(r, r)]);
        (reduced_g, reduced_h)
    }
}

fn project(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn expand(c: &DVector<f64>) -> Vec<f64> {
    let mut b: Vec<f64> = c.iter().copied().collect();
    b.push(-c.sum());
    b
}

/// Largest step in `[0, 1]` along `direction` that keeps every coefficient
/// within the box.
fn feasible_step(b: &[f64], direction: &[f64], bound: f64) -> f64 {
    b.iter()
        .zip(direction)
        .map(|(&x, &d)| {
            if d > 0.0 {
                (bound - x) / d
            } else if d < 0.0 {
                (-bound - x) / d
            } else {
                f64::INFINITY
            }
        })
        .fold(1.0, f64::min)
        .max(0.0)
}

fn stalled(iterations: usize, grad_norm: f64, b: Vec<f64>) -> Error {
    Error::DidNotConverge {
        iterations,
        grad_norm,
        best: ShiftCoefficients {
            b,
            converged: false,
            final_gradient_norm: grad_norm,
        },
    }
}

/// Minimizes the objective with damped Newton steps in reduced coordinates,
/// starting from `b = 0`.
pub fn minimize(objective: &ShiftObjective, options: &FitOptions) -> Result<ShiftCoefficients> {
    let k = objective.k;
    if k == 1 {
        return Ok(ShiftCoefficients {
            b: vec![0.0],
            converged: true,
            final_gradient_norm: 0.0,
        });
    }
    let mut c = DVector::<f64>::zeros(k - 1);
    let mut b = expand(&c);
    let mut value = objective.value(&b);
    let mut iterations = 0;
    loop {
        let grad_norm = norm(&objective.gradient(&b));
        let (g, mut h) = objective.reduced_derivatives(&b);
        let mut ridge = 0.0;
        let step = loop {
            if let Some(chol) = h.clone().cholesky() {
                break -chol.solve(&g);
            }
            let bump = if ridge == 0.0 { 1e-10 * (1.0 + h.norm()) } else { ridge * 9.0 };
            for i in 0..k - 1 {
                h[(i, i)] += bump;
            }
            ridge += bump;
        };
        // A small gradient alone is not enough: when a class never occurs the
        // gradient decays exponentially while the Newton step stays large.
        if grad_norm <= options.tolerance && step.amax() <= NEWTON_STEP_TOLERANCE {
            return Ok(ShiftCoefficients {
                b,
                converged: true,
                final_gradient_norm: grad_norm,
            });
        }
        if iterations >= options.max_iterations {
            return Err(stalled(iterations, grad_norm, b));
        }
        iterations += 1;

        let direction = expand(&step);
        let mut t = feasible_step(&b, &direction, options.bound);
        if t < 1e-12 {
            return Err(stalled(iterations, grad_norm, b));
        }
        let slope = g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let trial_c = &c + &step * t;
            let trial_b = expand(&trial_c);
            let trial = objective.value(&trial_b);
            let sufficient = trial <= value + 1e-4 * t * slope;
            // Near the optimum the decrease can fall below rounding of the
            // objective; fall back to progress in the gradient.
            let flat = (trial - value).abs() <= 1e-12 * value.abs().max(1.0)
                && norm(&objective.gradient(&trial_b)) < grad_norm;
            if sufficient || flat {
                c = trial_c;
                b = trial_b;
                value = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(stalled(iterations, grad_norm, b));
        }
    }
}

/// Fits shift coefficients on probability rows and their labels.
pub fn fit_vector_scaling(
    probs: &ProbabilityMatrix,
    labels: &[u32],
    options: &FitOptions,
) -> Result<ShiftCoefficients> {
    if probs.len() < probs.k() {
        return Err(Error::InvalidConfig(format!(
            "vector scaling needs at least {} rows, got {}",
            probs.k(),
            probs.len()
        )));
    }
    minimize(&ShiftObjective::from_probabilities(probs, labels)?, options)
}

/// Softmax of `log p + b`; zero probabilities stay zero.
pub fn apply_vector_scaling(prob_row: &[f64], coeffs: &ShiftCoefficients) -> Result<Vec<f64>> {
    if prob_row.len() != coeffs.b.len() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.b.len(),
            got: prob_row.len(),
        });
    }
    let weighted: Vec<f64> = prob_row
        .iter()
        .zip(&coeffs.b)
        .map(|(&p, &b)| p * b.exp())
        .collect();
    let total: f64 = weighted.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite("rescaled probability row".into()));
    }
    Ok(weighted.into_iter().map(|w| w / total).collect())
}

/// Rescales every row of a matrix.
pub fn apply_to_matrix(
    probs: &ProbabilityMatrix,
    coeffs: &ShiftCoefficients,
) -> Result<ProbabilityMatrix> {
    let rows = probs
        .rows()
        .map(|r| apply_vector_scaling(r, coeffs))
        .collect::<Result<Vec<_>>>()?;
    Ok(probs.map_rows({
        let mut it = rows.into_iter();
        move |_| it.next().expect("one output per row")
    }))
}

/// Seeded partition of `0..n` into a fitting part of `floor(fraction n)`
/// indices and the rest, both in increasing order.
pub fn split_for_shift(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let size = (fraction * n as f64).floor() as usize;
    if size == 0 || size == n {
        return Err(Error::TooFew { n, fraction });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fit = order[..size].to_vec();
    let mut rest = order[size..].to_vec();
    fit.sort_unstable();
    rest.sort_unstable();
    Ok((fit, rest))
}
