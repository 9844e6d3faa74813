//! Exact sign predicates for lines `intercept + slope * mu` with `f64`
//! coefficients.
//!
//! Each predicate first tries a plain floating-point evaluation with a
//! forward error bound. When the result is too close to call it falls back
//! to error-free transformations (two-sum / fused two-product) accumulated
//! into a nonoverlapping expansion, and finally to arbitrary-precision
//! rationals when the expansion could have overflowed or underflowed.
//!
//! Breakpoints and roots are returned as the smallest `f64` at or after which
//! the relation holds, so that every consumer sees the same switch points.

use std::cmp::Ordering;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coef {
    pub intercept: f64,
    pub slope: f64,
}

const UNIT: f64 = f64::EPSILON * 0.5;
const FILTER_FACTOR: f64 = 8.0 * UNIT;
const ABS_SLACK: f64 = 1e-300;
/// Products below this magnitude may lose their error term to underflow.
const PRODUCT_FLOOR: f64 = 1e-250;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> Option<(f64, f64)> {
    let p = a * b;
    if a != 0.0 && b != 0.0 && p.abs() < PRODUCT_FLOOR {
        return None;
    }
    Some((p, a.mul_add(b, -p)))
}

/// Exact sign of the sum of `terms`, or `None` if intermediate values left
/// the finite range.
fn expansion_sign(terms: &[f64]) -> Option<Ordering> {
    let mut expansion: Vec<f64> = Vec::with_capacity(terms.len() + 1);
    for &t in terms {
        let mut q = t;
        let mut next = Vec::with_capacity(expansion.len() + 1);
        for &e in &expansion {
            let (s, err) = two_sum(q, e);
            if err != 0.0 {
                next.push(err);
            }
            q = s;
        }
        if q != 0.0 {
            next.push(q);
        }
        expansion = next;
    }
    if expansion.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(match expansion.last() {
        None => Ordering::Equal,
        Some(&top) => top.partial_cmp(&0.0).unwrap_or(Ordering::Equal),
    })
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite coefficient")
}

fn rational_sign(v: &BigRational) -> Ordering {
    if v.is_zero() {
        Ordering::Equal
    } else if v.is_positive() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

fn filtered(value: f64, magnitude: f64) -> Option<Ordering> {
    if !value.is_finite() || !magnitude.is_finite() {
        return None;
    }
    let bound = FILTER_FACTOR * magnitude + ABS_SLACK;
    if value > bound {
        Some(Ordering::Greater)
    } else if value < -bound {
        Some(Ordering::Less)
    } else {
        None
    }
}

/// Sign of `p(mu) - q(mu)`.
pub(crate) fn cmp_at(p: Coef, q: Coef, mu: f64) -> Ordering {
    debug_assert!(mu.is_finite() && mu >= 0.0);
    let value = (p.intercept - q.intercept) + (p.slope - q.slope) * mu;
    let magnitude =
        (p.intercept.abs() + q.intercept.abs()) + (p.slope.abs() + q.slope.abs()) * mu;
    if let Some(o) = filtered(value, magnitude) {
        return o;
    }
    if let Some(o) = cmp_at_expansion(p, q, mu) {
        return o;
    }
    let v = (rational(p.intercept) - rational(q.intercept))
        + (rational(p.slope) - rational(q.slope)) * rational(mu);
    rational_sign(&v)
}

fn cmp_at_expansion(p: Coef, q: Coef, mu: f64) -> Option<Ordering> {
    let (s1, e1) = two_sum(p.intercept, -q.intercept);
    let (s2, e2) = two_sum(p.slope, -q.slope);
    let (a1, b1) = two_prod(s2, mu)?;
    let (a2, b2) = two_prod(e2, mu)?;
    expansion_sign(&[e1, s1, b2, a2, b1, a1])
}

/// Sign of `line(mu)`.
pub(crate) fn sign_at(line: Coef, mu: f64) -> Ordering {
    cmp_at(
        line,
        Coef {
            intercept: 0.0,
            slope: 0.0,
        },
        mu,
    )
}

/// For lines with strictly increasing slopes `a < b < c`, whether `b` never
/// rises strictly above `max(a, c)`.
pub(crate) fn is_redundant(a: Coef, b: Coef, c: Coef) -> bool {
    // b is redundant iff (ia - ic)(sb - sa) - (ia - ib)(sc - sa) <= 0
    let d1 = a.intercept - c.intercept;
    let d2 = b.slope - a.slope;
    let d3 = a.intercept - b.intercept;
    let d4 = c.slope - a.slope;
    let value = d1 * d2 - d3 * d4;
    let magnitude = (a.intercept.abs() + c.intercept.abs()) * (b.slope.abs() + a.slope.abs())
        + (a.intercept.abs() + b.intercept.abs()) * (c.slope.abs() + a.slope.abs());
    let sign = filtered(value, magnitude)
        .or_else(|| redundancy_expansion(a, b, c))
        .unwrap_or_else(|| {
            let v = (rational(a.intercept) - rational(c.intercept))
                * (rational(b.slope) - rational(a.slope))
                - (rational(a.intercept) - rational(b.intercept))
                    * (rational(c.slope) - rational(a.slope));
            rational_sign(&v)
        });
    sign != Ordering::Greater
}

fn redundancy_expansion(a: Coef, b: Coef, c: Coef) -> Option<Ordering> {
    let d1 = two_sum(a.intercept, -c.intercept);
    let d2 = two_sum(b.slope, -a.slope);
    let d3 = two_sum(a.intercept, -b.intercept);
    let d4 = two_sum(c.slope, -a.slope);
    let mut terms = Vec::with_capacity(16);
    for (x, y, sign) in [(d1, d2, 1.0), (d3, d4, -1.0)] {
        for u in [x.0, x.1] {
            for v in [y.0, y.1] {
                let (p, e) = two_prod(u, v)?;
                terms.push(sign * e);
                terms.push(sign * p);
            }
        }
    }
    expansion_sign(&terms)
}

/// Smallest `mu` among non-negative finite doubles for which `pred` holds,
/// given that `pred` is monotone (false then true). Returns `INFINITY` when
/// it fails at `f64::MAX`.
fn smallest_true(guess: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(0.0) {
        return 0.0;
    }
    let max_bits = f64::MAX.to_bits();
    if !pred(f64::MAX) {
        return f64::INFINITY;
    }
    let at = |bits: u64| pred(f64::from_bits(bits));
    let g = if guess.is_finite() && guess > 0.0 {
        guess.to_bits().min(max_bits)
    } else if guess.is_nan() || guess <= 0.0 {
        0
    } else {
        max_bits
    };
    // Invariant: at(lo) is false, at(hi) is true.
    let (mut lo, mut hi);
    if at(g) {
        hi = g;
        let mut step = 1u64;
        loop {
            let cand = hi.saturating_sub(step);
            if cand == 0 {
                lo = 0;
                break;
            }
            if at(cand) {
                hi = cand;
                step = step.saturating_mul(2);
            } else {
                lo = cand;
                break;
            }
        }
    } else {
        lo = g;
        let mut step = 1u64;
        loop {
            let cand = lo.saturating_add(step).min(max_bits);
            if at(cand) {
                hi = cand;
                break;
            }
            lo = cand;
            step = step.saturating_mul(2);
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    f64::from_bits(hi)
}

/// Smallest double `mu >= 0` from which the steeper of the two lines is at
/// least the other. Returns `INFINITY` for parallel lines or when the switch
/// lies beyond the finite range.
pub(crate) fn ceil_breakpoint(p: Coef, q: Coef) -> f64 {
    let (lo, hi) = match p.slope.partial_cmp(&q.slope) {
        Some(Ordering::Less) => (p, q),
        Some(Ordering::Greater) => (q, p),
        _ => return f64::INFINITY,
    };
    let guess = (lo.intercept - hi.intercept) / (hi.slope - lo.slope);
    smallest_true(guess, |mu| cmp_at(hi, lo, mu) != Ordering::Less)
}

/// Smallest double `mu >= 0` with `line(mu) <= 0`, or `INFINITY` if none.
pub(crate) fn ceil_root(line: Coef) -> f64 {
    if sign_at(line, 0.0) != Ordering::Greater {
        return 0.0;
    }
    if line.slope >= 0.0 {
        return f64::INFINITY;
    }
    let guess = -line.intercept / line.slope;
    smallest_true(guess, |mu| sign_at(line, mu) != Ordering::Greater)
}
