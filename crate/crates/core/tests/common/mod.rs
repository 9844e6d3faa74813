//! Instance generators and exact reference computations shared by the
//! integration test targets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use infosel::data::ProbabilityMatrix;
use infosel::family::{build_family, FamilySpec, InformativeFamily};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::FromPrimitive;
use rand::Rng;

pub const ALPHAS: [f64; 3] = [0.05, 0.1, 0.2];

/// A probability row with entries on the `1/grid` lattice. `sharpness`
/// above one concentrates mass on few classes.
pub fn grid_row(rng: &mut impl Rng, k: usize, grid: u32, sharpness: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k)
        .map(|_| rng.random::<f64>().powf(sharpness) + 1e-9)
        .collect();
    let total: f64 = raw.iter().sum();
    let scaled: Vec<f64> = raw.iter().map(|r| r / total * grid as f64).collect();
    let mut counts: Vec<u32> = scaled.iter().map(|s| s.floor() as u32).collect();
    let mut left = grid - counts.iter().sum::<u32>();
    // Largest remainder, so the counts sum to the grid exactly.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (scaled[b] - scaled[b].floor()).total_cmp(&(scaled[a] - scaled[a].floor())));
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    counts.iter().map(|&c| c as f64 / grid as f64).collect()
}

pub fn sample_label(rng: &mut impl Rng, row: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j as u32 + 1;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32 + 1
}

/// A random cardinality-based family: optionally one excluded class, and a
/// random size window.
pub fn random_cardinality_family(rng: &mut impl Rng, k: usize) -> InformativeFamily {
    let excluded: BTreeSet<u32> = if rng.random_bool(0.4) {
        BTreeSet::from([rng.random_range(1..=k as u32)])
    } else {
        BTreeSet::new()
    };
    let allowed = k - excluded.len();
    let max_card = rng.random_range(1..=allowed.min(k - 1));
    let min_card = rng.random_range(1..=max_card);
    build_family(
        FamilySpec::Cardinality {
            excluded,
            min_card,
            max_card,
        },
        k,
    )
    .expect("window is valid")
}

/// Calibration rows, their labels and test rows.
pub struct Instance {
    pub k: usize,
    pub alpha: f64,
    pub cal: ProbabilityMatrix,
    pub labels: Vec<u32>,
    pub test: ProbabilityMatrix,
}

/// Rows on the 1/1000 grid with labels drawn from the rows themselves.
pub fn random_instance(rng: &mut impl Rng, k: usize) -> Instance {
    let n = rng.random_range(20..=100);
    let m = rng.random_range(20..=100);
    let alpha = ALPHAS[rng.random_range(0..ALPHAS.len())];
    let sharpness = [1.0, 2.0, 4.0, 8.0][rng.random_range(0..4)];
    let rows = |rng: &mut _, count| -> Vec<Vec<f64>> {
        (0..count).map(|_| grid_row(rng, k, 1000, sharpness)).collect()
    };
    let cal_rows = rows(rng, n);
    let labels = cal_rows.iter().map(|r| sample_label(rng, r)).collect();
    let test_rows = rows(rng, m);
    Instance {
        k,
        alpha,
        cal: ProbabilityMatrix::from_rows(&cal_rows).unwrap(),
        labels,
        test: ProbabilityMatrix::from_rows(&test_rows).unwrap(),
    }
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite")
}

pub fn ratio(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Step-up rule on p-values `ranks[i] / (n + 1)` in exact rational
/// arithmetic against the binary value of `alpha`.
pub fn reference_step_up(ranks: &[usize], n: usize, alpha: f64) -> Vec<usize> {
    let m = ranks.len();
    let a = rational(alpha);
    let mut sorted: Vec<usize> = ranks.to_vec();
    sorted.sort_unstable();
    let k_hat = (1..=m)
        .rev()
        .find(|&k| ratio(sorted[k - 1], n + 1) <= a.clone() * ratio(k, m))
        .unwrap_or(0);
    if k_hat == 0 {
        return Vec::new();
    }
    let cut = sorted[k_hat - 1];
    (0..m).filter(|&i| ranks[i] <= cut).collect()
}
