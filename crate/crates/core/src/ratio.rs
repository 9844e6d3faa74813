//! Exact comparison of integer ratios against a floating-point level.

use num_bigint::BigUint;
use num_traits::float::FloatCore;

/// Whether `num / den <= level`, evaluated exactly on the binary value of
/// `level`. `den` must be positive.
pub(crate) fn at_most(num: u128, den: u128, level: f64) -> bool {
    debug_assert!(den > 0);
    if level.is_nan() || level < 0.0 {
        return false;
    }
    if level.is_infinite() {
        return true;
    }
    let approx = num as f64 / den as f64;
    if approx < level * (1.0 - 1e-12) {
        return true;
    }
    if approx > level * (1.0 + 1e-12) {
        return false;
    }
    let (mantissa, exponent, _) = FloatCore::integer_decode(level);
    let mut lhs = BigUint::from(num);
    let mut rhs = BigUint::from(mantissa) * BigUint::from(den);
    if exponent < 0 {
        lhs <<= (-exponent) as usize;
    } else {
        rhs <<= exponent as usize;
    }
    lhs <= rhs
}
