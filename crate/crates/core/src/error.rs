use thiserror::Error;

use crate::family::LabelSet;

/// Which sample a row belongs to, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sample {
    Calibration,
    Test,
}

impl std::fmt::Display for Sample {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sample::Calibration => f.write_str("calibration"),
            Sample::Test => f.write_str("test"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid family specification: {0}")]
    InvalidSpec(String),

    #[error("no candidate set satisfies the family specification")]
    EmptyFamily,

    #[error("invalid weight for {set}: {reason}")]
    InvalidWeight { set: String, reason: String },

    #[error("label set {0} is not a member of the family")]
    NotInFamily(LabelSet),

    #[error("probability row {row}: {reason}")]
    ProbabilityOutOfRange { row: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("upper envelope needs at least one line")]
    EmptyInput,

    #[error("multiplier must be non-negative, got {0}")]
    NegativeMu(f64),

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("label {label} out of range 1..={k} at row {row}")]
    InvalidLabel { row: usize, label: u32, k: usize },

    #[error(
        "nestedness violated on {sample} row {row} at mu = {mu}: {before} is not a subset of {after}"
    )]
    NestednessViolated {
        sample: Sample,
        row: usize,
        mu: f64,
        before: LabelSet,
        after: LabelSet,
    },

    #[error("test sample is empty")]
    EmptyTest,

    #[error("calibration sample is empty")]
    EmptyCalibration,

    #[error("no atom has top coverage probability above 1 - alpha; use the trivial policy")]
    DegenerateRegime,

    #[error("constraint does not change sign across the bracket: g(-) = {g_minus}, g(+) = {g_plus}")]
    InvalidBracket { g_minus: f64, g_plus: f64 },

    #[error("invalid atomic model: {0}")]
    InvalidModel(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    DidNotConverge {
        iterations: usize,
        grad_norm: f64,
        best: crate::shift::ShiftCoefficients,
    },

    #[error("split leaves an empty part (n = {n}, fraction = {fraction})")]
    TooFew { n: usize, fraction: f64 },

    #[error("no grid level yields an informative prediction set")]
    NeverInformative,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
