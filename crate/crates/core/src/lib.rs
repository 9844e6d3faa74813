//! Selecting test examples whose prediction sets are both informative and
//! trustworthy.
//!
//! Given class probabilities for a labelled calibration sample and an
//! unlabelled test sample, [`selector::run_og_infosp`] reports a subset of
//! the test examples, each with a prediction set drawn from an
//! [`family::InformativeFamily`]. The expected proportion of reported sets
//! that miss their label is kept at or below a chosen level.
//!
//! The other modules cover the supporting pieces: per-example envelopes and
//! policies, a population oracle for atomic models, classical special
//! cases, label-shift correction and a simulation lab. The `infosel` binary
//! exposes the same operations on CSV and JSON files.

pub mod cli;
pub mod data;
pub mod envelope;
pub mod error;
mod exact;
pub mod family;
pub mod io;
pub mod oracle;
pub mod policy;
mod ratio;
pub mod selector;
pub mod shift;
pub mod simlab;
pub mod special;

/// Guide chapters, compiled as doctests so their snippets stay current.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/families.md")]
    pub mod families {}
    #[doc = include_str!("../../../book/src/envelopes.md")]
    pub mod envelopes {}
    #[doc = include_str!("../../../book/src/selection.md")]
    pub mod selection {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub mod oracle {}
    #[doc = include_str!("../../../book/src/special-cases.md")]
    pub mod special_cases {}
    #[doc = include_str!("../../../book/src/label-shift.md")]
    pub mod label_shift {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub mod simulation {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    pub mod command_line {}
}
