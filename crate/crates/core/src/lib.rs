//! Propensity score estimation from longitudinal claims records.
//!
//! Simulate cohorts whose confounding lives in the timing of diagnosis codes,
//! fit flat and sequence models to them, and score the resulting IPTW effect
//! estimates. The guide under `book/` walks through each layer.

pub mod claimsgen;
pub mod error;
pub mod estimate;
pub mod features;
pub mod models;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};

// The guide's code blocks run as doc tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/claims-data.md")]
    mod claims_data {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
