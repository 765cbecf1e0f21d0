//! Novel category discovery with adaptive prototypes.
//!
//! Stage I learns a feature extractor with teacher–student self-distillation
//! plus online prototype learning; stage II clusters the unlabelled features,
//! rectifies the resulting pseudo labels against prototypes and retrains a
//! unified base+novel classifier.

pub mod augment;
pub mod clustering;
pub mod data;
pub mod distill;
pub mod error;
pub mod nn;
pub mod numerics;
pub mod par;
pub mod pipeline;
pub mod prototypes;
pub mod selftrain;

pub use error::{Error, Result};
pub use numerics::{Matrix, Real, Rng};
