//! Dense matrices, stable elementwise kernels, eigen-decomposition and the
//! seeded counter-based PRNG used throughout the crate.

mod eigen;
mod matrix;
mod ops;
pub mod pdm;
mod rng;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

pub use eigen::{sym_eigh, SymEigen};
pub use matrix::Matrix;
pub use ops::{
    l2_normalize, log_softmax, normalize_rows, pairwise_cosine, pairwise_sq_dists, softmax,
    softmax_rows, ZERO_NORM_THRESHOLD,
};
pub use rng::Rng;

/// Floating-point scalar the numeric code is generic over.
///
/// Training runs in `f32`; gradient checks instantiate everything with `f64`.
pub trait Real:
    Float
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    fn lift(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lift(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lift(v: f64) -> Self {
        v
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
}
