//! Dense numerics, distribution algebra, divergences, seeded sampling, and
//! the gradient-evaluation contract used by every trainable module.

pub(crate) mod array;
mod categorical;
mod gaussian;
pub mod gradcheck;
mod rng;
mod tape;

pub use array::DenseArray;
pub use categorical::{kl_categorical, CategoricalLatent};
pub use gaussian::{
    geometric_mean_gaussian, gjs_uncertainty, kl_diag_gaussian, variance_of_means,
    DiagonalGaussian,
};
pub use rng::RngStream;
pub use tape::{Gradients, NodeId, Tape};

use thiserror::Error;

/// Numeric carrier for all values in the crate. `f64` by default; the
/// `single-precision` feature switches it to `f32`.
#[cfg(not(feature = "single-precision"))]
pub type Real = f64;
#[cfg(feature = "single-precision")]
pub type Real = f32;

pub const PI: Real = core::f64::consts::PI as Real;

/// Floor added to every positive-transformed scale head.
pub const STD_FLOOR: Real = 1e-5;

/// Positive transform for scale heads: `softplus(x) + STD_FLOOR`.
pub fn positive_transform(x: Real) -> Real {
    softplus(x) + STD_FLOOR
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: Real) -> Real {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("dimension mismatch: {left} vs {right} in {context}")]
    DimensionMismatch {
        left: usize,
        right: usize,
        context: &'static str,
    },
    #[error("standard deviation must be strictly positive (component {index}: {value})")]
    NonPositiveStd { index: usize, value: Real },
    #[error("member list is empty")]
    EmptyMembers,
    #[error("need at least two members, got {0}")]
    TooFewMembers(usize),
    #[error("weights sum to {sum}, expected 1 within 1e-9")]
    WeightsOffSimplex { sum: Real },
    #[error("tape output is not a scalar (len {0})")]
    NonScalarOutput(usize),
}
