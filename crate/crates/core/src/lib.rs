//! Exact transfer-matrix computations and seeded Monte Carlo for 1+1 dimensional directed
//! polymers in an infinitely divisible random environment.
//!
//! The dynamic programs ([`polymer`], [`replica`], [`pinning`]) are generic over the
//! [`Scalar`] type (`f32` or `f64`); environment laws and the Monte Carlo harness work in `f64`.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod experiments;
pub mod field;
pub mod lattice;
pub mod mc;
pub mod pinning;
pub mod polymer;
pub mod replica;
pub mod report;
mod scalar;

pub use env::{EnvFamily, EnvModel, JumpDensity, JumpMeasure, LevyTriple};
pub use error::{Error, Result};
pub use field::{sample_field, sample_replicate, EnvField};
pub use mc::{Ensemble, McEstimate, SIGMA_MARGIN};
pub use polymer::{Marginals, Path, WeightLayer};
pub use replica::{GibbsObservables, InterpolationPoint, ReplicaLayer};
pub use scalar::Scalar;

pub type Field64 = EnvField<f64>;
pub type Field32 = EnvField<f32>;
pub type WeightLayer64 = WeightLayer<f64>;
pub type WeightLayer32 = WeightLayer<f32>;
pub type ReplicaLayer64 = ReplicaLayer<f64>;
pub type ReplicaLayer32 = ReplicaLayer<f32>;
pub type Marginals64 = Marginals<f64>;
pub type PinningCurve64 = pinning::PinningCurve<f64>;
