//! Fine-grained sequential recommendation from review attribute-opinions.
//!
//! The pipeline: ingest interaction/review data ([`corpus`]), mine
//! attribute-opinion pairs from review text ([`extraction`]), embed attribute
//! and opinion strings as frozen vectors ([`encoder`]), build per-attribute
//! user-opinion-item graphs plus a global interaction graph ([`graphs`]),
//! learn user/item embeddings with a diversity-aware convolution and
//! interaction-driven fusion ([`model`]), train with full-ranking
//! cross-entropy ([`training`]) and score top-k recommendations against
//! baselines ([`evaluation`]). [`synth`] generates planted-signal corpora for
//! end-to-end verification.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod graphs;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod training;

use std::fmt;

use num_traits::{Float, FromPrimitive, NumAssignOps};

pub use error::{FineRecError, Result};

/// Scalar type for all embedding and gradient arithmetic.
///
/// The numeric core is generic so the same code runs in `f32` or `f64`; the
/// shipped binary and the verification suite instantiate [`Real`].
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default scalar for the CLI and the acceptance paths (gradient checks need
/// 64-bit precision).
pub type Real = f64;

/// Concrete parameter set used by the shipped binary.
pub type RealParams = model::ModelParams<Real>;

/// Concrete attribute graph used by the shipped binary.
pub type RealGraph = graphs::AttributeGraph<Real>;

/// Convert an `f64` constant into the working scalar type.
pub fn sc<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("constant representable in scalar type")
}

/// Convert a count into the working scalar type.
pub fn count<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("count representable in scalar type")
}
