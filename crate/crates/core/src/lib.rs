//! Evaluation of real-valued point predictors for a non-negative response.
//!
//! Bregman losses and their mixtures over elementary scores, Murphy's
//! decomposition `S = UNC - DSC + MCB` with isotonic recalibration, Murphy,
//! Lorenz and concentration curves, the miscalibration statistics ABC and
//! ABC², Gini and AUC representations, and first to third degree dominance
//! checks between two predictors.
//!
//! All computations are generic over [`Scalar`] (`f32`, `f64`); the aliases
//! at the crate root fix `f64`.

pub mod curves;
pub mod decomp;
pub mod dominance;
pub mod error;
pub mod integrate;
pub mod losses;
pub mod sample;
pub mod scalar;
pub mod scenarios;
pub mod stats;

pub use curves::{Axis, CrossingReport, Curve};
pub use decomp::{decompose, murphy_decomposition, DecompositionResult};
pub use dominance::{DominanceVerdict, GeneratorClass, Relation, Tolerance};
pub use error::{Error, Result};
pub use losses::{mixture_loss, score, ConvexGenerator, Loss, MixingMeasure};
pub use sample::{EmpiricalDistribution, PairedSample, Recalibration};
pub use scalar::Scalar;

pub type Sample = sample::PairedSample<f64>;
pub type Generator = losses::ConvexGenerator<f64>;
pub type Measure = losses::MixingMeasure<f64>;
pub type CurveF64 = curves::Curve<f64>;
pub type Decomposition = decomp::DecompositionResult<f64>;
pub type Verdict = dominance::DominanceVerdict<f64>;
pub type Gini = stats::GiniReport<f64>;
pub type Abc = stats::AbcReport<f64>;
