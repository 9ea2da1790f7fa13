//! PAC sketching, synthesis and statistical verification for programs whose
//! components are unreliable scorers (classifiers, regressors, detectors).
//!
//! The crate is organised as a pipeline:
//!
//! - [`estimators`]: threshold, mean lower bound and verification estimators
//!   built on an exact log-space binomial tail.
//! - [`sketch_ir`]: the core sketch language with specification expressions,
//!   holes, valuations and train/test semantics.
//! - [`sketcher`]: fills every hole of a full sketch bottom-up.
//! - [`verifier`]: checks complete programs, probabilistic assertions and
//!   runs a sliding-window monitor.
//! - [`listdsl`]: a typed list-processing language with abstaining
//!   components, plus synthetic predictors standing in for real models.
//! - [`allocator`]: occurrence counting, symbolic error propagation and the
//!   simplex grid of per-component budgets.
//! - [`synthesizer`]: enumerative synthesis from examples followed by
//!   candidate scoring and final sketching.
//! - [`harness`]: Monte Carlo validation of every guarantee and evaluation of
//!   synthesized programs.
//!
//! Estimators and symbolic error forms are generic over their scalar type;
//! the aliases below fix the common instantiations.

pub mod allocator;
pub mod estimators;
pub mod harness;
pub mod listdsl;
pub mod sketch_ir;
pub mod sketcher;
pub mod synthesizer;
pub mod verifier;

mod serde_ext;

use std::fmt::Debug;

/// Version tag written into every JSON document produced by the crate.
pub const SCHEMA_VERSION: u32 = 1;

/// Floating-point scalar accepted by the estimators.
pub trait Real: num_traits::Float + num_traits::FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: num_traits::Float + num_traits::FromPrimitive + Debug + Send + Sync + 'static {}

/// Score sample over binary64 reals.
pub type ScoreSample = estimators::ScoreSample<f64>;
/// Score sample over binary32 reals.
pub type ScoreSample32 = estimators::ScoreSample<f32>;
/// Symbolic error form with binary64 coefficients.
pub type SymbolicError = allocator::SymbolicError<f64>;
/// Symbolic error form with exact rational coefficients.
pub type ExactSymbolicError = allocator::SymbolicError<num_rational::Ratio<i64>>;
/// Per-occurrence budget assignment with binary64 values.
pub type Assignment = allocator::Assignment<f64>;
/// Per-occurrence budget assignment with exact rational values.
pub type ExactAssignment = allocator::Assignment<num_rational::Ratio<i64>>;
