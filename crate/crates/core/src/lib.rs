//! Multivariate generalized linear mixed models for paired competitions.
//!
//! Teams carry correlated offense, defense and win-propensity effects. The
//! game-level responses (normal or Poisson) and the binary home-win outcome
//! are modelled individually or jointly, and fitted by EM with a first-order
//! Laplace approximation over sparse multiple-membership designs.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod data;
pub mod design;
pub mod error;
pub mod estimator;
pub mod evaluator;
pub mod likelihood;
pub mod model_spec;
pub mod predictor;
pub mod report;
pub mod simulate;
pub mod special;

pub use data::{load_dataset, Dataset, GameRecord, Outcome};
pub use error::{Error, Result};
pub use estimator::{fit, FitResult};
pub use likelihood::{Parameters, Problem};
pub use model_spec::{Method, ModelSpec};
