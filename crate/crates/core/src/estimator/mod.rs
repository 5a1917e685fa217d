//! Marginal maximum likelihood by EM with a first-order Laplace E-step.
//!
//! Each EM iteration locates the mode `b̂` of the joint penalized
//! log-likelihood by damped Newton steps, then updates the fixed effects,
//! `R*` and `G*` from `b̂` and selected entries of the inverse negative
//! curvature.

pub mod em;
pub mod fit;
pub mod hessian;
pub mod layout;
pub mod mode;

pub use em::{em_update_g, em_update_r, update_fixed_effects};
pub use fit::{
    correlation, em_step, fit, initial_parameters, FitDiagnostics, FitResult, TeamRating,
};
pub use hessian::{
    parameter_hessian, HessianDiagnostics, ParameterHessian, NEAR_SINGULAR_CONDITION,
};
pub use layout::{ParameterLayout, Slot};
pub use mode::{find_mode, laplace_from_state, laplace_marginal_loglik, RandomEffectsState};
