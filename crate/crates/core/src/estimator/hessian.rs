//! Finite-difference Hessian of the negative Laplace marginal over the free
//! parameters, and its identifiability diagnostics.

use nalgebra::DMatrix;

use crate::estimator::fit::FitResult;
use crate::estimator::layout::Slot;
use crate::estimator::mode::{find_mode, laplace_from_state};
use crate::likelihood::{Parameters, Problem};
use crate::model_spec::ModelSpec;

/// Condition numbers (square root of the eigenvalue ratio of the
/// correlation matrix of the inverse Hessian) above this are reported as
/// empirical underidentification.
pub const NEAR_SINGULAR_CONDITION: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HessianDiagnostics {
    pub positive_definite: bool,
    /// `sqrt(λ_max / λ_min)` of the correlation matrix of the inverse
    /// Hessian, when that inverse exists as a covariance.
    pub condition_number: Option<f64>,
    pub near_singular: bool,
    pub warning: Option<String>,
}

impl HessianDiagnostics {
    /// Condition number, infinite when the Hessian has no positive-definite
    /// inverse.
    pub fn effective_condition(&self) -> f64 {
        self.condition_number.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct ParameterHessian {
    pub slots: Vec<Slot>,
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// Inverse Hessian when positive-definite.
    pub covariance: Option<DMatrix<f64>>,
    pub diagnostics: HessianDiagnostics,
}

impl ParameterHessian {
    pub fn index_of(&self, slot: Slot) -> Option<usize> {
        self.slots.iter().position(|&s| s == slot)
    }
}

fn step_for(theta: f64) -> f64 {
    1e-4 * theta.abs().max(1.0)
}

/// Central finite differences of `-log L_Laplace` at the fitted parameters.
pub fn parameter_hessian(fit: &FitResult, problem: &Problem, spec: &ModelSpec) -> ParameterHessian {
    let slots = fit.layout.slots();
    let names: Vec<String> = slots.iter().map(|s| s.name()).collect();
    let k = slots.len();
    let theta: Vec<f64> = slots.iter().map(|s| s.get(&fit.params)).collect();
    let steps: Vec<f64> = theta.iter().map(|&t| step_for(t)).collect();

    let objective = |shifts: &[(usize, f64)]| -> f64 {
        let mut p: Parameters = fit.params.clone();
        for &(i, d) in shifts {
            slots[i].set(&mut p, theta[i] + d);
        }
        match find_mode(problem, &p, spec.newton_tolerance, &fit.mode) {
            Ok(state) => -laplace_from_state(&state),
            Err(_) => f64::NAN,
        }
    };

    let f0 = -fit.marginal_loglik;
    let mut h = DMatrix::zeros(k, k);
    for i in 0..k {
        let hi = steps[i];
        let fp = objective(&[(i, hi)]);
        let fm = objective(&[(i, -hi)]);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = objective(&[(i, hi), (j, hj)]);
            let fpm = objective(&[(i, hi), (j, -hj)]);
            let fmp = objective(&[(i, -hi), (j, hj)]);
            let fmm = objective(&[(i, -hi), (j, -hj)]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }

    let diagnostics_and_cov = diagnose(&h);
    ParameterHessian {
        slots,
        names,
        matrix: h,
        covariance: diagnostics_and_cov.1,
        diagnostics: diagnostics_and_cov.0,
    }
}

/// Positive-definiteness and the condition number of the correlation
/// matrix of `H⁻¹`.
pub fn diagnose(h: &DMatrix<f64>) -> (HessianDiagnostics, Option<DMatrix<f64>>) {
    let finite = h.iter().all(|v| v.is_finite());
    let chol = if finite { h.clone().cholesky() } else { None };
    let Some(chol) = chol else {
        let reason = if finite {
            "Hessian is not positive-definite"
        } else {
            "Hessian could not be evaluated at every perturbed point"
        };
        return (
            HessianDiagnostics {
                positive_definite: false,
                condition_number: None,
                near_singular: true,
                warning: Some(format!(
                    "{reason}: the model appears empirically underidentified on this data"
                )),
            },
            None,
        );
    };
    let cov = chol.inverse();
    let n = cov.nrows();
    let corr = DMatrix::from_fn(n, n, |i, j| {
        cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()
    });
    let eig = nalgebra::SymmetricEigen::new(corr).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 {
        (max / min).sqrt()
    } else {
        f64::INFINITY
    };
    let near_singular = !(condition <= NEAR_SINGULAR_CONDITION);
    let warning = near_singular.then(|| {
        format!(
            "inverse-Hessian correlation matrix is near-singular (condition number {condition:.1}): \
             the model appears empirically underidentified on this data"
        )
    });
    (
        HessianDiagnostics {
            positive_definite: true,
            condition_number: Some(condition),
            near_singular,
            warning,
        },
        Some(cov),
    )
}
