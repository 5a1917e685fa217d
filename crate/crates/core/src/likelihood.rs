//! Conditional log-likelihoods, the random-effects prior and the joint
//! penalized log-likelihood `h(b)` with its exact gradient and negative
//! Hessian in `b`.
//!
//! All normalizing constants (`log 2π`, `log y!`) are kept so that marginal
//! log-likelihoods are comparable across model families.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::curvature::Curvature;
use crate::data::Dataset;
use crate::design::{
    build_binary_design, build_score_design, effect_count, BinaryDesign, ScoreDesign,
};
use crate::error::{Error, Result};
use crate::model_spec::{Method, ScoreFamily};
use crate::special::{ln_factorial, log_norm_cdf, log_norm_cdf_derivs};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Model parameters in their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// `(β_h, β_a, β_n)`: home, away and neutral-site means.
    pub beta: [f64; 3],
    /// Home-field effect on the probit scale.
    pub alpha: f64,
    /// Covariance of a team's (offense, defense, win propensity) effects.
    pub gstar: Matrix3<f64>,
    /// Game-level effect variance; only with a game-level effect.
    pub sigma2_g: Option<f64>,
    /// Conditional covariance of (home, away) responses; normal model only.
    pub rstar: Option<Matrix2<f64>>,
}

/// Inverses and log-determinants derived once per parameter value.
#[derive(Debug, Clone)]
pub struct PreparedParams {
    pub ginv: Matrix3<f64>,
    pub g_log_det: f64,
    pub rinv: Option<Matrix2<f64>>,
    pub r_log_det: f64,
    pub sigma2_g: Option<f64>,
}

impl Parameters {
    pub fn prepare(&self) -> Result<PreparedParams> {
        let g_chol = self
            .gstar
            .cholesky()
            .ok_or_else(|| Error::Numeric("G* is not positive-definite".into()))?;
        let g_log_det = 2.0 * g_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ginv = g_chol.inverse();

        let (rinv, r_log_det) = match self.rstar {
            Some(r) => {
                let c = r.cholesky().ok_or_else(|| {
                    Error::Numeric("R* is singular or not positive-definite".into())
                })?;
                let ld = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (Some(c.inverse()), ld)
            }
            None => (None, 0.0),
        };
        if let Some(s) = self.sigma2_g {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Numeric(format!(
                    "game-effect variance must be positive, got {s}"
                )));
            }
        }
        if !g_log_det.is_finite() || !r_log_det.is_finite() {
            return Err(Error::Numeric(
                "covariance determinant is not finite".into(),
            ));
        }
        Ok(PreparedParams {
            ginv,
            g_log_det,
            rinv,
            r_log_det,
            sigma2_g: self.sigma2_g,
        })
    }
}

/// A dataset paired with the designs and response vectors one method needs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub method: Method,
    pub teams: usize,
    pub games: usize,
    pub score: Option<ScoreDesign>,
    pub binary: Option<BinaryDesign>,
    /// Stacked (home, away) responses, length `2n`; empty without a score
    /// component.
    pub y: Vec<f64>,
    /// Home-win indicators, length `n`; empty without a binary component.
    pub r: Vec<f64>,
}

impl Problem {
    pub fn new(data: &Dataset, method: Method) -> Result<Self> {
        data.check_compatible(method)?;
        let score = method
            .score_family()
            .map(|_| build_score_design(data, method.has_game_effect()));
        let binary = method.has_binary().then(|| build_binary_design(data));
        let y = if score.is_some() {
            data.rows()
                .iter()
                .flat_map(|g| [g.home_response.unwrap(), g.away_response.unwrap()])
                .collect()
        } else {
            Vec::new()
        };
        let r = if binary.is_some() {
            data.rows()
                .iter()
                .map(|g| if g.home_win.unwrap() { 1.0 } else { 0.0 })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Problem {
            method,
            teams: data.p(),
            games: data.n(),
            score,
            binary,
            y,
            r,
        })
    }

    /// Dimension of the stacked random-effects vector.
    pub fn q(&self) -> usize {
        effect_count(self.teams, self.games, self.method.has_game_effect())
    }

    pub fn game_effect_count(&self) -> usize {
        if self.method.has_game_effect() {
            self.games
        } else {
            0
        }
    }
}

/// Linear predictor `Xβ + Zb` of the score rows.
pub fn score_linear_predictor(design: &ScoreDesign, beta: &[f64; 3], b: &[f64]) -> Vec<f64> {
    (0..design.x.nrows())
        .map(|i| design.x.row_dot(i, beta) + design.z.row_dot(i, b))
        .collect()
}

/// Linear predictor `Wα + Sb` of the binary rows.
pub fn binary_linear_predictor(design: &BinaryDesign, alpha: f64, b: &[f64]) -> Vec<f64> {
    (0..design.s.nrows())
        .map(|i| design.w[i] * alpha + design.s.row_dot(i, b))
        .collect()
}

fn check_dim(b: &[f64], expected: usize) -> Result<()> {
    if b.len() != expected {
        return Err(Error::Validation(format!(
            "effects vector has length {}, expected {expected}",
            b.len()
        )));
    }
    Ok(())
}

pub fn normal_cond_loglik(
    y: &[f64],
    design: &ScoreDesign,
    params: &Parameters,
    b: &[f64],
) -> Result<f64> {
    check_dim(b, design.q())?;
    let rstar = params
        .rstar
        .ok_or_else(|| Error::Numeric("R* is required by the normal model".into()))?;
    let chol = rstar
        .cholesky()
        .ok_or_else(|| Error::Numeric("R* is singular or not positive-definite".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let rinv = chol.inverse();
    let eta = score_linear_predictor(design, &params.beta, b);
    let mut total = 0.0;
    for i in 0..design.games() {
        let e = Vector2::new(y[2 * i] - eta[2 * i], y[2 * i + 1] - eta[2 * i + 1]);
        total += -LN_2PI - 0.5 * log_det - 0.5 * e.dot(&(rinv * e));
    }
    Ok(total)
}

fn check_count(y: f64) -> Result<()> {
    if y >= 0.0 && y.fract() == 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Poisson responses must be non-negative integers, got {y}"
        )))
    }
}

pub fn poisson_cond_loglik(
    y: &[f64],
    design: &ScoreDesign,
    params: &Parameters,
    b: &[f64],
) -> Result<f64> {
    check_dim(b, design.q())?;
    let eta = score_linear_predictor(design, &params.beta, b);
    let mut total = 0.0;
    for (&yi, &e) in y.iter().zip(&eta) {
        check_count(yi)?;
        total += yi * e - e.exp() - ln_factorial(yi);
    }
    Ok(total)
}

pub fn binary_cond_loglik(r: &[f64], design: &BinaryDesign, params: &Parameters, b: &[f64]) -> f64 {
    binary_linear_predictor(design, params.alpha, b)
        .iter()
        .zip(r)
        .map(|(&eta, &ri)| log_norm_cdf(if ri > 0.5 { eta } else { -eta }))
        .sum()
}

/// `log N(b; 0, G)` evaluated team block by team block.
pub fn prior_loglik(b: &[f64], params: &Parameters, teams: usize) -> Result<f64> {
    let prepared = params.prepare()?;
    let games = b.len().saturating_sub(3 * teams);
    check_dim(b, 3 * teams + games)?;
    if games > 0 && prepared.sigma2_g.is_none() {
        return Err(Error::Validation(
            "effects vector carries game effects but σ²_g is absent".into(),
        ));
    }
    Ok(prior_value(b, &prepared, teams))
}

fn prior_value(b: &[f64], prepared: &PreparedParams, teams: usize) -> f64 {
    let mut quad = 0.0;
    for j in 0..teams {
        let bj = nalgebra::Vector3::new(b[3 * j], b[3 * j + 1], b[3 * j + 2]);
        quad += bj.dot(&(prepared.ginv * bj));
    }
    let games = b.len() - 3 * teams;
    let mut log_det = teams as f64 * prepared.g_log_det;
    if let Some(s2) = prepared.sigma2_g.filter(|_| games > 0) {
        quad += b[3 * teams..].iter().map(|a| a * a).sum::<f64>() / s2;
        log_det += games as f64 * s2.ln();
    }
    -0.5 * b.len() as f64 * LN_2PI - 0.5 * log_det - 0.5 * quad
}

/// What to compute in [`joint_penalized_loglik`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Curvature,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub curvature: Option<Curvature>,
}

/// Joint penalized log-likelihood `h(b)`: the conditional log-likelihoods
/// active for the method plus the prior.
pub fn joint_penalized_loglik(
    problem: &Problem,
    params: &Parameters,
    b: &[f64],
    order: Order,
) -> Result<Evaluation> {
    let prepared = params.prepare()?;
    evaluate_prepared(problem, params, &prepared, b, order)
}

pub(crate) fn evaluate_prepared(
    problem: &Problem,
    params: &Parameters,
    prepared: &PreparedParams,
    b: &[f64],
    order: Order,
) -> Result<Evaluation> {
    let q = problem.q();
    check_dim(b, q)?;
    let p = problem.teams;
    let want_grad = order >= Order::Gradient;
    let want_curv = order >= Order::Curvature;
    let mut grad = if want_grad { vec![0.0; q] } else { Vec::new() };
    let mut curv = want_curv.then(|| Curvature::zeros(3 * p, problem.game_effect_count()));

    let mut value = prior_value(b, prepared, p);
    if want_grad {
        for j in 0..p {
            let bj = nalgebra::Vector3::new(b[3 * j], b[3 * j + 1], b[3 * j + 2]);
            let g = prepared.ginv * bj;
            for k in 0..3 {
                grad[3 * j + k] -= g[k];
            }
        }
        if let Some(s2) = prepared.sigma2_g {
            for i in 3 * p..q {
                grad[i] -= b[i] / s2;
            }
        }
    }
    if let Some(c) = curv.as_mut() {
        for j in 0..p {
            for a in 0..3 {
                for bb in 0..3 {
                    c.add_ordered(3 * j + a, 3 * j + bb, prepared.ginv[(a, bb)]);
                }
            }
        }
        if let Some(s2) = prepared.sigma2_g {
            for i in 3 * p..q {
                c.add_ordered(i, i, 1.0 / s2);
            }
        }
    }

    if let (Some(design), Some(family)) = (&problem.score, problem.method.score_family()) {
        let eta = score_linear_predictor(design, &params.beta, b);
        match family {
            ScoreFamily::Normal => {
                let rinv = prepared
                    .rinv
                    .ok_or_else(|| Error::Numeric("R* is required by the normal model".into()))?;
                for i in 0..design.games() {
                    let rows = [2 * i, 2 * i + 1];
                    let e = Vector2::new(
                        problem.y[rows[0]] - eta[rows[0]],
                        problem.y[rows[1]] - eta[rows[1]],
                    );
                    let u = rinv * e;
                    value += -LN_2PI - 0.5 * prepared.r_log_det - 0.5 * e.dot(&u);
                    if want_grad {
                        for (k, &row) in rows.iter().enumerate() {
                            for (c, z) in design.z.row(row) {
                                grad[c] += z * u[k];
                            }
                        }
                    }
                    if let Some(cm) = curv.as_mut() {
                        for (ka, &ra) in rows.iter().enumerate() {
                            for (kb, &rb) in rows.iter().enumerate() {
                                let w = rinv[(ka, kb)];
                                for (ca, za) in design.z.row(ra) {
                                    for (cb, zb) in design.z.row(rb) {
                                        cm.add_ordered(ca, cb, w * za * zb);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            ScoreFamily::Poisson => {
                for (row, &e) in eta.iter().enumerate() {
                    let yi = problem.y[row];
                    let mu = e.exp();
                    value += yi * e - mu - ln_factorial(yi);
                    if want_grad {
                        for (c, z) in design.z.row(row) {
                            grad[c] += z * (yi - mu);
                        }
                    }
                    if let Some(cm) = curv.as_mut() {
                        for (ca, za) in design.z.row(row) {
                            for (cb, zb) in design.z.row(row) {
                                cm.add_ordered(ca, cb, mu * za * zb);
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(design) = &problem.binary {
        let eta = binary_linear_predictor(design, params.alpha, b);
        for (i, &e) in eta.iter().enumerate() {
            let sign = if problem.r[i] > 0.5 { 1.0 } else { -1.0 };
            let x = sign * e;
            value += log_norm_cdf(x);
            if want_grad {
                let (lambda, w) = log_norm_cdf_derivs(x);
                for (c, s) in design.s.row(i) {
                    grad[c] += sign * lambda * s;
                }
                if let Some(cm) = curv.as_mut() {
                    for (ca, sa) in design.s.row(i) {
                        for (cb, sb) in design.s.row(i) {
                            cm.add_ordered(ca, cb, w * sa * sb);
                        }
                    }
                }
            }
        }
    }

    if !value.is_finite() {
        return Err(Error::Numeric(
            "penalized log-likelihood is not finite".into(),
        ));
    }
    Ok(Evaluation {
        value,
        gradient: want_grad.then_some(grad),
        curvature: curv,
    })
}

/// `-log(2π)`, the bivariate standard normal log-density at its mean.
pub fn bivariate_normal_peak() -> f64 {
    -(2.0 * PI).ln()
}
