//! Newton mode-finding for `h(b)` and the first-order Laplace marginal.

use crate::curvature::{Curvature, Factorization};
use crate::error::{Error, Result};
use crate::likelihood::{evaluate_prepared, Order, Parameters, PreparedParams, Problem};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const MAX_NEWTON_ITERATIONS: usize = 200;
const MAX_HALVINGS: usize = 30;
const RIDGE_START: f64 = 1e-6;
const RIDGE_MAX: f64 = 1e8;

/// Random effects at the maximizer of `h`, with the factored negative
/// curvature there.
#[derive(Debug)]
pub struct RandomEffectsState {
    pub b: Vec<f64>,
    /// `h(b̂)`.
    pub value: f64,
    pub negative_curvature: Curvature,
    pub factorization: Factorization,
    pub newton_iterations: usize,
    /// Largest ridge added to a non-positive-definite curvature along the
    /// way, if any.
    pub ridge: Option<f64>,
}

fn factorize_with_ridge(curv: &Curvature, ridge_used: &mut Option<f64>) -> Result<Factorization> {
    match curv.factorize() {
        Ok(f) => Ok(f),
        Err(first) => {
            let mut lambda = RIDGE_START;
            while lambda <= RIDGE_MAX {
                let mut ridged = curv.clone();
                ridged.add_ridge(lambda);
                if let Ok(f) = ridged.factorize() {
                    *ridge_used = Some(ridge_used.map_or(lambda, |r: f64| r.max(lambda)));
                    return Ok(f);
                }
                lambda *= 10.0;
            }
            Err(first)
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximize `h(b)` by damped Newton iterations from `b_init`.
pub fn find_mode(
    problem: &Problem,
    params: &Parameters,
    newton_tolerance: f64,
    b_init: &[f64],
) -> Result<RandomEffectsState> {
    let prepared = params.prepare()?;
    find_mode_prepared(problem, params, &prepared, newton_tolerance, b_init)
}

pub(crate) fn find_mode_prepared(
    problem: &Problem,
    params: &Parameters,
    prepared: &PreparedParams,
    newton_tolerance: f64,
    b_init: &[f64],
) -> Result<RandomEffectsState> {
    if b_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "initial effects vector is not finite".into(),
        ));
    }
    let mut b = b_init.to_vec();
    let mut ridge = None;
    let mut last_grad = f64::INFINITY;

    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let ev = evaluate_prepared(problem, params, prepared, &b, Order::Curvature)?;
        let grad = ev.gradient.expect("gradient requested");
        let curv = ev.curvature.expect("curvature requested");
        let grad_norm = max_abs(&grad);
        last_grad = grad_norm;
        let factor = factorize_with_ridge(&curv, &mut ridge)?;

        let step = factor.solve(&grad);
        // Half the Newton decrement: the predicted gain of a full step.
        let predicted: f64 = 0.5 * grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
        let at_precision = predicted <= 1e-15 * ev.value.abs().max(1.0);
        if grad_norm < newton_tolerance || at_precision {
            return Ok(RandomEffectsState {
                b,
                value: ev.value,
                negative_curvature: curv,
                factorization: factor,
                newton_iterations: iteration,
                ridge,
            });
        }
        if iteration == MAX_NEWTON_ITERATIONS {
            break;
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = b.iter().zip(&step).map(|(bi, si)| bi + t * si).collect();
            if let Ok(tv) = evaluate_prepared(problem, params, prepared, &trial, Order::Value) {
                if tv.value >= ev.value {
                    b = trial;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // No ascent along the Newton direction at any scale: the iterate
            // is a mode to working precision.
            return Ok(RandomEffectsState {
                b,
                value: ev.value,
                negative_curvature: curv,
                factorization: factor,
                newton_iterations: iteration,
                ridge,
            });
        }
    }
    Err(Error::ModeNotConverged {
        iterations: MAX_NEWTON_ITERATIONS,
        gradient_norm: last_grad,
        last_iterate: b,
    })
}

/// `h(b̂) + (q/2) log 2π - ½ log|-H(b̂)|` for a located mode.
pub fn laplace_from_state(state: &RandomEffectsState) -> f64 {
    let q = state.b.len() as f64;
    state.value + 0.5 * q * LN_2PI - 0.5 * state.factorization.log_det()
}

/// First-order Laplace approximation of the marginal log-likelihood. Exact
/// for the normal model.
pub fn laplace_marginal_loglik(
    problem: &Problem,
    params: &Parameters,
    newton_tolerance: f64,
    b_init: &[f64],
) -> Result<(f64, RandomEffectsState)> {
    let state = find_mode(problem, params, newton_tolerance, b_init)?;
    Ok((laplace_from_state(&state), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, GameRecord, Outcome};
    use crate::likelihood::{joint_penalized_loglik, Order};
    use crate::model_spec::{Method, ScoreFamily};
    use crate::simulate::{sacks_truth, simulate_season, OutcomeRule, SeasonConfig};
    use nalgebra::{Matrix2, Matrix3};

    fn one_game() -> Dataset {
        Dataset::from_records(vec![GameRecord {
            game_id: "1".into(),
            home_team: "A".into(),
            away_team: "B".into(),
            neutral_site: false,
            home_response: Some(1.0),
            away_response: Some(0.0),
            binary_outcome: Some(Outcome::HomeWin),
        }])
        .unwrap()
    }

    fn unit() -> Parameters {
        Parameters {
            beta: [0.0; 3],
            alpha: 0.0,
            gstar: Matrix3::identity(),
            sigma2_g: None,
            rstar: Some(Matrix2::identity()),
        }
    }

    #[test]
    fn single_normal_game_closed_form() {
        // Each response has variance 1 (offense) + 1 (defense) + 1 (error)
        // and the two responses share no effects.
        let problem = Problem::new(&one_game(), Method::N).unwrap();
        let (ll, state) = laplace_marginal_loglik(&problem, &unit(), 1e-12, &[0.0; 6]).unwrap();
        let expected = -LN_2PI - 3f64.ln() - 1.0 / 6.0;
        assert!((ll - expected).abs() < 1e-12);
        // Posterior means: each of o_A, -d_B carries a third of the residual.
        assert!((state.b[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((state.b[4] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_neutral_binary_game() {
        let mut d = one_game();
        d = Dataset::from_records(
            d.records()
                .iter()
                .cloned()
                .map(|mut g| {
                    g.neutral_site = true;
                    g
                })
                .collect(),
        )
        .unwrap();
        let problem = Problem::new(&d, Method::B).unwrap();
        let state = find_mode(&problem, &unit(), 1e-12, &[0.0; 6]).unwrap();
        // Symmetric: the winner's propensity rises exactly as much as the
        // loser's falls.
        assert!(state.b[2] > 0.0);
        assert!((state.b[2] + state.b[5]).abs() < 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_the_mode() {
        let s = simulate_season(&SeasonConfig {
            teams: 8,
            rounds: 5,
            neutral_fraction: 0.2,
            family: ScoreFamily::Poisson,
            truth: Parameters {
                sigma2_g: Some(0.1),
                ..sacks_truth()
            },
            outcome: OutcomeRule::Probit,
            seed: 2,
        })
        .unwrap();
        for method in [Method::P0, Method::P1, Method::B, Method::PB0, Method::PB1] {
            let problem = Problem::new(&s.data, method).unwrap();
            let mut params = sacks_truth();
            params.sigma2_g = method.has_game_effect().then_some(0.2);
            let state = find_mode(&problem, &params, 1e-10, &vec![0.0; problem.q()]).unwrap();
            let ev = joint_penalized_loglik(&problem, &params, &state.b, Order::Gradient).unwrap();
            let g = ev.gradient.unwrap();
            // Stiff directions can leave a small gradient; the remaining
            // Newton step is what must vanish.
            let step = state.factorization.solve(&g);
            assert!(max_abs(&step) <= 1e-6, "{method}: {}", max_abs(&step));
            // A warm start lands on the same mode.
            let again = find_mode(&problem, &params, 1e-10, &state.b).unwrap();
            assert!(again.newton_iterations <= 1);
            assert!((laplace_from_state(&again) - laplace_from_state(&state)).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_length_start_is_rejected() {
        let problem = Problem::new(&one_game(), Method::N).unwrap();
        assert!(find_mode(&problem, &unit(), 1e-10, &[0.0; 5]).is_err());
    }
}
