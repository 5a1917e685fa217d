//! EM M-steps given the located mode and selected entries of the inverse
//! negative curvature (the Laplace posterior covariance of `b`).

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::curvature::SelectedInverse;
use crate::design::FIXED_NEUTRAL;
use crate::estimator::layout::ParameterLayout;
use crate::likelihood::{binary_linear_predictor, score_linear_predictor, Parameters, Problem};
use crate::model_spec::ScoreFamily;
use crate::special::log_norm_cdf_derivs;

/// `G*_new = (1/p) Σ_j (b̂_j b̂_jᵀ + V_j)`, restricted to the free entries of
/// the layout, and `σ²_g,new = (1/n) Σ_i (â_i² + v_i)`.
pub fn em_update_g(
    b: &[f64],
    inverse: &SelectedInverse,
    params: &Parameters,
    teams: usize,
    layout: &ParameterLayout,
) -> (Matrix3<f64>, Option<f64>) {
    let mut m = Matrix3::zeros();
    for j in 0..teams {
        let bj = Vector3::new(b[3 * j], b[3 * j + 1], b[3 * j + 2]);
        m += bj * bj.transpose() + inverse.team_block(j);
    }
    if teams > 0 {
        m /= teams as f64;
    }
    let mut g = params.gstar;
    for i in 0..3 {
        for j in 0..3 {
            if layout.g_free(i, j) {
                g[(i, j)] = m[(i, j)];
            }
        }
    }
    // Symmetrize against round-off in the inverse.
    let g = (g + g.transpose()) * 0.5;

    let sigma2_g = params.sigma2_g.map(|old| {
        let games = inverse.game_diag().len();
        if games == 0 {
            return old;
        }
        let offset = 3 * teams;
        let total: f64 = (0..games)
            .map(|i| b[offset + i] * b[offset + i] + inverse.game(i))
            .sum();
        total / games as f64
    });
    (g, sigma2_g)
}

/// `R*_new = (1/n) Σ_i (ê_i ê_iᵀ + Z_i V Z_iᵀ)` with residuals taken at the
/// supplied (already updated) fixed effects.
pub fn em_update_r(
    b: &[f64],
    inverse: &SelectedInverse,
    beta: &[f64; 3],
    problem: &Problem,
) -> Option<Matrix2<f64>> {
    let design = problem.score.as_ref()?;
    if problem.method.score_family() != Some(ScoreFamily::Normal) {
        return None;
    }
    let n = design.games();
    if n == 0 {
        return None;
    }
    let t = 3 * problem.teams;
    let eta = score_linear_predictor(design, beta, b);
    let mut acc = Matrix2::zeros();
    for i in 0..n {
        let rows = [2 * i, 2 * i + 1];
        let e = Vector2::new(
            problem.y[rows[0]] - eta[rows[0]],
            problem.y[rows[1]] - eta[rows[1]],
        );
        acc += e * e.transpose();
        for (a, &ra) in rows.iter().enumerate() {
            for (c, &rb) in rows.iter().enumerate() {
                let mut v = 0.0;
                for (ca, za) in design.z.row(ra) {
                    for (cb, zb) in design.z.row(rb) {
                        if ca < t && cb < t {
                            v += za * zb * inverse.team(ca, cb);
                        }
                    }
                }
                acc[(a, c)] += v;
            }
        }
    }
    let r = acc / n as f64;
    Some((r + r.transpose()) * 0.5)
}

/// Generalized least squares for β at the mode under the given R*, solved
/// over the active columns only.
fn gls_beta(
    problem: &Problem,
    params: &Parameters,
    b: &[f64],
    layout: &ParameterLayout,
) -> [f64; 3] {
    let design = problem.score.as_ref().expect("score component");
    let rinv = params
        .rstar
        .and_then(|r| r.try_inverse())
        .unwrap_or_else(Matrix2::identity);
    let mut a = Matrix3::<f64>::zeros();
    let mut c = Vector3::<f64>::zeros();
    for i in 0..design.games() {
        let rows = [2 * i, 2 * i + 1];
        let cols: Vec<usize> = rows
            .iter()
            .map(|&r| design.x.row(r).next().map_or(FIXED_NEUTRAL, |(col, _)| col))
            .collect();
        let e = Vector2::new(
            problem.y[rows[0]] - design.z.row_dot(rows[0], b),
            problem.y[rows[1]] - design.z.row_dot(rows[1], b),
        );
        let u = rinv * e;
        for ka in 0..2 {
            c[cols[ka]] += u[ka];
            for kb in 0..2 {
                a[(cols[ka], cols[kb])] += rinv[(ka, kb)];
            }
        }
    }
    let active: Vec<usize> = (0..3).filter(|&k| layout.beta_active[k]).collect();
    let mut beta = [0.0; 3];
    if active.is_empty() {
        return beta;
    }
    let k = active.len();
    let sub_a = nalgebra::DMatrix::from_fn(k, k, |i, j| a[(active[i], active[j])]);
    let sub_c = nalgebra::DVector::from_fn(k, |i, _| c[active[i]]);
    match sub_a.cholesky() {
        Some(ch) => {
            let sol = ch.solve(&sub_c);
            for (i, &col) in active.iter().enumerate() {
                beta[col] = sol[i];
            }
            beta
        }
        None => params.beta,
    }
}

/// One Fisher-scoring step for the Poisson log-means at the mode. The
/// location design has one indicator per row, so the information matrix is
/// diagonal.
fn poisson_beta_step(
    problem: &Problem,
    params: &Parameters,
    b: &[f64],
    layout: &ParameterLayout,
) -> [f64; 3] {
    let design = problem.score.as_ref().expect("score component");
    let eta = score_linear_predictor(design, &params.beta, b);
    let mut score = [0.0; 3];
    let mut info = [0.0; 3];
    for (row, &e) in eta.iter().enumerate() {
        let mu = e.exp();
        for (col, x) in design.x.row(row) {
            score[col] += x * (problem.y[row] - mu);
            info[col] += x * x * mu;
        }
    }
    let mut beta = params.beta;
    for k in 0..3 {
        if layout.beta_active[k] && info[k] > 0.0 {
            beta[k] += score[k] / info[k];
        } else if !layout.beta_active[k] {
            beta[k] = 0.0;
        }
    }
    beta
}

/// One Newton step for the probit home effect at the mode.
fn probit_alpha_step(
    problem: &Problem,
    params: &Parameters,
    b: &[f64],
    layout: &ParameterLayout,
) -> f64 {
    if !layout.alpha_active {
        return 0.0;
    }
    let design = problem.binary.as_ref().expect("binary component");
    let eta = binary_linear_predictor(design, params.alpha, b);
    let mut score = 0.0;
    let mut info = 0.0;
    for (i, &e) in eta.iter().enumerate() {
        let w = design.w[i];
        if w == 0.0 {
            continue;
        }
        let sign = if problem.r[i] > 0.5 { 1.0 } else { -1.0 };
        let (lambda, curv) = log_norm_cdf_derivs(sign * e);
        score += w * sign * lambda;
        info += w * w * curv;
    }
    if info > 0.0 {
        params.alpha + score / info
    } else {
        params.alpha
    }
}

/// Fixed-effect update at the mode: exact GLS for normal scores, one
/// Fisher-scoring step for Poisson log-means, one Newton step for the probit
/// home effect. Columns without supporting data stay at zero.
pub fn update_fixed_effects(
    problem: &Problem,
    params: &Parameters,
    b: &[f64],
    layout: &ParameterLayout,
) -> ([f64; 3], f64) {
    let beta = match problem.method.score_family() {
        Some(ScoreFamily::Normal) => gls_beta(problem, params, b, layout),
        Some(ScoreFamily::Poisson) => poisson_beta_step(problem, params, b, layout),
        None => params.beta,
    };
    let alpha = if problem.method.has_binary() {
        probit_alpha_step(problem, params, b, layout)
    } else {
        params.alpha
    };
    (beta, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, GameRecord};
    use crate::estimator::fit::initial_parameters;
    use crate::estimator::mode::find_mode;
    use crate::model_spec::{Method, ModelSpec};
    use crate::simulate::{correlated_normal_truth, simulate_season, OutcomeRule, SeasonConfig};
    use nalgebra::DMatrix;

    fn setup(
        method: Method,
        seed: u64,
    ) -> (Problem, ParameterLayout, Parameters, Vec<f64>, DMatrix<f64>) {
        let s = simulate_season(&SeasonConfig {
            teams: 6,
            rounds: 4,
            neutral_fraction: 0.2,
            family: ScoreFamily::Normal,
            truth: correlated_normal_truth(),
            outcome: OutcomeRule::Probit,
            seed,
        })
        .unwrap();
        let problem = Problem::new(&s.data, method).unwrap();
        let layout = ParameterLayout::new(&s.data, &ModelSpec::new(method));
        let mut params = initial_parameters(&problem, &layout);
        params.gstar = correlated_normal_truth().gstar;
        let state = find_mode(&problem, &params, 1e-12, &vec![0.0; problem.q()]).unwrap();
        let cov = state.negative_curvature.to_dense().try_inverse().unwrap();
        (problem, layout, params, state.b, cov)
    }

    #[test]
    fn g_update_matches_dense_inverse() {
        for method in [Method::NB, Method::N, Method::B] {
            let (problem, layout, params, b, cov) = setup(method, 5);
            let state = find_mode(&problem, &params, 1e-12, &b).unwrap();
            let inverse = state.factorization.selected_inverse();
            let (g, _) = em_update_g(&state.b, &inverse, &params, problem.teams, &layout);
            let mut dense = Matrix3::zeros();
            for j in 0..problem.teams {
                let bj = Vector3::new(b[3 * j], b[3 * j + 1], b[3 * j + 2]);
                dense += bj * bj.transpose() + cov.fixed_view::<3, 3>(3 * j, 3 * j);
            }
            dense /= problem.teams as f64;
            for i in 0..3 {
                for k in 0..3 {
                    let expected = if layout.g_free(i, k) {
                        dense[(i, k)]
                    } else {
                        params.gstar[(i, k)]
                    };
                    assert!((g[(i, k)] - expected).abs() < 1e-10, "{method} G[{i},{k}]");
                }
            }
            if method == Method::NB {
                assert!(g.symmetric_eigenvalues().min() > 0.0);
            }
        }
    }

    #[test]
    fn r_update_matches_dense_inverse() {
        let (problem, _, params, b, cov) = setup(Method::NB, 6);
        let state = find_mode(&problem, &params, 1e-12, &b).unwrap();
        let inverse = state.factorization.selected_inverse();
        let r = em_update_r(&b, &inverse, &params.beta, &problem).unwrap();
        let design = problem.score.as_ref().unwrap();
        let z = design.z.to_dense();
        let x = design.x.to_dense();
        let beta = nalgebra::DVector::from_column_slice(&params.beta);
        let bv = nalgebra::DVector::from_column_slice(&b);
        let y = nalgebra::DVector::from_column_slice(&problem.y);
        let e = &y - &x * beta - &z * bv;
        let n = design.games();
        let mut dense = Matrix2::zeros();
        for i in 0..n {
            let zi = z.rows(2 * i, 2);
            let v = zi * &cov * zi.transpose();
            let ei = Vector2::new(e[2 * i], e[2 * i + 1]);
            dense += ei * ei.transpose() + Matrix2::from_iterator(v.iter().cloned());
        }
        dense /= n as f64;
        assert!((r - dense).amax() < 1e-10);
        assert!(em_update_r(
            &b,
            &inverse,
            &params.beta,
            &Problem {
                method: Method::B,
                ..problem
            }
        )
        .is_none());
    }

    #[test]
    fn location_means_without_team_effects() {
        let mk = |h: &str, a: &str, n: bool, yh: f64, ya: f64| GameRecord {
            game_id: format!("{h}{a}{yh}"),
            home_team: h.into(),
            away_team: a.into(),
            neutral_site: n,
            home_response: Some(yh),
            away_response: Some(ya),
            binary_outcome: None,
        };
        let data = Dataset::from_records(vec![
            mk("A", "B", false, 3.0, 1.0),
            mk("B", "A", false, 5.0, 2.0),
            mk("A", "B", true, 4.0, 6.0),
        ])
        .unwrap();
        let problem = Problem::new(&data, Method::N).unwrap();
        let layout = ParameterLayout::new(&data, &ModelSpec::new(Method::N));
        let params = Parameters {
            beta: [0.0; 3],
            alpha: 0.0,
            gstar: Matrix3::identity(),
            sigma2_g: None,
            rstar: Some(Matrix2::new(1.0, 0.3, 0.3, 2.0)),
        };
        let (beta, _) = update_fixed_effects(&problem, &params, &vec![0.0; problem.q()], &layout);
        assert!((beta[0] - 4.0).abs() < 1e-12);
        assert!((beta[1] - 1.5).abs() < 1e-12);
        // The neutral mean weights the two responses by Σ⁻¹1 = (1.7, 0.7)/1.91.
        assert!((beta[2] - (4.0 * 1.7 + 6.0 * 0.7) / 2.4).abs() < 1e-12);
    }
}
