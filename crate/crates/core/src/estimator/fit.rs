use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::data::Dataset;
use crate::design::FIXED_NEUTRAL;
use crate::error::{Error, Result};
use crate::estimator::em::{em_update_g, em_update_r, update_fixed_effects};
use crate::estimator::hessian::{parameter_hessian, ParameterHessian};
use crate::estimator::layout::{ParameterLayout, DEFENSE, OFFENSE, WIN};
use crate::estimator::mode::{find_mode_prepared, laplace_from_state, RandomEffectsState};
use crate::likelihood::{Parameters, Problem};
use crate::model_spec::{Method, ModelSpec, ScoreFamily};

/// Largest tolerated drop of the approximate marginal between EM
/// iterations before a warning is recorded.
const DECREASE_WARNING: f64 = 1e-8;

/// Empirical-mode ratings of one team. Effects the method does not model
/// are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamRating {
    pub team: String,
    pub offense: Option<f64>,
    pub defense: Option<f64>,
    pub win_propensity: Option<f64>,
    pub games: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub approximation: &'static str,
    pub converged: bool,
    pub em_iterations: usize,
    /// Relative parameter change at the last EM iteration.
    pub final_change: f64,
    pub newton_iterations: usize,
    /// Marginal log-likelihood along the accepted EM path.
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<String>,
    /// Fixed effects held at zero because no games inform them.
    pub pinned: Vec<String>,
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub layout: ParameterLayout,
    pub params: Parameters,
    pub teams: Vec<String>,
    /// Stacked `b̂` at the final parameters.
    pub mode: Vec<f64>,
    pub ratings: Vec<TeamRating>,
    pub marginal_loglik: f64,
    pub g_cor: Matrix3<f64>,
    pub r_cor: Option<Matrix2<f64>>,
    pub hessian: Option<ParameterHessian>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn team_id(&self, name: &str) -> Option<usize> {
        self.teams.binary_search_by(|t| t.as_str().cmp(name)).ok()
    }

    /// `(offense, defense, win propensity)` modes of team `j`.
    pub fn effects(&self, j: usize) -> [f64; 3] {
        [self.mode[3 * j], self.mode[3 * j + 1], self.mode[3 * j + 2]]
    }
}

/// Correlation matrix of a covariance; zero-variance rows get a unit
/// diagonal and zero correlations.
pub fn correlation<const D: usize>(
    m: &nalgebra::SMatrix<f64, D, D>,
) -> nalgebra::SMatrix<f64, D, D> {
    nalgebra::SMatrix::from_fn(|i, j| {
        if i == j {
            return 1.0;
        }
        let d = m[(i, i)] * m[(j, j)];
        if d > 0.0 {
            (m[(i, j)] / d.sqrt()).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

/// Starting values: location means (log-means for Poisson), α = 0,
/// G* = 0.25·I, σ²_g = 0.1, and R* from the mean-removed responses.
pub fn initial_parameters(problem: &Problem, layout: &ParameterLayout) -> Parameters {
    let mut beta = [0.0; 3];
    let mut rstar = None;
    if let Some(design) = &problem.score {
        let mut sum = [0.0; 3];
        let mut count = [0.0; 3];
        for row in 0..design.x.nrows() {
            let col = design.x.row(row).next().map_or(FIXED_NEUTRAL, |(c, _)| c);
            sum[col] += problem.y[row];
            count[col] += 1.0;
        }
        let poisson = problem.method.score_family() == Some(ScoreFamily::Poisson);
        for k in 0..3 {
            if layout.beta_active[k] && count[k] > 0.0 {
                let mean = sum[k] / count[k];
                beta[k] = if poisson { mean.max(0.1).ln() } else { mean };
            }
        }
        if problem.method.score_family() == Some(ScoreFamily::Normal) {
            let n = design.games();
            let mut cov = Matrix2::zeros();
            for i in 0..n {
                let e = Vector2::new(
                    problem.y[2 * i] - design.x.row_dot(2 * i, &beta),
                    problem.y[2 * i + 1] - design.x.row_dot(2 * i + 1, &beta),
                );
                cov += e * e.transpose();
            }
            if n > 0 {
                cov /= n as f64;
            }
            rstar = Some(regularize_covariance(cov));
        }
    }
    Parameters {
        beta,
        alpha: 0.0,
        gstar: Matrix3::identity() * 0.25,
        sigma2_g: problem.method.has_game_effect().then_some(0.1),
        rstar,
    }
}

/// Keep a starting 2×2 covariance inside the positive-definite cone.
fn regularize_covariance(cov: Matrix2<f64>) -> Matrix2<f64> {
    let scale = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let floor = 1e-3 * scale.max(1.0);
    let v0 = cov[(0, 0)].max(floor);
    let v1 = cov[(1, 1)].max(floor);
    let limit = 0.9 * (v0 * v1).sqrt();
    let c = cov[(0, 1)].clamp(-limit, limit);
    Matrix2::new(v0, c, c, v1)
}

fn relative_change(layout: &ParameterLayout, old: &Parameters, new: &Parameters) -> f64 {
    layout
        .slots()
        .into_iter()
        .map(|s| {
            let (a, b) = (s.get(old), s.get(new));
            (b - a).abs() / (1.0 + a.abs())
        })
        .fold(0.0, f64::max)
}

/// Fit a model by EM with a first-order Laplace E-step.
pub fn fit(data: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    let problem = Problem::new(data, spec.method)?;
    let layout = ParameterLayout::new(data, spec);
    let start = initial_parameters(&problem, &layout);
    fit_from(data, &problem, &layout, spec, start)
}

/// Parameters together with the mode located at them.
struct Point {
    params: Parameters,
    state: RandomEffectsState,
    loglik: f64,
}

/// Mode-finding with warm starts and bookkeeping shared by every EM
/// evaluation.
struct Evaluator<'a> {
    problem: &'a Problem,
    spec: &'a ModelSpec,
    warm: Vec<f64>,
    newton_total: usize,
    ridge: Option<f64>,
}

impl Evaluator<'_> {
    fn at(&mut self, params: Parameters) -> Result<Point> {
        let prepared = params.prepare()?;
        let state = find_mode_prepared(
            self.problem,
            &params,
            &prepared,
            self.spec.newton_tolerance,
            &self.warm,
        )?;
        self.newton_total += state.newton_iterations;
        if let Some(r) = state.ridge {
            self.ridge = Some(self.ridge.map_or(r, |x: f64| x.max(r)));
        }
        self.warm.clone_from(&state.b);
        let loglik = laplace_from_state(&state);
        Ok(Point {
            params,
            state,
            loglik,
        })
    }
}

fn with_values(layout: &ParameterLayout, base: &Parameters, values: &[f64]) -> Parameters {
    let mut p = base.clone();
    for (slot, &v) in layout.slots().iter().zip(values) {
        slot.set(&mut p, v);
    }
    p
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Decreases of the approximate marginal across single EM map steps.
#[derive(Default)]
struct Drops {
    count: usize,
    first_at: usize,
    largest: f64,
}

impl Drops {
    fn note(&mut self, before: f64, after: f64, iteration: usize) {
        if after < before - DECREASE_WARNING {
            if self.count == 0 {
                self.first_at = iteration;
            }
            self.count += 1;
            self.largest = self.largest.max(before - after);
        }
    }

    fn warning(&self) -> Option<String> {
        (self.count > 0).then(|| {
            format!(
                "approximate marginal log-likelihood decreased at {} EM iteration(s), \
                 first at iteration {}, largest drop {:.3e}",
                self.count, self.first_at, self.largest
            )
        })
    }
}

enum Step {
    Next(Parameters),
    Converged(Parameters),
}

/// One application of the EM map, counted and checked for convergence.
fn em_map(
    problem: &Problem,
    layout: &ParameterLayout,
    spec: &ModelSpec,
    from: &Point,
    iterations: &mut usize,
    change: &mut f64,
) -> Result<Step> {
    let next = em_step(problem, layout, &from.params, &from.state);
    *iterations += 1;
    *change = relative_change(layout, &from.params, &next);
    if !change.is_finite() {
        return Err(Error::Numeric(
            "EM update produced non-finite parameters".into(),
        ));
    }
    Ok(if *change < spec.em_tolerance {
        Step::Converged(next)
    } else {
        Step::Next(next)
    })
}

enum Stop {
    Converged(Parameters),
    Exhausted,
    Failed(String),
}

pub(crate) fn fit_from(
    data: &Dataset,
    problem: &Problem,
    layout: &ParameterLayout,
    spec: &ModelSpec,
    start: Parameters,
) -> Result<FitResult> {
    let mut eval = Evaluator {
        problem,
        spec,
        warm: vec![0.0; problem.q()],
        newton_total: 0,
        ridge: None,
    };
    let exact = problem.method == Method::N;
    let mut current = eval.at(start)?;
    let mut trace = vec![current.loglik];
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let mut step_max = 1.0f64;
    let mut drops = Drops::default();

    let stop = loop {
        if iterations >= spec.max_em_iterations {
            break Stop::Exhausted;
        }
        let p1 = match em_map(
            problem,
            layout,
            spec,
            &current,
            &mut iterations,
            &mut change,
        )? {
            Step::Converged(p) => break Stop::Converged(p),
            Step::Next(p) => p,
        };
        let first = match eval.at(p1) {
            Ok(pt) => pt,
            Err(e) => break Stop::Failed(format!("EM stopped at iteration {iterations}: {e}")),
        };
        trace.push(first.loglik);
        drops.note(current.loglik, first.loglik, iterations);
        if !spec.accelerate || iterations >= spec.max_em_iterations {
            current = first;
            continue;
        }
        let p2 = match em_map(problem, layout, spec, &first, &mut iterations, &mut change)? {
            Step::Converged(p) => {
                current = first;
                break Stop::Converged(p);
            }
            Step::Next(p) => p,
        };
        let second = match eval.at(p2) {
            Ok(pt) => pt,
            Err(e) => {
                current = first;
                break Stop::Failed(format!("EM stopped at iteration {iterations}: {e}"));
            }
        };
        trace.push(second.loglik);
        drops.note(first.loglik, second.loglik, iterations);

        // Squared extrapolation along the two-step EM path, accepted only if
        // the EM step from the extrapolated point shrinks the fixed-point
        // residual (and, for the exact normal model, keeps the marginal
        // non-decreasing).
        let residual = change;
        let x0 = layout.values(&current.params);
        let x1 = layout.values(&first.params);
        let x2 = layout.values(&second.params);
        let r: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let v: Vec<f64> = (0..x0.len()).map(|k| x2[k] - 2.0 * x1[k] + x0[k]).collect();
        let (nr, nv) = (norm(&r), norm(&v));
        let mut accepted: Option<(Point, bool)> = None;
        if nv > 0.0 && iterations < spec.max_em_iterations {
            let ratio = nr / nv;
            let a = ratio.clamp(1.0, step_max);
            if a > 1.0 {
                let xp: Vec<f64> = (0..x0.len())
                    .map(|k| x0[k] + 2.0 * a * r[k] + a * a * v[k])
                    .collect();
                if let Ok(jump) = eval.at(with_values(layout, &second.params, &xp)) {
                    if let Ok(step) =
                        em_map(problem, layout, spec, &jump, &mut iterations, &mut change)
                    {
                        let (p3, done) = match step {
                            Step::Converged(p) => (p, true),
                            Step::Next(p) => (p, false),
                        };
                        if let Ok(third) = eval.at(p3) {
                            drops.note(jump.loglik, third.loglik, iterations);
                            let ok = third.loglik.is_finite()
                                && change < residual
                                && (!exact || third.loglik >= second.loglik);
                            if ok {
                                accepted = Some((third, done));
                            }
                        }
                    }
                }
                if accepted.is_some() {
                    if a >= step_max {
                        step_max *= 4.0;
                    }
                } else {
                    step_max = (step_max / 4.0).max(1.0);
                    change = residual;
                }
            } else if ratio >= step_max {
                step_max *= 4.0;
            }
        }
        match accepted {
            Some((third, done)) => {
                trace.push(third.loglik);
                current = third;
                if done {
                    break Stop::Converged(current.params.clone());
                }
            }
            None => current = second,
        }
    };

    let converged = matches!(stop, Stop::Converged(_));
    let last = match stop {
        Stop::Converged(p) => match eval.at(p) {
            Ok(pt) => pt,
            Err(e) => {
                warnings.push(format!("final EM update could not be evaluated: {e}"));
                current
            }
        },
        Stop::Exhausted => {
            warnings.push(format!(
                "EM did not converge in {iterations} iterations (last relative change {change:.3e})"
            ));
            current
        }
        Stop::Failed(msg) => {
            warnings.push(msg);
            current
        }
    };

    if let Some(w) = drops.warning() {
        warnings.push(w);
    }
    if let Some(r) = last.state.ridge {
        warnings.push(format!(
            "curvature at the final mode needed a ridge of {r:.1e}"
        ));
    }

    let mut result = assemble(data, problem, layout, last.params, &last.state, last.loglik);
    result.diagnostics = FitDiagnostics {
        approximation: "first-order Laplace",
        converged,
        em_iterations: iterations,
        final_change: change,
        newton_iterations: eval.newton_total,
        loglik_trace: trace,
        warnings,
        pinned: layout.pinned(),
        ridge: eval.ridge,
    };
    for name in layout.pinned() {
        result
            .diagnostics
            .warnings
            .push(format!("{name} fixed at 0: no games inform it"));
    }
    if spec.compute_hessian {
        let h = parameter_hessian(&result, problem, spec);
        if let Some(w) = &h.diagnostics.warning {
            result.diagnostics.warnings.push(w.clone());
        }
        result.hessian = Some(h);
    }
    Ok(result)
}

/// One EM iteration's M-steps: fixed effects first, then R* at the new β,
/// then G* (and σ²_g).
pub fn em_step(
    problem: &Problem,
    layout: &ParameterLayout,
    params: &Parameters,
    state: &RandomEffectsState,
) -> Parameters {
    let inverse = state.factorization.selected_inverse();
    let (beta, alpha) = update_fixed_effects(problem, params, &state.b, layout);
    let rstar = em_update_r(&state.b, &inverse, &beta, problem).or(params.rstar);
    let (gstar, sigma2_g) = em_update_g(&state.b, &inverse, params, problem.teams, layout);
    Parameters {
        beta,
        alpha,
        gstar,
        sigma2_g,
        rstar,
    }
}

fn assemble(
    data: &Dataset,
    problem: &Problem,
    layout: &ParameterLayout,
    params: Parameters,
    state: &RandomEffectsState,
    marginal: f64,
) -> FitResult {
    let games = data.games_per_team();
    let active = layout.effects_active;
    let ratings = data
        .teams()
        .iter()
        .enumerate()
        .map(|(j, name)| TeamRating {
            team: name.clone(),
            offense: active[OFFENSE].then(|| state.b[3 * j + OFFENSE]),
            defense: active[DEFENSE].then(|| state.b[3 * j + DEFENSE]),
            win_propensity: active[WIN].then(|| state.b[3 * j + WIN]),
            games: games[j],
        })
        .collect();
    FitResult {
        method: problem.method,
        layout: layout.clone(),
        g_cor: correlation(&params.gstar),
        r_cor: params.rstar.as_ref().map(correlation),
        params,
        teams: data.teams().to_vec(),
        mode: state.b.clone(),
        ratings,
        marginal_loglik: marginal,
        hessian: None,
        diagnostics: FitDiagnostics {
            approximation: "first-order Laplace",
            converged: false,
            em_iterations: 0,
            final_change: f64::NAN,
            newton_iterations: 0,
            loglik_trace: Vec::new(),
            warnings: Vec::new(),
            pinned: Vec::new(),
            ridge: None,
        },
    }
}
