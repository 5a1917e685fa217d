//! Fit documents (JSON), delimited tables and the text summaries printed by
//! the command-line tool.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{DMatrix, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::hessian::diagnose;
use crate::estimator::{
    correlation, FitDiagnostics, FitResult, ParameterHessian, ParameterLayout, TeamRating,
};
use crate::evaluator::{BestModel, ComparisonReport, CvResult};
use crate::likelihood::Parameters;
use crate::model_spec::Method;
use crate::predictor::{RankedTeam, ScatterRow};

pub const FIT_FORMAT: &str = "mvglmm-fit/1";

const EFFECT_LABELS: [&str; 3] = ["Offense", "Defense", "Win Propensity"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub team: String,
    pub games: usize,
    pub offense: Option<f64>,
    pub defense: Option<f64>,
    pub win_propensity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianDocument {
    pub names: Vec<String>,
    /// Non-finite entries are written as null.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub positive_definite: bool,
    pub condition_number: Option<f64>,
    pub near_singular: bool,
    pub warning: Option<String>,
}

/// Everything needed to report on, and predict from, a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format: String,
    pub method: Method,
    pub layout: ParameterLayout,
    pub approximation: String,
    pub converged: bool,
    pub em_iterations: usize,
    pub newton_iterations: usize,
    pub final_change: Option<f64>,
    pub marginal_loglik: f64,
    /// Free parameters in reporting order.
    pub parameters: Vec<NamedValue>,
    /// Labels of the modelled team effects, indexing `G` and `G.cor`.
    pub effects: Vec<String>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "G.cor")]
    pub g_cor: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Option<[[f64; 2]; 2]>,
    #[serde(rename = "R.cor")]
    pub r_cor: Option<[[f64; 2]; 2]>,
    pub game_effect_variance: Option<f64>,
    pub home_field: [f64; 3],
    pub binary_mean: f64,
    pub ratings: Vec<RatingRow>,
    pub game_effects: Vec<f64>,
    pub hessian: Option<HessianDocument>,
    pub pinned: Vec<String>,
    pub warnings: Vec<String>,
    pub loglik_trace: Vec<f64>,
}

fn active(layout: &ParameterLayout) -> Vec<usize> {
    (0..3).filter(|&k| layout.effects_active[k]).collect()
}

fn sub3(m: &Matrix3<f64>, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| idx.iter().map(|&j| m[(i, j)]).collect())
        .collect()
}

fn arr2(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl FitDocument {
    pub fn from_fit(fit: &FitResult) -> FitDocument {
        let idx = active(&fit.layout);
        let p = fit.teams.len();
        FitDocument {
            format: FIT_FORMAT.into(),
            method: fit.method,
            layout: fit.layout.clone(),
            approximation: fit.diagnostics.approximation.into(),
            converged: fit.diagnostics.converged,
            em_iterations: fit.diagnostics.em_iterations,
            newton_iterations: fit.diagnostics.newton_iterations,
            final_change: finite(fit.diagnostics.final_change),
            marginal_loglik: fit.marginal_loglik,
            parameters: fit
                .layout
                .slots()
                .into_iter()
                .map(|s| NamedValue {
                    name: s.name(),
                    value: s.get(&fit.params),
                })
                .collect(),
            effects: idx.iter().map(|&k| EFFECT_LABELS[k].to_string()).collect(),
            g: sub3(&fit.params.gstar, &idx),
            g_cor: sub3(&fit.g_cor, &idx),
            r: fit.params.rstar.as_ref().map(arr2),
            r_cor: fit.r_cor.as_ref().map(arr2),
            game_effect_variance: fit.params.sigma2_g,
            home_field: fit.params.beta,
            binary_mean: fit.params.alpha,
            ratings: fit
                .ratings
                .iter()
                .map(|r| RatingRow {
                    team: r.team.clone(),
                    games: r.games,
                    offense: r.offense,
                    defense: r.defense,
                    win_propensity: r.win_propensity,
                })
                .collect(),
            game_effects: fit.mode[3 * p..].to_vec(),
            hessian: fit.hessian.as_ref().map(|h| HessianDocument {
                names: h.names.clone(),
                matrix: (0..h.matrix.nrows())
                    .map(|i| {
                        (0..h.matrix.ncols())
                            .map(|j| finite(h.matrix[(i, j)]))
                            .collect()
                    })
                    .collect(),
                positive_definite: h.diagnostics.positive_definite,
                condition_number: h.diagnostics.condition_number.and_then(finite),
                near_singular: h.diagnostics.near_singular,
                warning: h.diagnostics.warning.clone(),
            }),
            pinned: fit.diagnostics.pinned.clone(),
            warnings: fit.diagnostics.warnings.clone(),
            loglik_trace: fit.diagnostics.loglik_trace.clone(),
        }
    }

    /// Rebuild a fit for prediction, ranking and contrasts.
    pub fn to_fit(&self) -> Result<FitResult> {
        if self.format != FIT_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported fit document format `{}`",
                self.format
            )));
        }
        let idx = active(&self.layout);
        let mut gstar = Matrix3::identity() * 0.25;
        if self.g.len() != idx.len() || self.g.iter().any(|row| row.len() != idx.len()) {
            return Err(Error::Validation(
                "G does not match the modelled effects".into(),
            ));
        }
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                gstar[(i, j)] = self.g[a][b];
            }
        }
        let rstar = self
            .r
            .map(|r| Matrix2::new(r[0][0], r[0][1], r[1][0], r[1][1]));
        let params = Parameters {
            beta: self.home_field,
            alpha: self.binary_mean,
            gstar,
            sigma2_g: self.game_effect_variance,
            rstar,
        };
        let teams: Vec<String> = self.ratings.iter().map(|r| r.team.clone()).collect();
        if teams.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "ratings are not in team-name order".into(),
            ));
        }
        let mut mode = Vec::with_capacity(3 * teams.len() + self.game_effects.len());
        for r in &self.ratings {
            mode.extend([
                r.offense.unwrap_or(0.0),
                r.defense.unwrap_or(0.0),
                r.win_propensity.unwrap_or(0.0),
            ]);
        }
        mode.extend(&self.game_effects);
        let ratings = self
            .ratings
            .iter()
            .map(|r| TeamRating {
                team: r.team.clone(),
                offense: r.offense,
                defense: r.defense,
                win_propensity: r.win_propensity,
                games: r.games,
            })
            .collect();
        let hessian = match &self.hessian {
            Some(h) => {
                let k = h.names.len();
                let matrix = DMatrix::from_fn(k, k, |i, j| h.matrix[i][j].unwrap_or(f64::NAN));
                let (diagnostics, covariance) = diagnose(&matrix);
                Some(ParameterHessian {
                    slots: self.layout.slots(),
                    names: h.names.clone(),
                    matrix,
                    covariance,
                    diagnostics,
                })
            }
            None => None,
        };
        Ok(FitResult {
            method: self.method,
            layout: self.layout.clone(),
            g_cor: correlation(&params.gstar),
            r_cor: params.rstar.as_ref().map(correlation),
            params,
            teams,
            mode,
            ratings,
            marginal_loglik: self.marginal_loglik,
            hessian,
            diagnostics: FitDiagnostics {
                approximation: "first-order Laplace",
                converged: self.converged,
                em_iterations: self.em_iterations,
                final_change: self.final_change.unwrap_or(f64::NAN),
                newton_iterations: self.newton_iterations,
                loglik_trace: self.loglik_trace.clone(),
                warnings: self.warnings.clone(),
                pinned: self.pinned.clone(),
                ridge: None,
            },
        })
    }

    pub fn write_json<W: Write>(&self, mut sink: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut sink, self)?;
        sink.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(source: R) -> Result<FitDocument> {
        Ok(serde_json::from_reader(source)?)
    }
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn table<W: Write>(
    sink: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ratings<W: Write>(fit: &FitResult, sink: W) -> Result<()> {
    table(
        sink,
        &["team", "games", "offense", "defense", "win_propensity"],
        fit.ratings.iter().map(|r| {
            vec![
                r.team.clone(),
                r.games.to_string(),
                na(r.offense),
                na(r.defense),
                na(r.win_propensity),
            ]
        }),
    )
}

pub fn write_ranking<W: Write>(ranking: &[RankedTeam], sink: W) -> Result<()> {
    table(
        sink,
        &["rank", "team", "rating"],
        ranking
            .iter()
            .map(|r| vec![r.rank.to_string(), r.team.clone(), r.rating.to_string()]),
    )
}

pub fn write_scatter<W: Write>(rows: &[ScatterRow], sink: W) -> Result<()> {
    table(
        sink,
        &["team", "offense", "defense", "win_propensity"],
        rows.iter().map(|r| {
            vec![
                r.team.clone(),
                r.offense.to_string(),
                r.defense.to_string(),
                r.win_propensity.to_string(),
            ]
        }),
    )
}

/// Per-game held-out metrics of one or more CV runs over the same games.
pub fn write_cv_games<W: Write>(runs: &[CvResult], sink: W) -> Result<()> {
    table(
        sink,
        &[
            "method",
            "game_id",
            "fold",
            "home",
            "away",
            "neutral.site",
            "pred.home.response",
            "pred.away.response",
            "home.win.probability",
            "log_loss",
            "abs_residual",
        ],
        runs.iter().flat_map(|run| {
            run.games.iter().map(move |g| {
                vec![
                    run.method.to_string(),
                    g.game_id.clone(),
                    (g.fold + 1).to_string(),
                    g.home_team.clone(),
                    g.away_team.clone(),
                    (g.neutral_site as u8).to_string(),
                    na(g.predicted_home_response),
                    na(g.predicted_away_response),
                    na(g.home_win_probability),
                    na(g.log_loss),
                    na(g.abs_residual),
                ]
            })
        }),
    )
}

pub fn write_cv_folds<W: Write>(runs: &[CvResult], sink: W) -> Result<()> {
    table(
        sink,
        &[
            "method",
            "fold",
            "train_games",
            "test_games",
            "fitted",
            "converged",
            "error",
        ],
        runs.iter().flat_map(|run| {
            run.folds.iter().map(move |f| {
                vec![
                    run.method.to_string(),
                    (f.fold + 1).to_string(),
                    f.train_games.to_string(),
                    f.test_games.to_string(),
                    f.fitted.to_string(),
                    f.converged.to_string(),
                    f.error.clone().unwrap_or_default(),
                ]
            })
        }),
    )
}

fn best_cell(b: &BestModel) -> String {
    match b.best {
        Some(m) if b.significant => format!("{m}*"),
        Some(m) => m.to_string(),
        None => "NA".into(),
    }
}

/// One row per label: the best model for the response and for the outcome,
/// with the (weakest pairwise) sign-test p-values; `*` marks significance.
pub fn write_best_models<W: Write>(rows: &[(String, BestModel, BestModel)], sink: W) -> Result<()> {
    table(
        sink,
        &[
            "label",
            "best_model_response",
            "best_model_outcome",
            "p_value_response",
            "p_value_outcome",
            "significant_response",
            "significant_outcome",
        ],
        rows.iter().map(|(label, resp, out)| {
            vec![
                label.clone(),
                best_cell(resp),
                best_cell(out),
                na(resp.p_value),
                na(out.p_value),
                resp.significant.to_string(),
                out.significant.to_string(),
            ]
        }),
    )
}

/// Pairwise sign-test table.
pub fn write_comparisons<W: Write>(rows: &[(String, ComparisonReport)], sink: W) -> Result<()> {
    table(
        sink,
        &[
            "label",
            "metric",
            "model_a",
            "model_b",
            "games",
            "a_better",
            "b_better",
            "ties",
            "median_a",
            "median_b",
            "p_value",
            "preferred",
            "significant",
        ],
        rows.iter().map(|(label, c)| {
            vec![
                label.clone(),
                serde_json::to_value(c.metric)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                c.model_a.to_string(),
                c.model_b.to_string(),
                c.games.to_string(),
                c.sign_test.negative.to_string(),
                c.sign_test.positive.to_string(),
                c.sign_test.zeros.to_string(),
                na(c.median_a),
                na(c.median_b),
                na(c.sign_test.p_value),
                c.preferred.map_or_else(|| "NA".into(), |m| m.to_string()),
                c.significant.to_string(),
            ]
        }),
    )
}

fn matrix_block(out: &mut String, labels: &[&str], rows: &[Vec<f64>]) {
    let _ = write!(out, "{:>6}", "");
    for l in labels {
        let _ = write!(out, " {l:>14}");
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let _ = write!(out, "{:>6}", format!("[{},]", i + 1));
        for v in row {
            let _ = write!(out, " {v:>14.7}");
        }
        out.push('\n');
    }
}

/// Human-readable parameter summary using the reference field names.
pub fn fit_summary(fit: &FitResult) -> String {
    let doc = FitDocument::from_fit(fit);
    let mut out = String::new();
    let _ = writeln!(out, "method: {} ({})", fit.method, doc.approximation);
    let _ = writeln!(
        out,
        "converged: {} after {} EM iterations (final relative change {})",
        if doc.converged { "yes" } else { "NO" },
        doc.em_iterations,
        doc.final_change.map_or("NA".into(), |c| format!("{c:.2e}"))
    );
    let _ = writeln!(out, "marginal log-likelihood: {:.6}", doc.marginal_loglik);
    let _ = writeln!(out, "teams: {}", fit.teams.len());
    out.push_str("\nparameters\n");
    for nv in &doc.parameters {
        let _ = writeln!(out, "  {:<22} {:>12.7}", nv.name, nv.value);
    }
    let labels: Vec<&str> = doc.effects.iter().map(String::as_str).collect();
    out.push_str("\nG\n");
    matrix_block(&mut out, &labels, &doc.g);
    out.push_str("\nG.cor\n");
    matrix_block(&mut out, &labels, &doc.g_cor);
    if let Some(s) = doc.game_effect_variance {
        let _ = writeln!(out, "\ngame-effect variance: {s:.7}");
    }
    for (name, m) in [("R", doc.r), ("R.cor", doc.r_cor)] {
        let _ = writeln!(out, "\n{name}");
        match m {
            Some(m) => {
                let rows: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
                matrix_block(&mut out, &["Home", "Away"], &rows);
            }
            None => out.push_str("N/A for this object.\n"),
        }
    }
    out.push_str("\nHessian\n");
    match &doc.hessian {
        Some(h) => {
            let _ = writeln!(out, "  free parameters: {}", h.names.len());
            let _ = writeln!(out, "  positive-definite: {}", h.positive_definite);
            let _ = writeln!(
                out,
                "  condition number of the inverse-Hessian correlation matrix: {}",
                h.condition_number
                    .map_or("NA".into(), |c| format!("{c:.3}"))
            );
            let _ = writeln!(out, "  near-singular: {}", h.near_singular);
        }
        None => out.push_str("  not computed\n"),
    }
    if !doc.warnings.is_empty() {
        out.push_str("\nwarnings\n");
        for w in &doc.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}
