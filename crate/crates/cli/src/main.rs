use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use mvglmm::data::write_dataset;
use mvglmm::evaluator::{best_model, compare, cross_validate, CvPlan, CvResult, Metric};
use mvglmm::model_spec::ScoreFamily;
use mvglmm::predictor::{emit_rating_scatter, predict_game, rank_teams, Effect};
use mvglmm::report::{self, FitDocument};
use mvglmm::simulate::{
    correlated_normal_truth, sacks_truth, simulate_season, OutcomeRule, SeasonConfig,
};
use mvglmm::{fit, load_dataset, Dataset, FitResult, Method, ModelSpec};

/// Exit status of a fit whose artifacts were written but whose EM loop
/// stopped before converging.
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "mvglmm",
    version,
    about = "Joint team ratings from paired-competition data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Fit a model and write the fit document, ratings and summary.
    Fit(FitArgs),
    /// Predict a single game from a saved fit or an inline fit.
    Predict(PredictArgs),
    /// Rank teams by one rating.
    Rank(RankArgs),
    /// K-fold cross-validation of one method.
    Cv(CvArgs),
    /// Cross-validate several methods and sign-test them on shared games.
    Compare(CompareArgs),
    /// Write a seeded synthetic season.
    Simulate(SimulateArgs),
}

#[derive(Args, Serialize)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "MVGLMM_OUT", default_value = "mvglmm-out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SolverArgs {
    #[arg(long = "max-iter", default_value_t = 500)]
    max_iter: usize,
    /// Relative parameter change at which EM stops.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Compute the parameter Hessian and its identifiability diagnostics.
    #[arg(long)]
    hessian: bool,
}

impl SolverArgs {
    fn spec(&self, method: Method) -> ModelSpec {
        ModelSpec::new(method)
            .with_max_iterations(self.max_iter)
            .with_tolerance(self.tol)
            .with_hessian(self.hessian)
    }
}

#[derive(Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Method,
    /// Recorded in the manifest; fitting itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

/// A saved fit document, or data plus a method to fit inline.
#[derive(Args, Serialize)]
struct SourceArgs {
    #[arg(long, conflicts_with_all = ["data", "method"])]
    fit: Option<PathBuf>,
    #[arg(long, requires = "method")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    method: Option<Method>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    home: String,
    #[arg(long)]
    away: String,
    #[arg(long)]
    neutral: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct RankArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// offense, defense or win_propensity.
    #[arg(long, default_value = "offense")]
    effect: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated method codes.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "N,B,NB")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Row label of the best-model table.
    #[arg(long, default_value = "data")]
    label: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Scenario {
    /// Normal responses with correlated ratings; probit outcomes.
    Normal,
    /// Low Poisson counts; probit outcomes.
    Poisson,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 24)]
    teams: usize,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long = "neutral-fraction", default_value_t = 0.1)]
    neutral_fraction: f64,
    #[arg(long, value_enum, default_value_t = Scenario::Normal)]
    scenario: Scenario,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

/// Artifacts written so far, for the manifest.
struct Run {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl Run {
    fn new(dir: &Path) -> Result<Run> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts
            .push((name.to_string(), format!("{:x}", Sha256::digest(bytes))));
        Ok(())
    }

    fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> mvglmm::Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(mut self, command: &Command, seed: Option<u64>) -> Result<()> {
        let artifacts: serde_json::Map<String, serde_json::Value> = self
            .artifacts
            .iter()
            .map(|(n, h)| (n.clone(), json!({ "sha256": h })))
            .collect();
        let manifest = json!({
            "tool": "mvglmm",
            "version": env!("CARGO_PKG_VERSION"),
            "config": command,
            "seed": seed,
            "artifacts": artifacts,
        });
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.artifacts.clear();
        Ok(())
    }
}

fn read_data(path: &Path, method: Method) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(load_dataset(BufReader::new(file), method)?)
}

fn resolve_fit(source: &SourceArgs) -> Result<FitResult> {
    match (&source.fit, &source.data, source.method) {
        (Some(path), _, _) => {
            let file =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            Ok(FitDocument::read_json(BufReader::new(file))?.to_fit()?)
        }
        (None, Some(data), Some(method)) => {
            let data = read_data(data, method)?;
            Ok(fit(&data, &source.solver.spec(method))?)
        }
        _ => bail!("give either --fit or both --data and --method"),
    }
}

fn write_fit(run: &mut Run, result: &FitResult) -> Result<String> {
    let doc = FitDocument::from_fit(result);
    run.write_with("fit.json", |b| doc.write_json(b))?;
    run.write_with("ratings.csv", |b| report::write_ratings(result, b))?;
    if result.method.is_joint() {
        let rows = emit_rating_scatter(result)?;
        run.write_with("scatter.csv", |b| report::write_scatter(&rows, b))?;
    }
    let summary = report::fit_summary(result);
    run.write("summary.txt", summary.as_bytes())?;
    Ok(summary)
}

/// Returns the exit status for a completed run.
fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Fit(a) => {
            let data = read_data(&a.data, a.method)?;
            let result = fit(&data, &a.solver.spec(a.method))?;
            let mut run = Run::new(&a.out.out)?;
            let summary = write_fit(&mut run, &result)?;
            run.finish(command, Some(a.seed))?;
            print!("{summary}");
            if !result.diagnostics.converged {
                eprintln!(
                    "error: EM did not converge in {} iterations; artifacts were written with converged = false",
                    result.diagnostics.em_iterations
                );
                return Ok(EXIT_NOT_CONVERGED);
            }
        }
        Command::Predict(a) => {
            let result = resolve_fit(&a.source)?;
            let prediction = predict_game(&result, &a.home, &a.away, a.neutral)?;
            let text = format!("{prediction}\n");
            let mut run = Run::new(&a.out.out)?;
            run.write("prediction.txt", text.as_bytes())?;
            run.finish(command, None)?;
            print!("{text}");
        }
        Command::Rank(a) => {
            let effect: Effect = a.effect.parse()?;
            let result = resolve_fit(&a.source)?;
            let ranking = rank_teams(&result, effect)?;
            let mut run = Run::new(&a.out.out)?;
            run.write_with("ranking.csv", |b| report::write_ranking(&ranking, b))?;
            run.finish(command, None)?;
            for r in &ranking {
                println!("{:>4}  {:<24} {:>10.4}", r.rank, r.team, r.rating);
            }
        }
        Command::Cv(a) => {
            let data = read_data(&a.data, a.method)?;
            let plan = CvPlan::for_dataset(&data, a.folds, a.seed)?;
            let cv = cross_validate(&data, &a.solver.spec(a.method), &plan)?;
            let mut run = Run::new(&a.out.out)?;
            let runs = [cv];
            run.write_with("cv_games.csv", |b| report::write_cv_games(&runs, b))?;
            run.write_with("cv_folds.csv", |b| report::write_cv_folds(&runs, b))?;
            run.finish(command, Some(a.seed))?;
            print_cv(&runs[0]);
        }
        Command::Compare(a) => compare_methods(command, a)?,
        Command::Simulate(a) => {
            let (family, truth) = match a.scenario {
                Scenario::Normal => (ScoreFamily::Normal, correlated_normal_truth()),
                Scenario::Poisson => (ScoreFamily::Poisson, sacks_truth()),
            };
            let season = simulate_season(&SeasonConfig {
                teams: a.teams,
                rounds: a.rounds,
                neutral_fraction: a.neutral_fraction,
                family,
                truth,
                outcome: OutcomeRule::Probit,
                seed: a.seed,
            })?;
            let mut run = Run::new(&a.out.out)?;
            run.write_with("season.csv", |b| write_dataset(season.data.records(), b))?;
            run.finish(command, Some(a.seed))?;
            println!("{}", season.data.summary());
        }
    }
    Ok(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => "NA".into(),
        Some(x) if x != 0.0 && x.abs() < 1e-4 => format!("{x:.2e}"),
        Some(x) => format!("{x:.4}"),
    }
}

fn print_cv(cv: &CvResult) {
    println!(
        "{}: {} of {} games predicted, {} failed folds, mean log-loss {}, median log-loss {}, median |residual| {}",
        cv.method,
        cv.covered_games(),
        cv.games.len(),
        cv.failed_folds(),
        fmt_opt(cv.mean_log_loss()),
        fmt_opt(cv.median_log_loss()),
        fmt_opt(cv.median_abs_residual()),
    );
}

fn compare_methods(command: &Command, a: &CompareArgs) -> Result<()> {
    let methods = &a.methods;
    if methods.is_empty() {
        bail!("--methods needs at least one method");
    }
    // Each method reads the columns it models; the fold plan is shared so
    // every method is scored on the same games.
    let mut sets = Vec::new();
    for &m in methods {
        sets.push((m, read_data(&a.data, m)?));
    }
    let plan = CvPlan::for_dataset(&sets[0].1, a.folds, a.seed)?;

    let mut runs = Vec::new();
    for (m, data) in &sets {
        let cv = cross_validate(data, &a.solver.spec(*m), &plan)?;
        print_cv(&cv);
        if cv.covered_games() == 0 {
            eprintln!("note: {m} failed on every fold and is excluded from the comparison");
            continue;
        }
        runs.push(cv);
    }

    let mut pairs = Vec::new();
    for (i, x) in runs.iter().enumerate() {
        for y in &runs[i + 1..] {
            for metric in [Metric::AbsResidual, Metric::LogLoss] {
                let applies = |m: Method| match metric {
                    Metric::LogLoss => m.has_binary(),
                    Metric::AbsResidual => m.has_score(),
                };
                if applies(x.method) && applies(y.method) {
                    pairs.push((a.label.clone(), compare(x, y, metric)?));
                }
            }
        }
    }
    let response = best_model(&runs, Metric::AbsResidual)?;
    let outcome = best_model(&runs, Metric::LogLoss)?;

    let mut run = Run::new(&a.out.out)?;
    run.write_with("cv_games.csv", |b| report::write_cv_games(&runs, b))?;
    run.write_with("cv_folds.csv", |b| report::write_cv_folds(&runs, b))?;
    run.write_with("comparisons.csv", |b| report::write_comparisons(&pairs, b))?;
    let best = [(a.label.clone(), response.clone(), outcome.clone())];
    run.write_with("best_models.csv", |b| report::write_best_models(&best, b))?;
    run.finish(command, Some(a.seed))?;

    for (_, c) in &pairs {
        let verdict = match (c.preferred, c.sign_test.p_value) {
            (_, None) => "sign test undefined (no nonzero differences)".to_string(),
            (Some(m), Some(p)) => format!(
                "{m} preferred, p = {}{}",
                fmt_opt(Some(p)),
                if c.significant { " (significant)" } else { "" }
            ),
            (None, Some(p)) => format!("no preference, p = {}", fmt_opt(Some(p))),
        };
        println!(
            "{} vs {} on {:?}: {} games, {verdict}",
            c.model_a, c.model_b, c.metric, c.games
        );
    }
    for (what, b) in [("response", &response), ("outcome", &outcome)] {
        if let Some(m) = b.best {
            println!(
                "best model for the {what}: {m}{} (p = {})",
                if b.significant { "*" } else { "" },
                fmt_opt(b.p_value)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
