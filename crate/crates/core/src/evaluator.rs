//! Cross-validated predictive comparison of fitted models: log-loss,
//! absolute residuals, exact sign tests, paired t-tests and fixed-effect
//! contrasts.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{fit, FitResult, Slot};
use crate::model_spec::{Method, ModelSpec};
use crate::predictor::predict_game;
use crate::special::{ln_factorial, norm_cdf};

/// Probabilities are kept this far from 0 and 1 before taking logs.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

/// Significance level for sign-test preferences.
pub const SIGNIFICANCE: f64 = 0.05;

/// `−y log p − (1−y) log(1−p)` with `p` clamped into
/// `[PROBABILITY_CLAMP, 1 − PROBABILITY_CLAMP]`. A tie scores as `y = 0.5`.
pub fn log_loss(prob: f64, outcome: f64) -> f64 {
    let p = prob.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
    let mut loss = 0.0;
    if outcome > 0.0 {
        loss -= outcome * p.ln();
    }
    if outcome < 1.0 {
        loss -= (1.0 - outcome) * (1.0 - p).ln();
    }
    loss
}

/// Seeded assignment of original games to `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold of each original game, in record order.
    pub assignments: Vec<usize>,
}

impl CvPlan {
    /// Shuffle the `games` record positions and deal them round-robin, so
    /// fold sizes differ by at most one.
    pub fn new(games: usize, k: usize, seed: u64) -> Result<CvPlan> {
        if k < 2 {
            return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
        }
        if k > games {
            return Err(Error::Validation(format!(
                "{k} folds requested for {games} games"
            )));
        }
        let mut order: Vec<usize> = (0..games).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignments = vec![0; games];
        for (pos, &g) in order.iter().enumerate() {
            assignments[g] = pos % k;
        }
        Ok(CvPlan {
            k,
            seed,
            assignments,
        })
    }

    pub fn for_dataset(data: &Dataset, k: usize, seed: u64) -> Result<CvPlan> {
        CvPlan::new(data.records().len(), k, seed)
    }

    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&g| self.assignments[g] == fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Held-out prediction and losses for one original game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameMetrics {
    pub game_id: String,
    pub fold: usize,
    pub home_team: String,
    pub away_team: String,
    pub neutral_site: bool,
    pub predicted_home_response: Option<f64>,
    pub predicted_away_response: Option<f64>,
    pub home_win_probability: Option<f64>,
    pub log_loss: Option<f64>,
    /// Mean of the home and away absolute residuals.
    pub abs_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldStatus {
    pub fold: usize,
    pub train_games: usize,
    pub test_games: usize,
    pub fitted: bool,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    /// One entry per original game, in record order.
    pub games: Vec<GameMetrics>,
    pub folds: Vec<FoldStatus>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl CvResult {
    pub fn log_losses(&self) -> Vec<f64> {
        self.games.iter().filter_map(|g| g.log_loss).collect()
    }

    pub fn abs_residuals(&self) -> Vec<f64> {
        self.games.iter().filter_map(|g| g.abs_residual).collect()
    }

    pub fn mean_log_loss(&self) -> Option<f64> {
        let v = self.log_losses();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn median_log_loss(&self) -> Option<f64> {
        median(&mut self.log_losses())
    }

    pub fn median_abs_residual(&self) -> Option<f64> {
        median(&mut self.abs_residuals())
    }

    /// Games whose fold produced a fit.
    pub fn covered_games(&self) -> usize {
        let ok: Vec<bool> = self.folds.iter().map(|f| f.fitted).collect();
        self.games.iter().filter(|g| ok[g.fold]).count()
    }

    pub fn failed_folds(&self) -> usize {
        self.folds.iter().filter(|f| !f.fitted).count()
    }
}

fn held_out(data: &Dataset, fit: &FitResult, game: usize, fold: usize) -> GameMetrics {
    let g = &data.records()[game];
    let mut m = GameMetrics {
        game_id: g.game_id.clone(),
        fold,
        home_team: g.home_team.clone(),
        away_team: g.away_team.clone(),
        neutral_site: g.neutral_site,
        predicted_home_response: None,
        predicted_away_response: None,
        home_win_probability: None,
        log_loss: None,
        abs_residual: None,
    };
    let Ok(pred) = predict_game(fit, &g.home_team, &g.away_team, g.neutral_site) else {
        return m;
    };
    m.predicted_home_response = pred.predicted_home_response;
    m.predicted_away_response = pred.predicted_away_response;
    m.home_win_probability = pred.home_win_probability;
    if let (Some(p), Some(o)) = (pred.home_win_probability, g.binary_outcome) {
        m.log_loss = Some(log_loss(p, o.as_f64()));
    }
    if let (Some(yh), Some(ya), Some(ph), Some(pa)) = (
        g.home_response,
        g.away_response,
        pred.predicted_home_response,
        pred.predicted_away_response,
    ) {
        m.abs_residual = Some(0.5 * ((yh - ph).abs() + (ya - pa).abs()));
    }
    m
}

/// Fit on each fold's complement and score its held-out games.
pub fn cross_validate(data: &Dataset, spec: &ModelSpec, plan: &CvPlan) -> Result<CvResult> {
    spec.validate()?;
    data.check_compatible(spec.method)?;
    if plan.assignments.len() != data.records().len() {
        return Err(Error::Validation(format!(
            "fold plan covers {} games but the data has {}",
            plan.assignments.len(),
            data.records().len()
        )));
    }
    let mut games: Vec<Option<GameMetrics>> = vec![None; data.records().len()];
    let mut folds = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let test = plan.fold_members(fold);
        let train: Vec<usize> = (0..plan.assignments.len())
            .filter(|&g| plan.assignments[g] != fold)
            .collect();
        let fitted = data.subset(&train).and_then(|d| fit(&d, spec));
        let mut status = FoldStatus {
            fold,
            train_games: train.len(),
            test_games: test.len(),
            fitted: false,
            converged: false,
            error: None,
        };
        match fitted {
            Ok(f) => {
                status.fitted = true;
                status.converged = f.diagnostics.converged;
                for &g in &test {
                    games[g] = Some(held_out(data, &f, g, fold));
                }
            }
            Err(e) => {
                status.error = Some(e.to_string());
                for &g in &test {
                    let r = &data.records()[g];
                    games[g] = Some(GameMetrics {
                        game_id: r.game_id.clone(),
                        fold,
                        home_team: r.home_team.clone(),
                        away_team: r.away_team.clone(),
                        neutral_site: r.neutral_site,
                        predicted_home_response: None,
                        predicted_away_response: None,
                        home_win_probability: None,
                        log_loss: None,
                        abs_residual: None,
                    });
                }
            }
        }
        folds.push(status);
    }
    Ok(CvResult {
        method: spec.method,
        k: plan.k,
        seed: plan.seed,
        games: games
            .into_iter()
            .map(|g| g.expect("every game is in a fold"))
            .collect(),
        folds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    /// Zero differences, dropped before testing.
    pub zeros: usize,
    /// Two-sided exact p-value; absent when every difference is zero.
    pub p_value: Option<f64>,
    pub majority: Option<Direction>,
}

impl SignTest {
    pub fn undefined(&self) -> bool {
        self.p_value.is_none()
    }
}

/// `P(X ≥ k)` for `X ~ Binomial(m, ½)`.
fn upper_tail_half(m: usize, k: usize) -> f64 {
    if k > m {
        return 0.0;
    }
    if m <= 120 {
        // Integer counts are exact below 2^127; one rounding at the end.
        let mut c: u128 = 1;
        let mut total: u128 = 0;
        for i in 0..=m {
            if i >= k {
                total += c;
            }
            if i < m {
                c = c * (m - i) as u128 / (i + 1) as u128;
            }
        }
        return total as f64 / 2f64.powi(m as i32);
    }
    let terms: Vec<f64> = (k..=m)
        .map(|i| {
            ln_factorial(m as f64)
                - ln_factorial(i as f64)
                - ln_factorial((m - i) as f64)
                - m as f64 * std::f64::consts::LN_2
        })
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()).exp()
}

/// Exact two-sided sign test of the count of positive differences against
/// Binomial(m, ½), zeros dropped.
pub fn sign_test(differences: &[f64]) -> SignTest {
    let positive = differences.iter().filter(|&&d| d > 0.0).count();
    let negative = differences.iter().filter(|&&d| d < 0.0).count();
    let zeros = differences.len() - positive - negative;
    let m = positive + negative;
    if m == 0 {
        return SignTest {
            positive,
            negative,
            zeros,
            p_value: None,
            majority: None,
        };
    }
    let extreme = positive.max(negative);
    let p = (2.0 * upper_tail_half(m, extreme)).min(1.0);
    let majority = match positive.cmp(&negative) {
        std::cmp::Ordering::Greater => Direction::Positive,
        std::cmp::Ordering::Less => Direction::Negative,
        std::cmp::Ordering::Equal => Direction::Balanced,
    };
    SignTest {
        positive,
        negative,
        zeros,
        p_value: Some(p),
        majority: Some(majority),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub ci95: (f64, f64),
    /// Zero sample variance; `t` is 0 for a zero mean and infinite otherwise.
    pub degenerate: bool,
}

/// One-sample two-sided t-test of the differences against 0.
pub fn paired_t_test(diffs: &[f64]) -> Result<PairedTTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "a paired t-test needs at least 2 differences, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    let df = nf - 1.0;
    if !(sd > 0.0) {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(PairedTTest {
            n,
            mean,
            sd: 0.0,
            t,
            df,
            p_value: p,
            ci95: (mean, mean),
            degenerate: true,
        });
    }
    let se = sd / nf.sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    let q = dist.inverse_cdf(0.975);
    Ok(PairedTTest {
        n,
        mean,
        sd,
        t,
        df,
        p_value: p,
        ci95: (mean - q * se, mean + q * se),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contrast {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

/// `c′θ` with variance `c′ H⁻¹ c` from the fit's Hessian and a two-sided
/// normal test.
pub fn contrast(fit: &FitResult, weights: &[(Slot, f64)]) -> Result<Contrast> {
    let h = fit.hessian.as_ref().ok_or_else(|| {
        Error::Unavailable("the fit has no Hessian; refit with the Hessian enabled".into())
    })?;
    let cov = h.covariance.as_ref().ok_or_else(|| {
        Error::Unavailable(
            "the Hessian is not invertible: the model appears empirically underidentified".into(),
        )
    })?;
    let mut idx = Vec::with_capacity(weights.len());
    for &(slot, w) in weights {
        let i = h.index_of(slot).ok_or_else(|| {
            Error::Unavailable(format!(
                "{} is not a free parameter of this fit",
                slot.name()
            ))
        })?;
        idx.push((i, w));
    }
    let estimate: f64 = weights.iter().map(|&(s, w)| w * s.get(&fit.params)).sum();
    let mut var = 0.0;
    for &(i, wi) in &idx {
        for &(j, wj) in &idx {
            var += wi * wj * cov[(i, j)];
        }
    }
    let std_error = var.max(0.0).sqrt();
    let (z, p_value) = if std_error > 0.0 {
        let z = estimate / std_error;
        (z, (2.0 * norm_cdf(-z.abs())).min(1.0))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    };
    Ok(Contrast {
        estimate,
        std_error,
        z,
        p_value,
    })
}

/// `β_h − β_a`, the home-versus-away location contrast.
pub fn home_away_contrast(fit: &FitResult) -> Result<Contrast> {
    if !fit.method.has_score() {
        return Err(Error::Unavailable(format!(
            "method {} has no score component",
            fit.method
        )));
    }
    contrast(fit, &[(Slot::Beta(0), 1.0), (Slot::Beta(1), -1.0)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LogLoss,
    AbsResidual,
}

impl Metric {
    fn of(self, g: &GameMetrics) -> Option<f64> {
        match self {
            Metric::LogLoss => g.log_loss,
            Metric::AbsResidual => g.abs_residual,
        }
    }

    fn applies(self, method: Method) -> bool {
        match self {
            Metric::LogLoss => method.has_binary(),
            Metric::AbsResidual => method.has_score(),
        }
    }
}

/// Per-game loss differences `a − b` between two CV runs on shared games.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub metric: Metric,
    pub model_a: Method,
    pub model_b: Method,
    pub games: usize,
    pub differences: Vec<f64>,
    pub median_a: Option<f64>,
    pub median_b: Option<f64>,
    pub sign_test: SignTest,
    /// The model with lower loss on the majority of games.
    pub preferred: Option<Method>,
    pub significant: bool,
}

pub fn compare(a: &CvResult, b: &CvResult, metric: Metric) -> Result<ComparisonReport> {
    if a.games.len() != b.games.len()
        || a.games
            .iter()
            .zip(&b.games)
            .any(|(x, y)| x.game_id != y.game_id)
    {
        return Err(Error::Validation(
            "cross-validation runs cover different games".into(),
        ));
    }
    let mut la = Vec::new();
    let mut lb = Vec::new();
    let mut differences = Vec::new();
    for (x, y) in a.games.iter().zip(&b.games) {
        if let (Some(u), Some(v)) = (metric.of(x), metric.of(y)) {
            la.push(u);
            lb.push(v);
            differences.push(u - v);
        }
    }
    let test = sign_test(&differences);
    let preferred = match test.majority {
        Some(Direction::Negative) => Some(a.method),
        Some(Direction::Positive) => Some(b.method),
        _ => None,
    };
    let significant = preferred.is_some() && test.p_value.is_some_and(|p| p < SIGNIFICANCE);
    Ok(ComparisonReport {
        metric,
        model_a: a.method,
        model_b: b.method,
        games: differences.len(),
        differences,
        median_a: median(&mut la),
        median_b: median(&mut lb),
        sign_test: test,
        preferred,
        significant,
    })
}

/// "Best" model for one metric among several CV runs: the model with the
/// lowest loss on the most games, significant when its sign test against
/// every other candidate is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestModel {
    pub metric: Metric,
    pub candidates: Vec<Method>,
    pub best: Option<Method>,
    /// Largest pairwise sign-test p-value of the best model.
    pub p_value: Option<f64>,
    pub significant: bool,
    pub pairwise: Vec<ComparisonReport>,
}

pub fn best_model(runs: &[CvResult], metric: Metric) -> Result<BestModel> {
    // Repeated runs of one method would tie each other on every game.
    let mut usable: Vec<&CvResult> = Vec::new();
    for r in runs {
        if metric.applies(r.method)
            && r.covered_games() > 0
            && usable.iter().all(|u| u.method != r.method)
        {
            usable.push(r);
        }
    }
    let candidates: Vec<Method> = usable.iter().map(|r| r.method).collect();
    let mut out = BestModel {
        metric,
        candidates: candidates.clone(),
        best: None,
        p_value: None,
        significant: false,
        pairwise: Vec::new(),
    };
    if usable.is_empty() {
        return Ok(out);
    }
    let n = usable[0].games.len();
    let mut wins = vec![0usize; usable.len()];
    for g in 0..n {
        let losses: Vec<Option<f64>> = usable.iter().map(|r| metric.of(&r.games[g])).collect();
        if losses.iter().any(|l| l.is_none()) {
            continue;
        }
        let vals: Vec<f64> = losses.into_iter().flatten().collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let at_min: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] == min).collect();
        if at_min.len() == 1 {
            wins[at_min[0]] += 1;
        }
    }
    let top = *wins.iter().max().expect("non-empty");
    let leaders: Vec<usize> = (0..wins.len()).filter(|&i| wins[i] == top).collect();
    if leaders.len() != 1 || (usable.len() > 1 && top == 0) {
        return Ok(out);
    }
    let best = leaders[0];
    out.best = Some(usable[best].method);
    if usable.len() == 1 {
        return Ok(out);
    }
    let mut worst_p: f64 = 0.0;
    let mut all_significant = true;
    for (i, other) in usable.iter().enumerate() {
        if i == best {
            continue;
        }
        let c = compare(usable[best], other, metric)?;
        match c.sign_test.p_value {
            Some(p) => worst_p = worst_p.max(p),
            None => worst_p = f64::NAN,
        }
        all_significant &= c.significant && c.preferred == Some(usable[best].method);
        out.pairwise.push(c);
    }
    out.p_value = worst_p.is_finite().then_some(worst_p);
    out.significant = all_significant;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_loss_examples() {
        assert_eq!(log_loss(0.5, 1.0), std::f64::consts::LN_2);
        assert_eq!(log_loss(0.5, 0.0), std::f64::consts::LN_2);
        assert!((log_loss(0.9, 1.0) - 0.105_360_515_657_826_3).abs() < 1e-15);
        assert!((log_loss(0.9, 0.0) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(log_loss(0.0, 1.0).is_finite());
        assert!(log_loss(1.0, 1.0) >= 0.0);
    }

    #[test]
    fn sign_test_examples() {
        let nine: Vec<f64> = (0..10).map(|i| if i < 9 { 1.0 } else { -1.0 }).collect();
        let t = sign_test(&nine);
        assert_eq!(t.p_value, Some(22.0 / 1024.0));
        assert_eq!(t.majority, Some(Direction::Positive));
        let five: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { -1.0 }).collect();
        assert_eq!(sign_test(&five).p_value, Some(1.0));
        assert_eq!(sign_test(&[0.3; 10]).p_value, Some(2.0 / 1024.0));
    }

    #[test]
    fn sign_test_drops_zeros() {
        let t = sign_test(&[0.0, 0.0, 1.0, -1.0, 1.0]);
        assert_eq!((t.positive, t.negative, t.zeros), (2, 1, 2));
        let empty = sign_test(&[0.0, 0.0]);
        assert!(empty.undefined());
        assert!(empty.majority.is_none());
    }

    #[test]
    fn sign_test_large_m_agrees_with_log_space() {
        // 150 games: the log-space branch against a direct sum in f64.
        let direct: f64 = (90..=150)
            .map(|i| {
                (ln_factorial(150.0)
                    - ln_factorial(i as f64)
                    - ln_factorial((150 - i) as f64)
                    - 150.0 * std::f64::consts::LN_2)
                    .exp()
            })
            .sum();
        assert!((upper_tail_half(150, 90) - direct).abs() < 1e-14);
        let exact = upper_tail_half(120, 70);
        let logged: f64 = (70..=120)
            .map(|i| {
                (ln_factorial(120.0)
                    - ln_factorial(i as f64)
                    - ln_factorial((120 - i) as f64)
                    - 120.0 * std::f64::consts::LN_2)
                    .exp()
            })
            .sum();
        assert!((exact - logged).abs() < 1e-13);
    }

    #[test]
    fn t_test_examples() {
        let t = paired_t_test(&[0.5, 0.7, 0.6, 0.8]).unwrap();
        let sd = (0.05f64 / 3.0).sqrt();
        assert!((t.mean - 0.65).abs() < 1e-12);
        assert!((t.sd - sd).abs() < 1e-12);
        assert!((t.t - 0.65 / (sd / 2.0)).abs() < 1e-9);
        assert!((t.t - 10.07).abs() < 0.01);
        assert!(t.ci95.0 < 0.65 && 0.65 < t.ci95.1);
        // Reference values from an independent t-distribution implementation.
        assert!((t.ci95.1 - 0.65 - 3.182_446_305_284_263 * sd / 2.0).abs() < 1e-9);
        assert!((t.t - 10.069_756_700_139_282).abs() < 1e-9);
        assert!((t.p_value - 0.002_085_480_314_975_278).abs() < 1e-9);

        let sym = paired_t_test(&[1.0, -1.0]).unwrap();
        assert_eq!(sym.t, 0.0);
        assert!((sym.p_value - 1.0).abs() < 1e-12);

        let zero = paired_t_test(&[0.0, 0.0, 0.0]).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.t, 0.0);
        assert!(paired_t_test(&[1.0]).is_err());
    }

    fn season(teams: usize, rounds: usize) -> Dataset {
        use crate::model_spec::ScoreFamily;
        use crate::simulate::{
            correlated_normal_truth, simulate_season, OutcomeRule, SeasonConfig,
        };
        simulate_season(&SeasonConfig {
            teams,
            rounds,
            neutral_fraction: 0.1,
            family: ScoreFamily::Normal,
            truth: correlated_normal_truth(),
            outcome: OutcomeRule::Probit,
            seed: 17,
        })
        .unwrap()
        .data
    }

    #[test]
    fn leave_one_out_plan() {
        let plan = CvPlan::new(12, 12, 4).unwrap();
        assert_eq!(plan.fold_sizes(), vec![1; 12]);
        let mut seen = plan.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn cross_validation_scores_every_game_once() {
        let data = season(12, 8);
        let plan = CvPlan::new(data.records().len(), 4, 1).unwrap();
        let run = cross_validate(&data, &ModelSpec::new(Method::NB), &plan).unwrap();
        assert_eq!(run.games.len(), data.records().len());
        assert_eq!(
            run.folds.iter().map(|f| f.test_games).sum::<usize>(),
            data.records().len()
        );
        for f in &run.folds {
            assert_eq!(f.train_games + f.test_games, data.records().len());
        }
        let again = cross_validate(&data, &ModelSpec::new(Method::NB), &plan).unwrap();
        let ll = |r: &CvResult| {
            r.games
                .iter()
                .map(|g| g.log_loss.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(ll(&run), ll(&again));
        // Informative ratings beat the coin-flip baseline.
        let mean = ll(&run).iter().sum::<f64>() / run.games.len() as f64;
        assert!(mean < std::f64::consts::LN_2, "{mean}");
        assert!(run.games.iter().all(|g| g.abs_residual.is_some()));
    }

    #[test]
    fn repeated_runs_count_once() {
        let data = season(12, 8);
        let plan = CvPlan::new(data.records().len(), 4, 2).unwrap();
        let nb = cross_validate(&data, &ModelSpec::new(Method::NB), &plan).unwrap();
        let b = cross_validate(&data, &ModelSpec::new(Method::B), &plan).unwrap();
        let once = best_model(&[nb.clone(), b.clone()], Metric::LogLoss).unwrap();
        let twice = best_model(&[nb.clone(), nb, b], Metric::LogLoss).unwrap();
        assert_eq!(once.best, twice.best);
        assert_eq!(once.candidates, twice.candidates);
    }

    #[test]
    fn plan_partitions_games() {
        let plan = CvPlan::new(23, 5, 9).unwrap();
        let sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(plan, CvPlan::new(23, 5, 9).unwrap());
        assert_ne!(plan, CvPlan::new(23, 5, 10).unwrap());
        assert!(CvPlan::new(10, 1, 0).is_err());
        assert!(CvPlan::new(3, 4, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn sign_test_negation_symmetry(d in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
            let a = sign_test(&d);
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            let b = sign_test(&neg);
            proptest::prop_assert_eq!(a.p_value, b.p_value);
            let flipped = a.majority.map(|m| match m {
                Direction::Positive => Direction::Negative,
                Direction::Negative => Direction::Positive,
                Direction::Balanced => Direction::Balanced,
            });
            proptest::prop_assert_eq!(flipped, b.majority);
        }

        #[test]
        fn log_loss_non_negative(p in 0.0f64..=1.0, y in proptest::sample::select(vec![0.0, 0.5, 1.0])) {
            let l = log_loss(p, y);
            proptest::prop_assert!(l >= 0.0 && l.is_finite());
        }
    }
}
