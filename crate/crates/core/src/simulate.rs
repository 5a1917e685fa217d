//! Seeded synthetic seasons drawn from the model.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::data::{Dataset, GameRecord, Outcome};
use crate::error::{Error, Result};
use crate::likelihood::Parameters;
use crate::model_spec::ScoreFamily;

/// How the binary outcome of a simulated game is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeRule {
    /// Probit draw from the win-propensity effects.
    Probit,
    /// The team with the larger response wins; equal responses tie.
    FromScores,
}

#[derive(Debug, Clone)]
pub struct SeasonConfig {
    pub teams: usize,
    /// Rounds of random pairings; every team plays once per round (one team
    /// sits out when the count is odd).
    pub rounds: usize,
    pub neutral_fraction: f64,
    pub family: ScoreFamily,
    pub truth: Parameters,
    pub outcome: OutcomeRule,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SimulatedSeason {
    pub data: Dataset,
    /// True `(offense, defense, win)` effects per team.
    pub effects: Vec<[f64; 3]>,
}

pub fn team_name(j: usize, teams: usize) -> String {
    let width = teams.to_string().len();
    format!("T{j:0width$}")
}

fn cholesky3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric("simulation G* is not positive-definite".into()))
}

fn cholesky2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numeric("simulation R* is not positive-definite".into()))
}

pub fn simulate_season(cfg: &SeasonConfig) -> Result<SimulatedSeason> {
    if cfg.teams < 2 {
        return Err(Error::Validation(
            "a season needs at least two teams".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let lg = cholesky3(&cfg.truth.gstar)?;
    let effects: Vec<[f64; 3]> = (0..cfg.teams)
        .map(|_| {
            let z = Vector3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng));
            let b = lg * z;
            [b[0], b[1], b[2]]
        })
        .collect();
    let lr = match cfg.family {
        ScoreFamily::Normal => Some(cholesky2(
            &cfg.truth.rstar.unwrap_or_else(Matrix2::identity),
        )?),
        ScoreFamily::Poisson => None,
    };

    let names: Vec<String> = (0..cfg.teams).map(|j| team_name(j, cfg.teams)).collect();
    let mut order: Vec<usize> = (0..cfg.teams).collect();
    let mut records = Vec::new();
    for _ in 0..cfg.rounds {
        order.shuffle(&mut rng);
        for pair in order.chunks_exact(2) {
            let (home, away) = if rng.gen_bool(0.5) {
                (pair[0], pair[1])
            } else {
                (pair[1], pair[0])
            };
            let neutral = rng.gen_bool(cfg.neutral_fraction.clamp(0.0, 1.0));
            let [oh, dh, wh] = effects[home];
            let [oa, da, wa] = effects[away];
            let beta = cfg.truth.beta;
            let (mh, ma) = if neutral {
                (beta[2], beta[2])
            } else {
                (beta[0], beta[1])
            };
            let eta_h = mh + oh - da;
            let eta_a = ma + oa - dh;
            let (yh, ya) = match cfg.family {
                ScoreFamily::Normal => {
                    let e = lr.unwrap() * Vector2::new(normal(&mut rng), normal(&mut rng));
                    (eta_h + e[0], eta_a + e[1])
                }
                ScoreFamily::Poisson => {
                    let a = cfg
                        .truth
                        .sigma2_g
                        .map_or(0.0, |s2| s2.sqrt() * normal(&mut rng));
                    let draw = |rng: &mut ChaCha8Rng, eta: f64| -> f64 {
                        Poisson::new(eta.exp().max(1e-12))
                            .map(|d| d.sample(rng))
                            .unwrap_or(0.0)
                    };
                    (draw(&mut rng, eta_h + a), draw(&mut rng, eta_a + a))
                }
            };
            let outcome = match cfg.outcome {
                OutcomeRule::Probit => {
                    let w = if neutral { 0.0 } else { 1.0 };
                    let latent = w * cfg.truth.alpha + wh - wa + normal(&mut rng);
                    if latent > 0.0 {
                        Outcome::HomeWin
                    } else {
                        Outcome::AwayWin
                    }
                }
                OutcomeRule::FromScores => {
                    if yh > ya {
                        Outcome::HomeWin
                    } else if yh < ya {
                        Outcome::AwayWin
                    } else {
                        Outcome::Tie
                    }
                }
            };
            records.push(GameRecord {
                game_id: (records.len() + 1).to_string(),
                home_team: names[home].clone(),
                away_team: names[away].clone(),
                neutral_site: neutral,
                home_response: Some(yh),
                away_response: Some(ya),
                binary_outcome: Some(outcome),
            });
        }
    }
    let data = Dataset::with_teams(records, names)?;
    Ok(SimulatedSeason { data, effects })
}

/// Yards-per-play-like truth: strongly correlated ratings, mild
/// intra-game correlation.
pub fn correlated_normal_truth() -> Parameters {
    Parameters {
        beta: [5.8057, 5.4506, 5.5182],
        alpha: 0.2183,
        gstar: Matrix3::new(0.55, 0.22, 0.58, 0.22, 0.35, 0.44, 0.58, 0.44, 0.84),
        sigma2_g: None,
        rstar: Some(Matrix2::new(1.4084, 0.1810, 0.1810, 1.1054)),
    }
}

/// Same variances with every cross-correlation removed.
pub fn uncorrelated_normal_truth() -> Parameters {
    let mut p = correlated_normal_truth();
    p.gstar = Matrix3::from_diagonal(&Vector3::new(0.55, 0.35, 0.84));
    p
}

/// Sacks-like truth: low Poisson counts whose team effects correlate with
/// win propensity.
pub fn sacks_truth() -> Parameters {
    Parameters {
        beta: [0.85, 0.75, 0.8],
        alpha: 0.2,
        gstar: Matrix3::new(0.07, 0.03, 0.17, 0.03, 0.09, 0.14, 0.17, 0.14, 0.55),
        sigma2_g: None,
        rstar: None,
    }
}
