//! Rankings, plug-in game predictions and rating-scatter data from a fit.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::model_spec::{Method, ScoreFamily};
use crate::special::norm_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Offense,
    Defense,
    WinPropensity,
}

impl Effect {
    pub const ALL: [Effect; 3] = [Effect::Offense, Effect::Defense, Effect::WinPropensity];

    fn index(self) -> usize {
        match self {
            Effect::Offense => 0,
            Effect::Defense => 1,
            Effect::WinPropensity => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Effect::Offense => "offense",
            Effect::Defense => "defense",
            Effect::WinPropensity => "win_propensity",
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Effect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "offense" | "o" => Ok(Effect::Offense),
            "defense" | "d" => Ok(Effect::Defense),
            "win_propensity" | "win" | "w" => Ok(Effect::WinPropensity),
            other => Err(Error::Validation(format!(
                "unknown rating `{other}` (expected offense, defense or win_propensity)"
            ))),
        }
    }
}

/// Whether a fit of `method` carries ratings of kind `effect`.
pub fn has_effect(method: Method, effect: Effect) -> bool {
    match effect {
        Effect::Offense | Effect::Defense => method.has_score(),
        Effect::WinPropensity => method.has_binary(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedTeam {
    pub rank: usize,
    pub team: String,
    pub rating: f64,
}

/// Teams by descending empirical-mode rating, ties broken by name.
pub fn rank_teams(fit: &FitResult, which: Effect) -> Result<Vec<RankedTeam>> {
    if !has_effect(fit.method, which) {
        return Err(Error::Unavailable(format!(
            "method {} has no {which} ratings",
            fit.method
        )));
    }
    let mut rows: Vec<(String, f64)> = fit
        .teams
        .iter()
        .enumerate()
        .map(|(j, t)| (t.clone(), fit.effects(j)[which.index()]))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (team, rating))| RankedTeam {
            rank: i + 1,
            team,
            rating,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GamePrediction {
    pub home_team: String,
    pub away_team: String,
    pub neutral_site: bool,
    pub model_method: Method,
    /// Set for normal score models.
    pub predicted_home_response: Option<f64>,
    pub predicted_away_response: Option<f64>,
    /// Which score family produced the predicted responses.
    pub score_family: Option<ScoreFamily>,
    pub home_win_probability: Option<f64>,
    /// Teams predicted from the prior mean because the fit saw no games for
    /// them.
    pub teams_without_games: Vec<String>,
}

/// Up to three team names closest to `name`.
pub fn near_matches(name: &str, teams: &[String]) -> Vec<String> {
    let needle = name.to_lowercase();
    let mut scored: Vec<(f64, &String)> = teams
        .iter()
        .map(|t| (strsim::jaro_winkler(&needle, &t.to_lowercase()), t))
        .filter(|(s, _)| *s >= 0.7)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(3).map(|(_, t)| t.clone()).collect()
}

fn lookup(fit: &FitResult, name: &str) -> Result<usize> {
    fit.team_id(name).ok_or_else(|| Error::UnknownTeam {
        name: name.to_string(),
        suggestions: near_matches(name, &fit.teams),
    })
}

/// Plug-in prediction for `home` hosting `away`.
pub fn predict_game(
    fit: &FitResult,
    home: &str,
    away: &str,
    neutral: bool,
) -> Result<GamePrediction> {
    let h = lookup(fit, home)?;
    let a = lookup(fit, away)?;
    let [oh, dh, wh] = fit.effects(h);
    let [oa, da, wa] = fit.effects(a);
    let beta = fit.params.beta;
    let (mh, ma) = if neutral {
        (beta[2], beta[2])
    } else {
        (beta[0], beta[1])
    };

    let family = fit.method.score_family();
    let (yh, ya) = match family {
        Some(ScoreFamily::Normal) => (Some(mh + oh - da), Some(ma + oa - dh)),
        Some(ScoreFamily::Poisson) => (Some((mh + oh - da).exp()), Some((ma + oa - dh).exp())),
        None => (None, None),
    };
    let p = fit.method.has_binary().then(|| {
        let home_edge = if neutral { 0.0 } else { fit.params.alpha };
        norm_cdf(home_edge + wh - wa)
    });
    let teams_without_games = [h, a]
        .iter()
        .filter(|&&j| fit.ratings[j].games == 0)
        .map(|&j| fit.teams[j].clone())
        .collect();
    Ok(GamePrediction {
        home_team: fit.teams[h].clone(),
        away_team: fit.teams[a].clone(),
        neutral_site: neutral,
        model_method: fit.method,
        predicted_home_response: yh,
        predicted_away_response: ya,
        score_family: family,
        home_win_probability: p,
        teams_without_games,
    })
}

const NOT_AVAILABLE: &str = "N/A for this object.";

impl fmt::Display for GamePrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scores = |f: &mut fmt::Formatter<'_>, family: ScoreFamily| -> fmt::Result {
            match (
                self.score_family,
                self.predicted_home_response,
                self.predicted_away_response,
            ) {
                (Some(fam), Some(h), Some(a)) if fam == family => {
                    writeln!(f, "Predicted score for {}: {h:.2}", self.home_team)?;
                    writeln!(f, "Predicted score for {}: {a:.2}", self.away_team)
                }
                _ => writeln!(f, "{NOT_AVAILABLE}"),
            }
        };
        writeln!(f, "Normal Distribution for Scores:")?;
        scores(f, ScoreFamily::Normal)?;
        writeln!(f)?;
        writeln!(f, "Poisson Distribution for Scores:")?;
        scores(f, ScoreFamily::Poisson)?;
        writeln!(f)?;
        writeln!(f, "Binary Distribution for Outcomes:")?;
        match self.home_win_probability {
            Some(p) => writeln!(
                f,
                "Probability of {} defeating {}: {p:.3}",
                self.home_team, self.away_team
            )?,
            None => writeln!(f, "{NOT_AVAILABLE}")?,
        }
        writeln!(f)?;
        writeln!(f, "Normal Distribution for Margin of Victory:")?;
        write!(f, "{NOT_AVAILABLE}")?;
        for t in &self.teams_without_games {
            write!(
                f,
                "\nnote: {t} has no games in the fit; its ratings are the prior mean 0"
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub team: String,
    pub offense: f64,
    pub defense: f64,
    pub win_propensity: f64,
}

/// One row per team with all three ratings, for plotting offense against
/// defense with win propensity as color and size.
pub fn emit_rating_scatter(fit: &FitResult) -> Result<Vec<ScatterRow>> {
    if !fit.method.is_joint() {
        return Err(Error::Unavailable(format!(
            "rating scatter needs a joint method; {} models a single response",
            fit.method
        )));
    }
    Ok(fit
        .teams
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let [o, d, w] = fit.effects(j);
            ScatterRow {
                team: t.clone(),
                offense: o,
                defense: d,
                win_propensity: w,
            }
        })
        .collect())
}
