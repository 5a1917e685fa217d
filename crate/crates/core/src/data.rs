//! Game-level competition data: ingestion, validation and the team index.
//!
//! A [`Dataset`] keeps the records as read (ties included) alongside the
//! expanded rows the models consume. Every tie becomes two rows, one
//! awarding the win to each team, so downstream code only ever sees binary
//! outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_spec::{Method, ScoreFamily};

pub const COL_HOME: &str = "home";
pub const COL_AWAY: &str = "away";
pub const COL_NEUTRAL: &str = "neutral.site";
pub const COL_HOME_RESPONSE: &str = "home.response";
pub const COL_AWAY_RESPONSE: &str = "away.response";
pub const COL_BINARY: &str = "binary.response";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    HomeWin,
    AwayWin,
    Tie,
}

impl Outcome {
    /// 1 = home win, 0 = away win, 0.5 = tie.
    pub fn as_f64(self) -> f64 {
        match self {
            Outcome::HomeWin => 1.0,
            Outcome::AwayWin => 0.0,
            Outcome::Tie => 0.5,
        }
    }

    fn parse(cell: &str) -> Option<Outcome> {
        match cell.trim().to_ascii_lowercase().as_str() {
            "true" => return Some(Outcome::HomeWin),
            "false" => return Some(Outcome::AwayWin),
            _ => {}
        }
        let v: f64 = cell.trim().parse().ok()?;
        if v == 1.0 {
            Some(Outcome::HomeWin)
        } else if v == 0.0 {
            Some(Outcome::AwayWin)
        } else if v == 0.5 {
            Some(Outcome::Tie)
        } else {
            None
        }
    }
}

/// One observed contest, as read from the input table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game_id: String,
    pub home_team: String,
    pub away_team: String,
    pub neutral_site: bool,
    pub home_response: Option<f64>,
    pub away_response: Option<f64>,
    pub binary_outcome: Option<Outcome>,
}

/// One modelled game after tie expansion, with team names resolved to
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GameRow {
    /// Position of the originating record in [`Dataset::records`].
    pub source: usize,
    pub home: usize,
    pub away: usize,
    pub neutral: bool,
    pub home_response: Option<f64>,
    pub away_response: Option<f64>,
    pub home_win: Option<bool>,
}

/// Replace every tie by a home-win record followed by an away-win record.
pub fn tie_expand(games: &[GameRecord]) -> Vec<GameRecord> {
    let mut out = Vec::with_capacity(games.len());
    for g in games {
        if g.binary_outcome == Some(Outcome::Tie) {
            for outcome in [Outcome::HomeWin, Outcome::AwayWin] {
                out.push(GameRecord {
                    binary_outcome: Some(outcome),
                    ..g.clone()
                });
            }
        } else {
            out.push(g.clone());
        }
    }
    out
}

/// Validated season of games with a lexicographic team index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<GameRecord>,
    rows: Vec<GameRow>,
    teams: Vec<String>,
    team_index: BTreeMap<String, usize>,
}

impl Dataset {
    /// Build a dataset whose team index covers exactly the teams in `records`.
    pub fn from_records(records: Vec<GameRecord>) -> Result<Self> {
        let teams: BTreeSet<String> = records
            .iter()
            .flat_map(|g| [g.home_team.clone(), g.away_team.clone()])
            .collect();
        Self::with_teams(records, teams.into_iter().collect())
    }

    /// Build a dataset over a given team universe. Teams without games keep
    /// their slot in the index; used for cross-validation folds so that
    /// ratings line up with the full season.
    pub fn with_teams(records: Vec<GameRecord>, teams: Vec<String>) -> Result<Self> {
        let mut sorted = teams;
        sorted.sort();
        sorted.dedup();
        let team_index: BTreeMap<String, usize> = sorted
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();

        let mut rows = Vec::with_capacity(records.len());
        for (source, g) in records.iter().enumerate() {
            if g.home_team == g.away_team {
                return Err(Error::Validation(format!(
                    "game {} has team `{}` playing itself",
                    g.game_id, g.home_team
                )));
            }
            let lookup = |name: &str| {
                team_index
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::UnknownTeam {
                        name: name.to_string(),
                        suggestions: Vec::new(),
                    })
            };
            let home = lookup(&g.home_team)?;
            let away = lookup(&g.away_team)?;
            for expanded in tie_expand(std::slice::from_ref(g)) {
                rows.push(GameRow {
                    source,
                    home,
                    away,
                    neutral: expanded.neutral_site,
                    home_response: expanded.home_response,
                    away_response: expanded.away_response,
                    home_win: expanded.binary_outcome.map(|o| o == Outcome::HomeWin),
                });
            }
        }

        Ok(Dataset {
            records,
            rows,
            teams: sorted,
            team_index,
        })
    }

    /// Records (pre-expansion) in file order.
    pub fn records(&self) -> &[GameRecord] {
        &self.records
    }

    /// Modelled rows (post-expansion) in file order.
    pub fn rows(&self) -> &[GameRow] {
        &self.rows
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn team_id(&self, name: &str) -> Option<usize> {
        self.team_index.get(name).copied()
    }

    /// Number of modelled rows, after tie expansion.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of teams.
    pub fn p(&self) -> usize {
        self.teams.len()
    }

    pub fn tie_count(&self) -> usize {
        self.records
            .iter()
            .filter(|g| g.binary_outcome == Some(Outcome::Tie))
            .count()
    }

    /// Sub-season over the given record positions, keeping this team index.
    pub fn subset(&self, record_ids: &[usize]) -> Result<Dataset> {
        let records = record_ids
            .iter()
            .map(|&i| self.records[i].clone())
            .collect();
        Dataset::with_teams(records, self.teams.clone())
    }

    /// Games played by each team, counted over modelled rows.
    pub fn games_per_team(&self) -> Vec<usize> {
        let mut counts = vec![0; self.p()];
        for r in &self.rows {
            counts[r.home] += 1;
            counts[r.away] += 1;
        }
        counts
    }

    /// Check that every component required by `method` is present and in
    /// range.
    pub fn check_compatible(&self, method: Method) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            let line = self.records[r.source].game_id.clone();
            if let Some(family) = method.score_family() {
                let (Some(h), Some(a)) = (r.home_response, r.away_response) else {
                    return Err(Error::Validation(format!(
                        "method {method} needs home and away responses; game {line} has none"
                    )));
                };
                if family == ScoreFamily::Poisson {
                    for v in [h, a] {
                        if !(v >= 0.0 && v.fract() == 0.0) {
                            return Err(Error::Domain(format!(
                                "method {method} needs non-negative integer counts; game {line} has {v}"
                            )));
                        }
                    }
                }
            }
            if method.has_binary() && r.home_win.is_none() {
                return Err(Error::Validation(format!(
                    "method {method} needs binary outcomes; row {i} (game {line}) has none"
                )));
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            teams: self.p(),
            games: self.records.len(),
            rows: self.n(),
            ties: self.tie_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub teams: usize,
    pub games: usize,
    pub rows: usize,
    pub ties: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "teams: {}", self.teams)?;
        writeln!(f, "games: {}", self.games)?;
        writeln!(f, "rows: {}", self.rows)?;
        write!(f, "ties: {}", self.ties)
    }
}

/// Source column names. Mirrors the usual practice of copying a chosen
/// statistic (yards per play, sacks, ...) into the response columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub home_response: String,
    pub away_response: String,
    pub binary_response: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            home_response: COL_HOME_RESPONSE.to_string(),
            away_response: COL_AWAY_RESPONSE.to_string(),
            binary_response: COL_BINARY.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub columns: ColumnMap,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            columns: ColumnMap::default(),
        }
    }
}

/// Read a delimited table with the standard columns and validate it for
/// `method`. Columns a method does not use may be absent.
pub fn load_dataset<R: Read>(source: R, method: Method) -> Result<Dataset> {
    load_dataset_with(source, method, &LoadOptions::default())
}

pub fn load_dataset_with<R: Read>(
    source: R,
    method: Method,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let home_col = require(COL_HOME)?;
    let away_col = require(COL_AWAY)?;
    let neutral_col = require(COL_NEUTRAL)?;
    let (home_resp_col, away_resp_col) = if method.has_score() {
        (
            Some(require(&opts.columns.home_response)?),
            Some(require(&opts.columns.away_response)?),
        )
    } else {
        (None, None)
    };
    let binary_col = if method.has_binary() {
        Some(require(&opts.columns.binary_response)?)
    } else {
        None
    };
    let poisson = method.score_family() == Some(ScoreFamily::Poisson);

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| rec.get(c).unwrap_or("");

        let neutral_site = match cell(neutral_col).to_ascii_lowercase().as_str() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("`{COL_NEUTRAL}` must be 0 or 1, got `{other}`"),
                })
            }
        };

        let response = |col: Option<usize>, name: &str| -> Result<Option<f64>> {
            let Some(c) = col else { return Ok(None) };
            let raw = cell(c);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric value `{raw}` in `{name}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("non-finite value `{raw}` in `{name}`"),
                });
            }
            if poisson && !(v >= 0.0 && v.fract() == 0.0) {
                return Err(Error::Domain(format!(
                    "row {row}: Poisson responses must be non-negative integers, got {v} in `{name}`"
                )));
            }
            Ok(Some(v))
        };
        let home_response = response(home_resp_col, &opts.columns.home_response)?;
        let away_response = response(away_resp_col, &opts.columns.away_response)?;

        let binary_outcome = match binary_col {
            None => None,
            Some(c) => Some(Outcome::parse(cell(c)).ok_or_else(|| Error::Parse {
                row,
                message: format!(
                    "`{}` must be 1 (home win), 0 (away win) or 0.5 (tie), got `{}`",
                    opts.columns.binary_response,
                    cell(c)
                ),
            })?),
        };

        let home_team = cell(home_col).to_string();
        let away_team = cell(away_col).to_string();
        if home_team.is_empty() || away_team.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty team name".into(),
            });
        }
        if home_team == away_team {
            return Err(Error::Validation(format!(
                "row {row}: team `{home_team}` cannot play itself"
            )));
        }

        records.push(GameRecord {
            game_id: row.to_string(),
            home_team,
            away_team,
            neutral_site,
            home_response,
            away_response,
            binary_outcome,
        });
    }
    Dataset::from_records(records)
}

/// Write records in the standard column layout. Absent values are written
/// as `NA`.
pub fn write_dataset<W: Write>(records: &[GameRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        COL_HOME,
        COL_AWAY,
        COL_NEUTRAL,
        COL_HOME_RESPONSE,
        COL_AWAY_RESPONSE,
        COL_BINARY,
    ])?;
    let num = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
    for g in records {
        w.write_record([
            g.home_team.clone(),
            g.away_team.clone(),
            if g.neutral_site { "1" } else { "0" }.to_string(),
            num(g.home_response),
            num(g.away_response),
            num(g.binary_outcome.map(Outcome::as_f64)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
