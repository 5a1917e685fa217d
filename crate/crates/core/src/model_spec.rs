use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Distribution used for the paired game-level responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFamily {
    Normal,
    Poisson,
}

/// The seven model codes.
///
/// `N`, `P0`, `P1` and `B` fit a single response; `NB`, `PB0` and `PB1`
/// fit the game-level responses jointly with the binary home-win outcome.
/// The trailing digit of the Poisson codes toggles the game-level random
/// effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    N,
    P0,
    P1,
    B,
    NB,
    PB0,
    PB1,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::N,
        Method::P0,
        Method::P1,
        Method::B,
        Method::NB,
        Method::PB0,
        Method::PB1,
    ];

    pub fn score_family(self) -> Option<ScoreFamily> {
        match self {
            Method::N | Method::NB => Some(ScoreFamily::Normal),
            Method::P0 | Method::P1 | Method::PB0 | Method::PB1 => Some(ScoreFamily::Poisson),
            Method::B => None,
        }
    }

    pub fn has_score(self) -> bool {
        self.score_family().is_some()
    }

    pub fn has_binary(self) -> bool {
        matches!(self, Method::B | Method::NB | Method::PB0 | Method::PB1)
    }

    pub fn has_game_effect(self) -> bool {
        matches!(self, Method::P1 | Method::PB1)
    }

    pub fn is_joint(self) -> bool {
        self.has_score() && self.has_binary()
    }

    pub fn code(self) -> &'static str {
        match self {
            Method::N => "N",
            Method::P0 => "P0",
            Method::P1 => "P1",
            Method::B => "B",
            Method::NB => "NB",
            Method::PB0 => "PB0",
            Method::PB1 => "PB1",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown method `{s}`; expected one of N, P0, P1, B, NB, PB0, PB1"
                ))
            })
    }
}

/// Which model to fit plus the solver controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub method: Method,
    pub max_em_iterations: usize,
    /// Relative parameter change, `max |Δθ| / (1 + |θ|)`.
    pub em_tolerance: f64,
    /// Max-norm of the gradient of the penalized log-likelihood at the mode.
    pub newton_tolerance: f64,
    pub compute_hessian: bool,
    /// Constrain the covariances between (offense, defense) and win
    /// propensity to zero. With this set, a joint fit decouples into the two
    /// single-response fits.
    pub independent_blocks: bool,
    /// Squared-extrapolation (SQUAREM) acceleration of the EM map. Plain EM
    /// when off.
    pub accelerate: bool,
}

impl ModelSpec {
    pub fn new(method: Method) -> Self {
        ModelSpec {
            method,
            max_em_iterations: 500,
            em_tolerance: 1e-6,
            newton_tolerance: 1e-9,
            compute_hessian: false,
            independent_blocks: false,
            accelerate: true,
        }
    }

    pub fn with_hessian(mut self, on: bool) -> Self {
        self.compute_hessian = on;
        self
    }

    pub fn with_independent_blocks(mut self, on: bool) -> Self {
        self.independent_blocks = on;
        self
    }

    pub fn with_acceleration(mut self, on: bool) -> Self {
        self.accelerate = on;
        self
    }

    pub fn with_max_iterations(mut self, iterations: usize) -> Self {
        self.max_em_iterations = iterations;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.em_tolerance = tol;
        self
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.max_em_iterations == 0 {
            return Err(Error::Validation(
                "max_em_iterations must be positive".into(),
            ));
        }
        if !(self.em_tolerance > 0.0) || !(self.newton_tolerance > 0.0) {
            return Err(Error::Validation("tolerances must be positive".into()));
        }
        Ok(())
    }
}
