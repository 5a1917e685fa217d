//! Free-parameter bookkeeping: which entries of (β, α, G*, σ²_g, R*) a fit
//! estimates, their display names, and access by position.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::likelihood::Parameters;
use crate::model_spec::{Method, ModelSpec, ScoreFamily};

/// Effect slots within a team block.
pub const OFFENSE: usize = 0;
pub const DEFENSE: usize = 1;
pub const WIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Beta(usize),
    Alpha,
    R(usize, usize),
    G(usize, usize),
    Sigma2G,
}

impl Slot {
    pub fn name(self) -> String {
        match self {
            Slot::Beta(0) => "LocationHome".into(),
            Slot::Beta(1) => "LocationAway".into(),
            Slot::Beta(_) => "LocationNeutral Site".into(),
            Slot::Alpha => "Binary mean".into(),
            Slot::R(i, j) => format!("R[{},{}]", i + 1, j + 1),
            Slot::G(i, j) => format!("G[{},{}]", i + 1, j + 1),
            Slot::Sigma2G => "G[4,4]".into(),
        }
    }

    pub fn get(self, p: &Parameters) -> f64 {
        match self {
            Slot::Beta(k) => p.beta[k],
            Slot::Alpha => p.alpha,
            Slot::R(i, j) => p.rstar.map_or(f64::NAN, |r| r[(i, j)]),
            Slot::G(i, j) => p.gstar[(i, j)],
            Slot::Sigma2G => p.sigma2_g.unwrap_or(f64::NAN),
        }
    }

    pub fn set(self, p: &mut Parameters, v: f64) {
        match self {
            Slot::Beta(k) => p.beta[k] = v,
            Slot::Alpha => p.alpha = v,
            Slot::R(i, j) => {
                if let Some(r) = p.rstar.as_mut() {
                    r[(i, j)] = v;
                    r[(j, i)] = v;
                }
            }
            Slot::G(i, j) => {
                p.gstar[(i, j)] = v;
                p.gstar[(j, i)] = v;
            }
            Slot::Sigma2G => p.sigma2_g = Some(v),
        }
    }
}

/// Which parameters are estimated for a method on a particular dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub method: Method,
    /// Active fixed-effect columns (home, away, neutral).
    pub beta_active: [bool; 3],
    pub alpha_active: bool,
    /// Active effect slots among (offense, defense, win).
    pub effects_active: [bool; 3],
    pub independent_blocks: bool,
}

impl ParameterLayout {
    pub fn new(data: &Dataset, spec: &ModelSpec) -> Self {
        let method = spec.method;
        let any_home = data.rows().iter().any(|g| !g.neutral);
        let any_neutral = data.rows().iter().any(|g| g.neutral);
        let score = method.has_score();
        ParameterLayout {
            method,
            beta_active: [score && any_home, score && any_home, score && any_neutral],
            alpha_active: method.has_binary() && any_home,
            effects_active: [score, score, method.has_binary()],
            independent_blocks: spec.independent_blocks,
        }
    }

    /// Whether the covariance between effect slots `i` and `j` is estimated.
    pub fn g_free(&self, i: usize, j: usize) -> bool {
        if !(self.effects_active[i] && self.effects_active[j]) {
            return false;
        }
        let crosses = (i == WIN) != (j == WIN);
        !(crosses && self.independent_blocks)
    }

    /// Free slots, in the reporting order `LocationAway, LocationHome,
    /// LocationNeutral Site, Binary mean, R[·], G[·]`, lower triangles by
    /// column.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        for k in [1, 0, 2] {
            if self.beta_active[k] {
                out.push(Slot::Beta(k));
            }
        }
        if self.alpha_active {
            out.push(Slot::Alpha);
        }
        if self.method.score_family() == Some(ScoreFamily::Normal) {
            out.extend([Slot::R(0, 0), Slot::R(1, 0), Slot::R(1, 1)]);
        }
        for j in 0..3 {
            for i in j..3 {
                if self.g_free(i, j) {
                    out.push(Slot::G(i, j));
                }
            }
        }
        if self.method.has_game_effect() {
            out.push(Slot::Sigma2G);
        }
        out
    }

    pub fn values(&self, p: &Parameters) -> Vec<f64> {
        self.slots().iter().map(|s| s.get(p)).collect()
    }

    /// Names of fixed effects pinned at zero for lack of data.
    pub fn pinned(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.method.has_score() {
            for k in 0..3 {
                if !self.beta_active[k] {
                    out.push(Slot::Beta(k).name());
                }
            }
        }
        if self.method.has_binary() && !self.alpha_active {
            out.push(Slot::Alpha.name());
        }
        out
    }
}
