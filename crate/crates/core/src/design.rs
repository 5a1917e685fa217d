//! Sparse design matrices for the multiple-membership structure.
//!
//! Random effects are stacked team by team, `[o_0 d_0 w_0 o_1 d_1 w_1 ...]`,
//! followed by one column per game when the game-level effect is active.

use std::fmt::Write as _;

use crate::data::Dataset;

pub const FIXED_HOME: usize = 0;
pub const FIXED_AWAY: usize = 1;
pub const FIXED_NEUTRAL: usize = 2;

#[inline]
pub fn offense_col(team: usize) -> usize {
    3 * team
}

#[inline]
pub fn defense_col(team: usize) -> usize {
    3 * team + 1
}

#[inline]
pub fn win_col(team: usize) -> usize {
    3 * team + 2
}

/// Compressed sparse row matrix with column indices kept in insertion
/// order within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    fn builder(ncols: usize) -> SparseRowBuilder {
        SparseRowBuilder {
            m: SparseMatrix {
                nrows: 0,
                ncols,
                row_ptr: vec![0],
                col_idx: Vec::new(),
                values: Vec::new(),
            },
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).map(|(c, x)| x * v[c]).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row_dot(i, v)).collect()
    }

    /// `out += Aᵀ w`.
    pub fn add_transpose_mul(&self, w: &[f64], out: &mut [f64]) {
        for (i, &wi) in w.iter().enumerate() {
            for (c, x) in self.row(i) {
                out[c] += x * wi;
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, x)| x).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (c, x) in self.row(i) {
                d[(i, c)] += x;
            }
        }
        d
    }

    /// Coordinate triplets `row col value`, one per line, row-major.
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        for i in 0..self.nrows {
            for (c, x) in self.row(i) {
                let _ = writeln!(s, "{i} {c} {x}");
            }
        }
        s
    }
}

struct SparseRowBuilder {
    m: SparseMatrix,
}

impl SparseRowBuilder {
    fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, x) in entries {
            debug_assert!(c < self.m.ncols);
            self.m.col_idx.push(c);
            self.m.values.push(x);
        }
        self.m.nrows += 1;
        self.m.row_ptr.push(self.m.col_idx.len());
    }

    fn finish(self) -> SparseMatrix {
        self.m
    }
}

/// Design for the paired game-level responses: row `2i` is the home
/// response of game `i`, row `2i + 1` the away response.
#[derive(Debug, Clone)]
pub struct ScoreDesign {
    pub x: SparseMatrix,
    pub z: SparseMatrix,
    pub teams: usize,
    pub game_effect: bool,
}

impl ScoreDesign {
    pub fn games(&self) -> usize {
        self.x.nrows() / 2
    }

    pub fn q(&self) -> usize {
        self.z.ncols()
    }
}

/// Design for the binary home-win outcome.
#[derive(Debug, Clone)]
pub struct BinaryDesign {
    /// 1 for a game at the home team's venue, 0 at a neutral site.
    pub w: Vec<f64>,
    pub s: SparseMatrix,
}

/// Number of random effects: three per team plus one per game when active.
pub fn effect_count(teams: usize, games: usize, game_effect: bool) -> usize {
    3 * teams + if game_effect { games } else { 0 }
}

pub fn build_score_design(data: &Dataset, game_effect: bool) -> ScoreDesign {
    let p = data.p();
    let n = data.n();
    let q = effect_count(p, n, game_effect);
    let mut x = SparseMatrix::builder(3);
    let mut z = SparseMatrix::builder(q);
    for (i, g) in data.rows().iter().enumerate() {
        let (hx, ax) = if g.neutral {
            (FIXED_NEUTRAL, FIXED_NEUTRAL)
        } else {
            (FIXED_HOME, FIXED_AWAY)
        };
        x.push_row(&[(hx, 1.0)]);
        x.push_row(&[(ax, 1.0)]);

        let mut home = vec![(offense_col(g.home), 1.0), (defense_col(g.away), -1.0)];
        let mut away = vec![(offense_col(g.away), 1.0), (defense_col(g.home), -1.0)];
        if game_effect {
            home.push((3 * p + i, 1.0));
            away.push((3 * p + i, 1.0));
        }
        z.push_row(&home);
        z.push_row(&away);
    }
    ScoreDesign {
        x: x.finish(),
        z: z.finish(),
        teams: p,
        game_effect,
    }
}

pub fn build_binary_design(data: &Dataset) -> BinaryDesign {
    let q = effect_count(data.p(), data.n(), false);
    let mut s = SparseMatrix::builder(q);
    let mut w = Vec::with_capacity(data.n());
    for g in data.rows() {
        s.push_row(&[(win_col(g.home), 1.0), (win_col(g.away), -1.0)]);
        w.push(if g.neutral { 0.0 } else { 1.0 });
    }
    BinaryDesign { w, s: s.finish() }
}
