//! Negative curvature of the penalized log-likelihood and its factorization.
//!
//! The matrix has an arrow structure: a symmetric team block over the `3p`
//! team effects, a diagonal block over the per-game effects, and a sparse
//! coupling in which every game column touches at most four team columns.
//! The game block is eliminated by a Schur complement and the team block is
//! factored with a dense Cholesky. Season schedules link most teams within
//! a few games of each other, so the team block fills in under any ordering
//! and dense storage is the cheaper representation there.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Curvature {
    team: Mat<f64>,
    game_diag: Vec<f64>,
    /// Per game column: `(team column, value)`, merged by column.
    coupling: Vec<Vec<(usize, f64)>>,
}

impl Curvature {
    pub fn zeros(team_dim: usize, games: usize) -> Self {
        Curvature {
            team: Mat::zeros(team_dim, team_dim),
            game_diag: vec![0.0; games],
            coupling: vec![Vec::new(); games],
        }
    }

    pub fn team_dim(&self) -> usize {
        self.team.nrows()
    }

    pub fn games(&self) -> usize {
        self.game_diag.len()
    }

    pub fn dim(&self) -> usize {
        self.team_dim() + self.games()
    }

    /// Add `v` at `(i, j)` and `(j, i)` of the team block (once when `i == j`).
    #[inline]
    pub fn add_team(&mut self, i: usize, j: usize, v: f64) {
        self.team[(i, j)] += v;
        if i != j {
            self.team[(j, i)] += v;
        }
    }

    #[inline]
    pub fn add_game_diag(&mut self, game: usize, v: f64) {
        self.game_diag[game] += v;
    }

    pub fn add_coupling(&mut self, game: usize, team_col: usize, v: f64) {
        let entries = &mut self.coupling[game];
        match entries.iter_mut().find(|(c, _)| *c == team_col) {
            Some(e) => e.1 += v,
            None => entries.push((team_col, v)),
        }
    }

    /// Add `v` at the single position `(i, j)` of the stacked layout. The
    /// caller supplies both orientations of off-diagonal terms; the
    /// game-to-team orientation is dropped because the coupling is stored
    /// once.
    #[inline]
    pub fn add_ordered(&mut self, i: usize, j: usize, v: f64) {
        let t = self.team_dim();
        match (i < t, j < t) {
            (true, true) => self.team[(i, j)] += v,
            (false, false) => {
                debug_assert_eq!(i, j, "game block is diagonal");
                self.game_diag[i - t] += v;
            }
            (true, false) => self.add_coupling(j - t, i, v),
            (false, true) => {}
        }
    }

    /// Add a symmetric entry addressed in the stacked effect layout.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let t = self.team_dim();
        match (i < t, j < t) {
            (true, true) => self.add_team(i, j, v),
            (false, false) => {
                assert_eq!(i, j, "game block is diagonal");
                self.add_game_diag(i - t, v);
            }
            (true, false) => self.add_coupling(j - t, i, v),
            (false, true) => self.add_coupling(i - t, j, v),
        }
    }

    pub fn add_ridge(&mut self, lambda: f64) {
        for i in 0..self.team_dim() {
            self.team[(i, i)] += lambda;
        }
        for d in &mut self.game_diag {
            *d += lambda;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let t = self.team_dim();
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..t {
            for j in 0..t {
                m[(i, j)] = self.team[(i, j)];
            }
        }
        for (g, d) in self.game_diag.iter().enumerate() {
            m[(t + g, t + g)] = *d;
            for &(c, v) in &self.coupling[g] {
                m[(c, t + g)] = v;
                m[(t + g, c)] = v;
            }
        }
        m
    }

    /// Cholesky-based factorization; fails when the matrix is not
    /// positive-definite.
    pub fn factorize(&self) -> Result<Factorization> {
        let mut schur = self.team.clone();
        let mut log_det = 0.0;
        for (g, &d) in self.game_diag.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "curvature not positive-definite in game block (entry {g} = {d})"
                )));
            }
            log_det += d.ln();
            let c = &self.coupling[g];
            for &(a, va) in c {
                for &(b, vb) in c {
                    schur[(a, b)] -= va * vb / d;
                }
            }
        }
        let llt = schur
            .llt(Side::Lower)
            .map_err(|_| Error::Numeric("curvature not positive-definite in team block".into()))?;
        let l = llt.L();
        for i in 0..l.nrows() {
            log_det += 2.0 * l[(i, i)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::Numeric(
                "curvature log-determinant is not finite".into(),
            ));
        }
        Ok(Factorization {
            llt,
            game_diag: self.game_diag.clone(),
            coupling: self.coupling.clone(),
            log_det,
        })
    }
}

pub struct Factorization {
    llt: faer::linalg::solvers::Llt<f64>,
    game_diag: Vec<f64>,
    coupling: Vec<Vec<(usize, f64)>>,
    log_det: f64,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("team_dim", &self.team_dim())
            .field("games", &self.game_diag.len())
            .field("log_det", &self.log_det)
            .finish()
    }
}

impl Factorization {
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn team_dim(&self) -> usize {
        self.llt.L().nrows()
    }

    /// Solve `A x = rhs` in the stacked layout.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let t = self.team_dim();
        let mut r_team = Mat::<f64>::from_fn(t, 1, |i, _| rhs[i]);
        for (g, &d) in self.game_diag.iter().enumerate() {
            let rg = rhs[t + g] / d;
            for &(c, v) in &self.coupling[g] {
                r_team[(c, 0)] -= v * rg;
            }
        }
        let x_team = self.llt.solve(&r_team);
        let mut x = Vec::with_capacity(rhs.len());
        x.extend((0..t).map(|i| x_team[(i, 0)]));
        for (g, &d) in self.game_diag.iter().enumerate() {
            let cx: f64 = self.coupling[g]
                .iter()
                .map(|&(c, v)| v * x_team[(c, 0)])
                .sum();
            x.push((rhs[t + g] - cx) / d);
        }
        x
    }

    /// The team block of the inverse together with the diagonal of its game
    /// block: the entries the EM updates consume.
    pub fn selected_inverse(&self) -> SelectedInverse {
        let team = self.llt.inverse();
        let game_diag = self
            .game_diag
            .iter()
            .zip(&self.coupling)
            .map(|(&d, c)| {
                let mut quad = 0.0;
                for &(a, va) in c {
                    for &(b, vb) in c {
                        quad += va * team[(a, b)] * vb;
                    }
                }
                1.0 / d + quad / (d * d)
            })
            .collect();
        SelectedInverse { team, game_diag }
    }
}

#[derive(Debug, Clone)]
pub struct SelectedInverse {
    team: Mat<f64>,
    game_diag: Vec<f64>,
}

impl SelectedInverse {
    /// Entry of the inverse between two team-effect columns.
    #[inline]
    pub fn team(&self, i: usize, j: usize) -> f64 {
        self.team[(i, j)]
    }

    /// 3×3 diagonal block for team `j`.
    pub fn team_block(&self, j: usize) -> Matrix3<f64> {
        Matrix3::from_fn(|a, b| self.team[(3 * j + a, 3 * j + b)])
    }

    pub fn game(&self, g: usize) -> f64 {
        self.game_diag[g]
    }

    pub fn game_diag(&self) -> &[f64] {
        &self.game_diag
    }
}
