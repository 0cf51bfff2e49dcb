use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseState;

/// Tolerance for simplex membership of replicator inputs.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Two-population zero-sum game: the row player receives `A`, the column
/// player `B = -A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatorGame {
    rows: usize,
    cols: usize,
    /// Row-major payoff of the row player.
    payoff: Vec<f64>,
}

impl ReplicatorGame {
    pub fn new(payoff: DMatrix<f64>) -> Result<Self> {
        if payoff.nrows() == 0 || payoff.ncols() == 0 {
            return Err(Error::InvalidDimension("empty payoff matrix".into()));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff entry".into()));
        }
        Ok(Self {
            rows: payoff.nrows(),
            cols: payoff.ncols(),
            payoff: payoff.transpose().as_slice().to_vec(),
        })
    }

    pub fn matching_pennies() -> Self {
        Self::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])).unwrap()
    }

    pub fn rock_paper_scissors() -> Self {
        Self::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0],
        ))
        .unwrap()
    }

    /// Strategy counts `(n_x, n_y)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn payoff(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.payoff)
    }

    fn a(&self, i: usize, j: usize) -> f64 {
        self.payoff[i * self.cols + j]
    }

    /// Field without simplex checks; integrator stages may sit slightly off
    /// the simplex.
    pub(crate) fn field_unchecked(&self, x: &[f64], y: &[f64], dx: &mut [f64], dy: &mut [f64]) {
        // (A y)_i and (x^T A)_j
        let ay: Vec<f64> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.a(i, j) * y[j]).sum())
            .collect();
        let xa: Vec<f64> = (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.a(i, j)).sum())
            .collect();
        let xay: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        for i in 0..self.rows {
            dx[i] = x[i] * (ay[i] - xay);
        }
        // B = -A
        for j in 0..self.cols {
            dy[j] = y[j] * (-xa[j] + xay);
        }
    }

    /// Uniform sample on the product of simplexes, packed as `q = x`, `p = y`.
    /// Needs a square game so both halves have equal length.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PhaseState> {
        if self.rows != self.cols {
            return Err(Error::InvalidDimension(format!(
                "phase-state packing needs a square game, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(PhaseState {
            q: uniform_simplex(self.rows, rng),
            p: uniform_simplex(self.cols, rng),
        })
    }
}

/// Normalized i.i.d. exponentials are uniform on the simplex.
fn uniform_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

fn check_simplex(name: &str, v: &[f64]) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|c| !c.is_finite() || *c < -SIMPLEX_TOLERANCE)
        || (sum - 1.0).abs() > SIMPLEX_TOLERANCE
    {
        return Err(Error::Domain(format!(
            "{name} is not on the probability simplex (sum {sum})"
        )));
    }
    Ok(())
}

/// `dx_i = x_i [(A y)_i - x^T A y]`, `dy_j = y_j [(x^T B)_j - x^T B y]`.
pub fn replicator_field(game: &ReplicatorGame, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (rows, cols) = game.dims();
    if x.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: x.len(),
        });
    }
    if y.len() != cols {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: y.len(),
        });
    }
    check_simplex("x", x)?;
    check_simplex("y", y)?;
    let mut dx = vec![0.0; rows];
    let mut dy = vec![0.0; cols];
    game.field_unchecked(x, y, &mut dx, &mut dy);
    Ok((dx, dy))
}
