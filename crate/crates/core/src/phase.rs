//! Phase-space primitives.
//!
//! A state `s = (q, p)` holds `n` generalized positions and their conjugate
//! momenta. Flattened states are always laid out as `[q_1..q_n, p_1..p_n]`,
//! which is the ordering the canonical matrix `A = [[0, I], [-I, 0]]` assumes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidDimension(
                "phase state needs at least one degree of freedom".into(),
            ));
        }
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                found: p.len(),
            });
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase state component".into()));
        }
        Ok(Self { q, p })
    }

    /// Splits `[q.., p..]` in half.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "flattened phase state has odd length {}",
                flat.len()
            )));
        }
        let n = flat.len() / 2;
        Self::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.q.len());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out
    }

    /// Degrees of freedom `n`; the phase-space dimension is `2n`.
    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Time-ordered states sampled every `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dt: f64,
    states: Vec<PhaseState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<PhaseState>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "trajectory time step must be positive, got {dt}"
            )));
        }
        if states.len() < 2 {
            return Err(Error::InvalidDimension(format!(
                "trajectory needs at least 2 states, got {}",
                states.len()
            )));
        }
        let n = states[0].dof();
        if let Some(bad) = states.iter().find(|s| s.dof() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.dof(),
            });
        }
        Ok(Self { dt, states })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[PhaseState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.states[0].dof()
    }

    pub fn first(&self) -> &PhaseState {
        &self.states[0]
    }

    pub fn last(&self) -> &PhaseState {
        &self.states[self.states.len() - 1]
    }

    pub fn into_states(self) -> Vec<PhaseState> {
        self.states
    }
}

/// The `2k x 2k` block matrix `[[0, I], [-I, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanonicalMatrix {
    k: usize,
}

impl CanonicalMatrix {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDimension(
                "canonical matrix needs k >= 1".into(),
            ));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn size(&self) -> usize {
        2 * self.k
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let k = self.k;
        if row < k && col == row + k {
            1.0
        } else if row >= k && col + k == row {
            -1.0
        } else {
            0.0
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let size = self.size();
        DMatrix::from_fn(size, size, |r, c| self.entry(r, c))
    }

    /// The form restricted to a subset of coordinates, e.g. the latent
    /// dimensions that survive filtering. Dropping one half of a `(Q_i, P_i)`
    /// pair leaves a zero row and column for the survivor.
    pub fn restricted(&self, kept: &[usize]) -> Result<DMatrix<f64>> {
        if let Some(&bad) = kept.iter().find(|&&i| i >= self.size()) {
            return Err(Error::InvalidDimension(format!(
                "index {bad} outside a {}-dimensional phase space",
                self.size()
            )));
        }
        Ok(DMatrix::from_fn(kept.len(), kept.len(), |r, c| {
            self.entry(kept[r], kept[c])
        }))
    }
}

pub fn canonical_block_matrix(k: usize) -> Result<CanonicalMatrix> {
    CanonicalMatrix::new(k)
}

/// An energy function with analytic partial derivatives.
pub trait Hamiltonian {
    /// Degrees of freedom `n`.
    fn dof(&self) -> usize;

    fn energy(&self, state: &PhaseState) -> Result<f64>;

    /// `(dH/dq, dH/dp)` at `state`.
    fn gradient(&self, state: &PhaseState) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// `(dq/dt, dp/dt) = (dH/dp, -dH/dq)`.
pub fn hamiltonian_vector_field<H: Hamiltonian + ?Sized>(
    system: &H,
    state: &PhaseState,
) -> Result<PhaseState> {
    if state.dof() != system.dof() {
        return Err(Error::DimensionMismatch {
            expected: system.dof(),
            found: state.dof(),
        });
    }
    let (dh_dq, dh_dp) = system.gradient(state)?;
    if dh_dq.iter().chain(&dh_dp).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian gradient".into()));
    }
    Ok(PhaseState {
        q: dh_dp,
        p: dh_dq.into_iter().map(|v| -v).collect(),
    })
}

/// `max |M^T A M - A|`; zero exactly when `M` is symplectic.
pub fn symplecticity_defect(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidDimension(format!(
            "defect needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "defect needs an even, nonzero dimension, got {}",
            m.nrows()
        )));
    }
    let a = CanonicalMatrix::new(m.nrows() / 2)?.dense();
    let diff = m.transpose() * &a * m - a;
    Ok(diff.amax())
}

/// Central-difference gradient of `H`, used to cross-check the analytic
/// gradients.
pub fn finite_difference_gradient<H: Hamiltonian + ?Sized>(
    system: &H,
    state: &PhaseState,
    step: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let flat = state.to_flat();
    let n = state.dof();
    let mut grad = vec![0.0; flat.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += step;
        minus[i] -= step;
        let e_plus = system.energy(&PhaseState::from_flat(&plus)?)?;
        let e_minus = system.energy(&PhaseState::from_flat(&minus)?)?;
        *g = (e_plus - e_minus) / (2.0 * step);
    }
    let dp = grad.split_off(n);
    Ok((grad, dp))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Spring;

    impl Hamiltonian for Spring {
        fn dof(&self) -> usize {
            1
        }
        fn energy(&self, s: &PhaseState) -> Result<f64> {
            Ok(s.q[0] * s.q[0] + 0.5 * s.p[0] * s.p[0])
        }
        fn gradient(&self, s: &PhaseState) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((vec![2.0 * s.q[0]], vec![s.p[0]]))
        }
    }

    #[test]
    fn canonical_matrix_k1() {
        let a = canonical_block_matrix(1).unwrap().dense();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert_eq!(&a * a.transpose(), DMatrix::identity(2, 2));
    }

    #[test]
    fn canonical_matrix_identities() {
        for k in 1..=8 {
            let a = canonical_block_matrix(k).unwrap().dense();
            assert_eq!(a.transpose(), -&a);
            assert_eq!(a.transpose() * &a, DMatrix::identity(2 * k, 2 * k));
            assert_eq!(&a * &a, -DMatrix::identity(2 * k, 2 * k));
        }
    }

    #[test]
    fn canonical_matrix_rejects_zero() {
        assert!(matches!(
            canonical_block_matrix(0),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn restricted_form_keeps_pairs() {
        let a = CanonicalMatrix::new(2).unwrap();
        // Q1, P1 survive; Q2 survives without its partner.
        let r = a.restricted(&[0, 1, 2]).unwrap();
        assert_eq!(
            r,
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0])
        );
        assert!(a.restricted(&[4]).is_err());
    }

    #[test]
    fn defect_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(symplecticity_defect(&id).unwrap(), 0.0);
        let squeeze = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5]));
        assert_eq!(symplecticity_defect(&squeeze).unwrap(), 0.0);
        let dilate = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0]));
        assert_eq!(symplecticity_defect(&dilate).unwrap(), 3.0);
        assert_eq!(symplecticity_defect(&-dilate).unwrap(), 3.0);
    }

    #[test]
    fn defect_rejects_odd_or_rectangular() {
        assert!(symplecticity_defect(&DMatrix::identity(3, 3)).is_err());
        assert!(symplecticity_defect(&DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn vector_field_of_spring() {
        let s = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        let v = hamiltonian_vector_field(&Spring, &s).unwrap();
        assert_eq!(v.q, vec![0.0]);
        assert_eq!(v.p, vec![-2.0]);
        let wrong = PhaseState::new(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(hamiltonian_vector_field(&Spring, &wrong).is_err());
    }

    #[test]
    fn phase_state_validation() {
        assert!(PhaseState::new(vec![], vec![]).is_err());
        assert!(PhaseState::new(vec![1.0], vec![]).is_err());
        assert!(PhaseState::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(PhaseState::from_flat(&[1.0, 2.0, 3.0]).is_err());
        let s = PhaseState::from_flat(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.q, vec![1.0, 2.0]);
        assert_eq!(s.to_flat(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn trajectory_validation() {
        let s = PhaseState::new(vec![0.0], vec![0.0]).unwrap();
        assert!(Trajectory::new(0.0, vec![s.clone(), s.clone()]).is_err());
        assert!(Trajectory::new(0.1, vec![s.clone()]).is_err());
        let wide = PhaseState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(Trajectory::new(0.1, vec![s.clone(), wide]).is_err());
        assert_eq!(Trajectory::new(0.1, vec![s.clone(), s]).unwrap().len(), 2);
    }

    #[test]
    fn finite_difference_matches_spring() {
        let s = PhaseState::new(vec![0.3], vec![-0.7]).unwrap();
        let (dq, dp) = finite_difference_gradient(&Spring, &s, 1e-6).unwrap();
        assert!((dq[0] - 0.6).abs() < 1e-8);
        assert!((dp[0] + 0.7).abs() < 1e-8);
    }
}
