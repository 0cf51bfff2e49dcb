//! Concrete Hamiltonian systems and the replicator field for zero-sum games.
//!
//! Particle systems (N-body, Lennard-Jones) live in the plane: a system of `B`
//! bodies has `q = [x_1, y_1, .., x_B, y_B]` and the same layout for `p`, so
//! its phase space has dimension `4B`.

mod replicator;
mod sampling;

pub use replicator::{replicator_field, ReplicatorGame};
pub use sampling::{
    sample_annulus, sample_initial_state, sample_system, DatasetKind, SamplerConfig, Variant,
    LJ_DENSE_FILL, LJ_SPARSE_FILL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{Hamiltonian, PhaseState};

/// Pairs closer than this are treated as coincident.
pub const MIN_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    MassSpring,
    Pendulum,
    DoublePendulum,
    NBody,
    LennardJones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SystemParams {
    /// `H = k q^2 / 2 + p^2 / 2m`
    MassSpring { k: f64, m: f64 },
    /// `H = m l g (1 - cos q) + p^2 / 2 l m`
    Pendulum { m: f64, l: f64, g: f64 },
    DoublePendulum {
        m1: f64,
        m2: f64,
        l1: f64,
        l2: f64,
        g: f64,
    },
    /// Planar gravitating bodies.
    NBody { g: f64, masses: Vec<f64> },
    /// Planar particles under `4 (r^-12 - r^-6)` in reduced units.
    /// `fill_fraction` only steers initial-state sampling.
    LennardJones { masses: Vec<f64>, fill_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSystem {
    params: SystemParams,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be strictly positive, got {v}"
        )))
    }
}

impl HamiltonianSystem {
    pub fn new(params: SystemParams) -> Result<Self> {
        match &params {
            SystemParams::MassSpring { k, m } => {
                positive("k", *k)?;
                positive("m", *m)?;
            }
            SystemParams::Pendulum { m, l, g } => {
                positive("m", *m)?;
                positive("l", *l)?;
                positive("g", *g)?;
            }
            SystemParams::DoublePendulum { m1, m2, l1, l2, g } => {
                positive("m1", *m1)?;
                positive("m2", *m2)?;
                positive("l1", *l1)?;
                positive("l2", *l2)?;
                positive("g", *g)?;
            }
            SystemParams::NBody { g, masses } => {
                positive("g", *g)?;
                if masses.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "N-body system needs at least two bodies".into(),
                    ));
                }
                for &m in masses {
                    positive("mass", m)?;
                }
            }
            SystemParams::LennardJones {
                masses,
                fill_fraction,
            } => {
                if masses.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "Lennard-Jones system needs at least two particles".into(),
                    ));
                }
                for &m in masses {
                    positive("mass", m)?;
                }
                positive("fill_fraction", *fill_fraction)?;
            }
        }
        Ok(Self { params })
    }

    pub fn mass_spring(k: f64, m: f64) -> Result<Self> {
        Self::new(SystemParams::MassSpring { k, m })
    }

    pub fn pendulum(m: f64, l: f64, g: f64) -> Result<Self> {
        Self::new(SystemParams::Pendulum { m, l, g })
    }

    pub fn double_pendulum(m1: f64, m2: f64, l1: f64, l2: f64, g: f64) -> Result<Self> {
        Self::new(SystemParams::DoublePendulum { m1, m2, l1, l2, g })
    }

    pub fn n_body(g: f64, masses: Vec<f64>) -> Result<Self> {
        Self::new(SystemParams::NBody { g, masses })
    }

    /// Unit-mass Lennard-Jones particles.
    pub fn lennard_jones(particles: usize, fill_fraction: f64) -> Result<Self> {
        Self::new(SystemParams::LennardJones {
            masses: vec![1.0; particles],
            fill_fraction,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn kind(&self) -> SystemKind {
        match self.params {
            SystemParams::MassSpring { .. } => SystemKind::MassSpring,
            SystemParams::Pendulum { .. } => SystemKind::Pendulum,
            SystemParams::DoublePendulum { .. } => SystemKind::DoublePendulum,
            SystemParams::NBody { .. } => SystemKind::NBody,
            SystemParams::LennardJones { .. } => SystemKind::LennardJones,
        }
    }

    /// Phase-space dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.dof()
    }

    /// `H = T(p) + V(q)`; everything except the double pendulum.
    pub fn is_separable(&self) -> bool {
        !matches!(self.params, SystemParams::DoublePendulum { .. })
    }

    fn check(&self, state: &PhaseState) -> Result<()> {
        if state.dof() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                found: state.dof(),
            });
        }
        Ok(())
    }

    /// Kinetic energy; for separable systems this depends on `p` alone.
    fn kinetic(&self, q: &[f64], p: &[f64]) -> f64 {
        match &self.params {
            SystemParams::MassSpring { m, .. } => p[0] * p[0] / (2.0 * m),
            SystemParams::Pendulum { m, l, .. } => p[0] * p[0] / (2.0 * l * m),
            SystemParams::DoublePendulum { .. } => double_pendulum_parts(&self.params, q, p).0,
            SystemParams::NBody { masses, .. } | SystemParams::LennardJones { masses, .. } => {
                masses
                    .iter()
                    .zip(p.chunks_exact(2))
                    .map(|(m, pi)| (pi[0] * pi[0] + pi[1] * pi[1]) / (2.0 * m))
                    .sum()
            }
        }
    }

    fn potential(&self, q: &[f64]) -> Result<f64> {
        Ok(match &self.params {
            SystemParams::MassSpring { k, .. } => 0.5 * k * q[0] * q[0],
            SystemParams::Pendulum { m, l, g } => m * l * g * (1.0 - q[0].cos()),
            SystemParams::DoublePendulum { m1, m2, l1, l2, g } => {
                -(m1 + m2) * g * l1 * q[0].cos() - m2 * g * l2 * q[1].cos()
            }
            SystemParams::NBody { g, masses } => {
                let mut v = 0.0;
                for_each_pair(q, |i, j, r, _, _| {
                    v -= g * masses[i] * masses[j] / r;
                })?;
                v
            }
            SystemParams::LennardJones { .. } => {
                let mut v = 0.0;
                for_each_pair(q, |_, _, r, _, _| {
                    let inv6 = r.powi(-6);
                    v += 4.0 * (inv6 * inv6 - inv6);
                })?;
                v
            }
        })
    }

    /// `dT/dp` for separable systems, written into `out`.
    pub(crate) fn kinetic_gradient(&self, p: &[f64], out: &mut [f64]) {
        match &self.params {
            SystemParams::MassSpring { m, .. } => out[0] = p[0] / m,
            SystemParams::Pendulum { m, l, .. } => out[0] = p[0] / (l * m),
            SystemParams::NBody { masses, .. } | SystemParams::LennardJones { masses, .. } => {
                for (i, m) in masses.iter().enumerate() {
                    out[2 * i] = p[2 * i] / m;
                    out[2 * i + 1] = p[2 * i + 1] / m;
                }
            }
            SystemParams::DoublePendulum { .. } => {
                unreachable!("double pendulum is not separable")
            }
        }
    }

    /// `dV/dq` for separable systems, written into `out`.
    pub(crate) fn potential_gradient(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.params {
            SystemParams::MassSpring { k, .. } => out[0] = k * q[0],
            SystemParams::Pendulum { m, l, g } => out[0] = m * l * g * q[0].sin(),
            SystemParams::NBody { g, masses } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for_each_pair(q, |i, j, r, dx, dy| {
                    // V_ij = -g m_i m_j / r with (dx, dy) = q_i - q_j
                    let s = g * masses[i] * masses[j] / (r * r * r);
                    out[2 * i] += s * dx;
                    out[2 * i + 1] += s * dy;
                    out[2 * j] -= s * dx;
                    out[2 * j + 1] -= s * dy;
                })?;
            }
            SystemParams::LennardJones { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                for_each_pair(q, |i, j, r, dx, dy| {
                    let inv2 = 1.0 / (r * r);
                    let inv6 = inv2 * inv2 * inv2;
                    // dV/dr / r
                    let s = (-48.0 * inv6 * inv6 + 24.0 * inv6) * inv2;
                    out[2 * i] += s * dx;
                    out[2 * i + 1] += s * dy;
                    out[2 * j] -= s * dx;
                    out[2 * j + 1] -= s * dy;
                })?;
            }
            SystemParams::DoublePendulum { .. } => {
                unreachable!("double pendulum is not separable")
            }
        }
        Ok(())
    }
}

impl Hamiltonian for HamiltonianSystem {
    fn dof(&self) -> usize {
        match &self.params {
            SystemParams::MassSpring { .. } | SystemParams::Pendulum { .. } => 1,
            SystemParams::DoublePendulum { .. } => 2,
            SystemParams::NBody { masses, .. } | SystemParams::LennardJones { masses, .. } => {
                2 * masses.len()
            }
        }
    }

    fn energy(&self, state: &PhaseState) -> Result<f64> {
        self.check(state)?;
        Ok(self.kinetic(&state.q, &state.p) + self.potential(&state.q)?)
    }

    fn gradient(&self, state: &PhaseState) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(state)?;
        let n = self.dof();
        if let SystemParams::DoublePendulum { .. } = self.params {
            return Ok(double_pendulum_gradient(&self.params, &state.q, &state.p));
        }
        let mut dq = vec![0.0; n];
        let mut dp = vec![0.0; n];
        self.potential_gradient(&state.q, &mut dq)?;
        self.kinetic_gradient(&state.p, &mut dp);
        Ok((dq, dp))
    }
}

/// Visits each unordered pair of planar bodies with `(i, j, r, dx, dy)`
/// where `(dx, dy) = q_i - q_j`.
fn for_each_pair(q: &[f64], mut f: impl FnMut(usize, usize, f64, f64, f64)) -> Result<()> {
    let bodies = q.len() / 2;
    for i in 0..bodies {
        for j in (i + 1)..bodies {
            let dx = q[2 * i] - q[2 * j];
            let dy = q[2 * i + 1] - q[2 * j + 1];
            let r = (dx * dx + dy * dy).sqrt();
            if r < MIN_SEPARATION {
                return Err(Error::Singularity(format!(
                    "bodies {i} and {j} coincide (distance {r:e})"
                )));
            }
            f(i, j, r, dx, dy);
        }
    }
    Ok(())
}

/// Kinetic term of the double pendulum together with the pieces its
/// derivatives reuse: `(T, numerator, denominator)`.
fn double_pendulum_parts(params: &SystemParams, q: &[f64], p: &[f64]) -> (f64, f64, f64) {
    let SystemParams::DoublePendulum { m1, m2, l1, l2, .. } = *params else {
        unreachable!()
    };
    let delta = q[0] - q[1];
    let num = m2 * l2 * l2 * p[0] * p[0] + (m1 + m2) * l1 * l1 * p[1] * p[1]
        - 2.0 * m2 * l1 * l2 * p[0] * p[1] * delta.cos();
    let sin = delta.sin();
    let den = 2.0 * m2 * l1 * l1 * l2 * l2 * (m1 + m2 * sin * sin);
    (num / den, num, den)
}

fn double_pendulum_gradient(params: &SystemParams, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let SystemParams::DoublePendulum { m1, m2, l1, l2, g } = *params else {
        unreachable!()
    };
    let (_, num, den) = double_pendulum_parts(params, q, p);
    let delta = q[0] - q[1];
    let (sin, cos) = delta.sin_cos();

    let dt_dp1 = (2.0 * m2 * l2 * l2 * p[0] - 2.0 * m2 * l1 * l2 * p[1] * cos) / den;
    let dt_dp2 = (2.0 * (m1 + m2) * l1 * l1 * p[1] - 2.0 * m2 * l1 * l2 * p[0] * cos) / den;

    let dnum = 2.0 * m2 * l1 * l2 * p[0] * p[1] * sin;
    let dden = 2.0 * m2 * l1 * l1 * l2 * l2 * m2 * 2.0 * sin * cos;
    let dt_ddelta = (dnum * den - num * dden) / (den * den);

    let dh_dq1 = dt_ddelta + (m1 + m2) * g * l1 * q[0].sin();
    let dh_dq2 = -dt_ddelta + m2 * g * l2 * q[1].sin();
    (vec![dh_dq1, dh_dq2], vec![dt_dp1, dt_dp2])
}

pub fn mass_spring_energy(k: f64, m: f64, state: &PhaseState) -> Result<f64> {
    HamiltonianSystem::mass_spring(k, m)?.energy(state)
}

pub fn pendulum_energy(m: f64, l: f64, g: f64, state: &PhaseState) -> Result<f64> {
    HamiltonianSystem::pendulum(m, l, g)?.energy(state)
}

pub fn double_pendulum_energy(
    m1: f64,
    m2: f64,
    l1: f64,
    l2: f64,
    g: f64,
    state: &PhaseState,
) -> Result<f64> {
    HamiltonianSystem::double_pendulum(m1, m2, l1, l2, g)?.energy(state)
}

pub fn n_body_energy(g: f64, masses: &[f64], state: &PhaseState) -> Result<f64> {
    HamiltonianSystem::n_body(g, masses.to_vec())?.energy(state)
}

pub fn lennard_jones_energy(state: &PhaseState) -> Result<f64> {
    HamiltonianSystem::lennard_jones(state.dof() / 2, LJ_SPARSE_FILL)?.energy(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{finite_difference_gradient, hamiltonian_vector_field};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn st(q: &[f64], p: &[f64]) -> PhaseState {
        PhaseState::new(q.to_vec(), p.to_vec()).unwrap()
    }

    fn all_systems() -> Vec<HamiltonianSystem> {
        vec![
            HamiltonianSystem::mass_spring(2.0, 0.7).unwrap(),
            HamiltonianSystem::pendulum(1.2, 0.8, 3.5).unwrap(),
            HamiltonianSystem::double_pendulum(0.5, 0.6, 0.9, 0.8, 3.0).unwrap(),
            HamiltonianSystem::n_body(1.0, vec![0.8, 1.3]).unwrap(),
            HamiltonianSystem::n_body(1.0, vec![1.0, 1.0, 0.5]).unwrap(),
            HamiltonianSystem::lennard_jones(4, LJ_SPARSE_FILL).unwrap(),
        ]
    }

    /// States with bodies kept well apart so particle potentials stay tame.
    fn random_state(sys: &HamiltonianSystem, rng: &mut ChaCha8Rng) -> PhaseState {
        let n = sys.dof();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q: Vec<f64> = match sys.kind() {
            SystemKind::NBody | SystemKind::LennardJones => (0..n)
                .map(|i| {
                    let body = (i / 2) as f64;
                    let base = if i % 2 == 0 { 1.3 * body } else { 0.7 * body };
                    base + rng.random_range(-0.2..0.2)
                })
                .collect(),
            _ => (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        };
        st(&q, &p)
    }

    #[test]
    fn mass_spring_examples() {
        assert_eq!(mass_spring_energy(2.0, 1.0, &st(&[1.0], &[0.0])).unwrap(), 1.0);
        assert_eq!(mass_spring_energy(2.0, 1.0, &st(&[0.0], &[0.0])).unwrap(), 0.0);
        assert_eq!(mass_spring_energy(2.0, 0.5, &st(&[0.0], &[1.0])).unwrap(), 1.0);
        assert!(matches!(
            mass_spring_energy(0.0, 1.0, &st(&[0.0], &[0.0])),
            Err(Error::InvalidParameter(_))
        ));
        assert!(mass_spring_energy(2.0, -1.0, &st(&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn other_energy_examples() {
        assert_eq!(pendulum_energy(1.0, 1.0, 1.0, &st(&[0.0], &[0.0])).unwrap(), 0.0);
        let two_body = st(&[0.0, 0.0, 1.0, 0.0], &[0.0; 4]);
        assert_eq!(n_body_energy(1.0, &[1.0, 1.0], &two_body).unwrap(), -1.0);
        assert_eq!(lennard_jones_energy(&two_body).unwrap(), 0.0);
        let r_min = 2f64.powf(1.0 / 6.0);
        let at_min = st(&[0.0, 0.0, r_min, 0.0], &[0.0; 4]);
        assert!((lennard_jones_energy(&at_min).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn lj_minimum_is_stationary() {
        // the pair force vanishes at r = 2^(1/6)
        let r_min = 2f64.powf(1.0 / 6.0);
        let sys = HamiltonianSystem::lennard_jones(2, LJ_SPARSE_FILL).unwrap();
        let (dq, _) = sys.gradient(&st(&[0.0, 0.0, r_min, 0.0], &[0.0; 4])).unwrap();
        assert!(dq.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn coincident_bodies_are_singular() {
        let s = st(&[0.5, 0.5, 0.5, 0.5], &[0.0; 4]);
        assert!(matches!(
            n_body_energy(1.0, &[1.0, 1.0], &s),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            lennard_jones_energy(&s),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn vector_field_examples() {
        let ms = HamiltonianSystem::mass_spring(2.0, 1.0).unwrap();
        let v = hamiltonian_vector_field(&ms, &st(&[1.0], &[0.0])).unwrap();
        assert_eq!((v.q[0], v.p[0]), (0.0, -2.0));
        let pend = HamiltonianSystem::pendulum(1.0, 1.0, 1.0).unwrap();
        let v = hamiltonian_vector_field(&pend, &st(&[0.0], &[0.0])).unwrap();
        assert_eq!((v.q[0], v.p[0]), (0.0, 0.0));
    }

    #[test]
    fn energy_is_conserved_along_the_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sys in all_systems() {
            for _ in 0..1000 {
                let s = random_state(&sys, &mut rng);
                let (dq, dp) = sys.gradient(&s).unwrap();
                let v = hamiltonian_vector_field(&sys, &s).unwrap();
                let rate: f64 = dq.iter().zip(&v.q).map(|(a, b)| a * b).sum::<f64>()
                    + dp.iter().zip(&v.p).map(|(a, b)| a * b).sum::<f64>();
                assert!(rate.abs() < 1e-10, "{:?}: dH/dt = {rate}", sys.kind());
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for sys in all_systems() {
            for _ in 0..1000 {
                let s = random_state(&sys, &mut rng);
                let (dq, dp) = sys.gradient(&s).unwrap();
                let (fq, fp) = finite_difference_gradient(&sys, &s, 1e-6).unwrap();
                let scale = dq
                    .iter()
                    .chain(&dp)
                    .fold(1.0f64, |acc, v| acc.max(v.abs()));
                for (a, b) in dq.iter().chain(&dp).zip(fq.iter().chain(&fp)) {
                    assert!(
                        (a - b).abs() <= 1e-5 * scale,
                        "{:?}: analytic {a} vs numeric {b}",
                        sys.kind()
                    );
                }
            }
        }
    }

    #[test]
    fn energy_is_even_in_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for sys in all_systems() {
            for _ in 0..100 {
                let s = random_state(&sys, &mut rng);
                let flipped = st(&s.q, &s.p.iter().map(|v| -v).collect::<Vec<_>>());
                assert_eq!(sys.energy(&s).unwrap(), sys.energy(&flipped).unwrap());
            }
        }
    }

    #[test]
    fn dimensions_follow_kind() {
        let dims: Vec<usize> = all_systems().iter().map(|s| s.dim()).collect();
        assert_eq!(dims, vec![2, 2, 4, 8, 12, 16]);
        assert!(!HamiltonianSystem::double_pendulum(1.0, 1.0, 1.0, 1.0, 1.0)
            .unwrap()
            .is_separable());
    }
}
