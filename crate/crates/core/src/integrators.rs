//! Fixed-step integrators and trajectory rollout.
//!
//! Leapfrog is the kick-drift-kick Störmer-Verlet scheme and needs a
//! separable Hamiltonian. RK4 and improved Euler (Heun) work for any field.
//! Backward rollouts feed `-dt` to the same scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{PhaseState, Trajectory};
use crate::systems::{HamiltonianSystem, ReplicatorGame};

/// Default step for the physical systems.
pub const DEFAULT_DT: f64 = 0.125;
/// Default step for replicator dynamics.
pub const REPLICATOR_DT: f64 = 0.1;
/// Any state component beyond this magnitude counts as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Leapfrog,
    Rk4,
    ImprovedEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    /// Spacing of the recorded states; always positive.
    pub dt: f64,
    pub steps: usize,
    pub direction: Direction,
    /// Internal integration steps per recorded step.
    pub substeps: usize,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, steps: usize) -> Self {
        Self {
            scheme,
            dt,
            steps,
            direction: Direction::Forward,
            substeps: 1,
        }
    }

    pub fn backward(mut self) -> Self {
        self.direction = Direction::Backward;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Signed internal step.
    fn h(&self) -> f64 {
        let h = self.dt / self.substeps as f64;
        match self.direction {
            Direction::Forward => h,
            Direction::Backward => -h,
        }
    }
}

/// An autonomous ODE on a flattened state `[q.., p..]`.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;

    fn rate(&self, state: &[f64], out: &mut [f64]) -> Result<()>;

    /// Present when the field splits into `dq/dt = f(p)` and `dp/dt = g(q)`.
    fn split(&self) -> Option<&dyn SplitDynamics> {
        None
    }
}

pub trait SplitDynamics {
    /// `dq/dt` as a function of `p`.
    fn drift(&self, p: &[f64], out: &mut [f64]);
    /// `dp/dt` as a function of `q`.
    fn kick(&self, q: &[f64], out: &mut [f64]) -> Result<()>;
}

impl Dynamics for HamiltonianSystem {
    fn dim(&self) -> usize {
        HamiltonianSystem::dim(self)
    }

    fn rate(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        use crate::phase::Hamiltonian;
        let n = self.dof();
        let s = PhaseState {
            q: state[..n].to_vec(),
            p: state[n..].to_vec(),
        };
        let (dq, dp) = self.gradient(&s)?;
        out[..n].copy_from_slice(&dp);
        for (o, g) in out[n..].iter_mut().zip(dq) {
            *o = -g;
        }
        Ok(())
    }

    fn split(&self) -> Option<&dyn SplitDynamics> {
        self.is_separable().then_some(self as &dyn SplitDynamics)
    }
}

impl SplitDynamics for HamiltonianSystem {
    fn drift(&self, p: &[f64], out: &mut [f64]) {
        self.kinetic_gradient(p, out);
    }

    fn kick(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.potential_gradient(q, out)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }
}

/// Replicator states are packed as `[x.., y..]`.
impl Dynamics for ReplicatorGame {
    fn dim(&self) -> usize {
        let (rows, cols) = self.dims();
        rows + cols
    }

    fn rate(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let (rows, _) = self.dims();
        let (x, y) = state.split_at(rows);
        let (dx, dy) = out.split_at_mut(rows);
        self.field_unchecked(x, y, dx, dy);
        Ok(())
    }
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn leapfrog_step(split: &dyn SplitDynamics, x: &mut [f64], h: f64, ws: &mut Workspace) -> Result<()> {
    let n = x.len() / 2;
    let (q, p) = x.split_at_mut(n);
    let force = &mut ws.k1[..n];
    let velocity = &mut ws.k2[..n];
    split.kick(q, force)?;
    p.iter_mut().zip(force.iter()).for_each(|(pi, f)| *pi += 0.5 * h * f);
    split.drift(p, velocity);
    q.iter_mut().zip(velocity.iter()).for_each(|(qi, v)| *qi += h * v);
    split.kick(q, force)?;
    p.iter_mut().zip(force.iter()).for_each(|(pi, f)| *pi += 0.5 * h * f);
    Ok(())
}

fn rk4_step(field: &dyn Dynamics, x: &mut [f64], h: f64, ws: &mut Workspace) -> Result<()> {
    let Workspace {
        k1,
        k2,
        k3,
        k4,
        tmp,
    } = ws;
    field.rate(x, k1)?;
    axpy(tmp, x, 0.5 * h, k1);
    field.rate(tmp, k2)?;
    axpy(tmp, x, 0.5 * h, k2);
    field.rate(tmp, k3)?;
    axpy(tmp, x, h, k3);
    field.rate(tmp, k4)?;
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

fn heun_step(field: &dyn Dynamics, x: &mut [f64], h: f64, ws: &mut Workspace) -> Result<()> {
    field.rate(x, &mut ws.k1)?;
    axpy(&mut ws.tmp, x, h, &ws.k1);
    field.rate(&ws.tmp, &mut ws.k2)?;
    for i in 0..x.len() {
        x[i] += 0.5 * h * (ws.k1[i] + ws.k2[i]);
    }
    Ok(())
}

/// `out = x + a * y`
fn axpy(out: &mut [f64], x: &[f64], a: f64, y: &[f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + a * yi;
    }
}

/// Integrates `spec.steps` recorded steps from `initial`; the first state of
/// the result is `initial` itself.
pub fn rollout(field: &dyn Dynamics, initial: &PhaseState, spec: &IntegratorSpec) -> Result<Trajectory> {
    spec.validate()?;
    let mut x = initial.to_flat();
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            found: x.len(),
        });
    }
    let split = match spec.scheme {
        Scheme::Leapfrog => Some(field.split().ok_or_else(|| {
            Error::UnsupportedScheme(
                "leapfrog needs a separable Hamiltonian; use rk4 instead".into(),
            )
        })?),
        _ => None,
    };
    let h = spec.h();
    let mut ws = Workspace::new(x.len());
    let mut states = Vec::with_capacity(spec.steps + 1);
    states.push(initial.clone());
    for step in 1..=spec.steps {
        for _ in 0..spec.substeps {
            match spec.scheme {
                Scheme::Leapfrog => leapfrog_step(split.unwrap(), &mut x, h, &mut ws)?,
                Scheme::Rk4 => rk4_step(field, &mut x, h, &mut ws)?,
                Scheme::ImprovedEuler => heun_step(field, &mut x, h, &mut ws)?,
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(Error::Divergence {
                    step,
                    limit: DIVERGENCE_LIMIT,
                });
            }
        }
        let n = x.len() / 2;
        states.push(PhaseState {
            q: x[..n].to_vec(),
            p: x[n..].to_vec(),
        });
    }
    Trajectory::new(spec.dt, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::Hamiltonian;
    use crate::systems::{sample_initial_state, HamiltonianSystem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn st(q: f64, p: f64) -> PhaseState {
        PhaseState::new(vec![q], vec![p]).unwrap()
    }

    #[test]
    fn leapfrog_closes_the_harmonic_orbit() {
        let sys = HamiltonianSystem::mass_spring(1.0, 1.0).unwrap();
        let spec = IntegratorSpec::new(Scheme::Leapfrog, PI / 25.0, 50);
        let traj = rollout(&sys, &st(1.0, 0.0), &spec).unwrap();
        let end = traj.last();
        assert!((end.q[0] - 1.0).abs() < 1e-2 && end.p[0].abs() < 1e-2);
        // the kick-drift-kick recursion starting at rest gives q_n = cos(n theta)
        // with cos(theta) = 1 - h^2 / 2
        let theta = (1.0 - (PI / 25.0).powi(2) / 2.0).acos();
        for (i, s) in traj.states().iter().enumerate() {
            assert!((s.q[0] - (i as f64 * theta).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn leapfrog_is_reversible() {
        let sys = HamiltonianSystem::pendulum(1.0, 1.0, 1.0).unwrap();
        let start = st(1.7, -0.4);
        let spec = IntegratorSpec::new(Scheme::Leapfrog, DEFAULT_DT, 1000);
        let fwd = rollout(&sys, &start, &spec).unwrap();
        let back = rollout(&sys, fwd.last(), &spec.backward()).unwrap();
        let end = back.last();
        assert!((end.q[0] - 1.7).abs() < 1e-9 && (end.p[0] + 0.4).abs() < 1e-9);
    }

    #[test]
    fn length_contract() {
        let sys = HamiltonianSystem::mass_spring(2.0, 1.0).unwrap();
        let one = IntegratorSpec::new(Scheme::Rk4, 0.1, 1);
        let traj = rollout(&sys, &st(1.0, 0.0), &one).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.first(), &st(1.0, 0.0));
        let zero = IntegratorSpec::new(Scheme::Rk4, 0.1, 0);
        assert!(rollout(&sys, &st(1.0, 0.0), &zero).is_err());
        let bad_dt = IntegratorSpec::new(Scheme::Rk4, -0.1, 3);
        assert!(rollout(&sys, &st(1.0, 0.0), &bad_dt).is_err());
    }

    #[test]
    fn leapfrog_rejects_double_pendulum() {
        let sys = HamiltonianSystem::double_pendulum(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let s = PhaseState::new(vec![0.1, 0.2], vec![0.0, 0.0]).unwrap();
        let spec = IntegratorSpec::new(Scheme::Leapfrog, 0.1, 3);
        assert!(matches!(
            rollout(&sys, &s, &spec),
            Err(Error::UnsupportedScheme(_))
        ));
        let ok = rollout(&sys, &s, &IntegratorSpec::new(Scheme::Rk4, 0.1, 3));
        assert!(ok.is_ok());
    }

    #[test]
    fn divergence_names_the_step() {
        // a close two-body encounter with a huge step flings the bodies apart
        let sys = HamiltonianSystem::n_body(1.0, vec![1.0, 1.0]).unwrap();
        let s = PhaseState::new(vec![0.0, 0.0, 1e-7, 0.0], vec![0.0; 4]).unwrap();
        let spec = IntegratorSpec::new(Scheme::Rk4, 1e3, 10);
        match rollout(&sys, &s, &spec) {
            Err(Error::Divergence { step, .. }) => assert!(step >= 1),
            Err(Error::Singularity(_)) => {}
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let sys = HamiltonianSystem::mass_spring(2.0, 1.0).unwrap();
        let omega = 2f64.sqrt();
        let err = |h: f64| {
            let traj = rollout(&sys, &st(1.0, 0.0), &IntegratorSpec::new(Scheme::Rk4, h, 1)).unwrap();
            let s = traj.last();
            let q = (omega * h).cos();
            let p = -omega * (omega * h).sin();
            (s.q[0] - q).hypot(s.p[0] - p)
        };
        let ratio = err(0.2) / err(0.1);
        assert!((24.0..=40.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn leapfrog_energy_stays_in_its_band() {
        // KDK on a harmonic oscillator has a shadow energy whose relative
        // oscillation peaks at x / (1 - x) with x = (omega dt)^2 / 4; the
        // error must stay in that band and show no secular growth.
        let sys = HamiltonianSystem::mass_spring(2.0, 1.0).unwrap();
        let x = 2.0 * DEFAULT_DT * DEFAULT_DT / 4.0;
        let band = x / (1.0 - x);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = IntegratorSpec::new(Scheme::Leapfrog, DEFAULT_DT, 1000);
        for _ in 0..100 {
            let s0 = sample_initial_state(&sys, &mut rng).unwrap();
            let traj = rollout(&sys, &s0, &spec).unwrap();
            let e0 = sys.energy(&s0).unwrap();
            let rel: Vec<f64> = traj
                .states()
                .iter()
                .map(|s| (sys.energy(s).unwrap() - e0) / e0)
                .collect();
            assert!(rel.iter().all(|r| r.abs() <= band + 1e-9));
            let head: f64 = rel[..200].iter().sum::<f64>() / 200.0;
            let tail: f64 = rel[801..].iter().sum::<f64>() / 200.0;
            assert!((tail - head).abs() < 1e-3);
        }
    }

    #[test]
    fn replicator_rollout_stays_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for game in [ReplicatorGame::matching_pennies(), ReplicatorGame::rock_paper_scissors()] {
            for scheme in [Scheme::ImprovedEuler, Scheme::Rk4] {
                let s0 = game.sample_state(&mut rng).unwrap();
                let traj =
                    rollout(&game, &s0, &IntegratorSpec::new(scheme, REPLICATOR_DT, 1000)).unwrap();
                for s in traj.states() {
                    for part in [&s.q, &s.p] {
                        assert!((part.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                        assert!(part.iter().all(|v| *v >= -1e-6));
                    }
                }
            }
        }
        let game = ReplicatorGame::matching_pennies();
        assert!(rollout(
            &game,
            &PhaseState::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap(),
            &IntegratorSpec::new(Scheme::Leapfrog, 0.1, 1)
        )
        .is_err());
    }

    #[test]
    fn substeps_refine_the_same_grid() {
        let sys = HamiltonianSystem::mass_spring(2.0, 1.0).unwrap();
        let coarse = rollout(&sys, &st(1.0, 0.0), &IntegratorSpec::new(Scheme::Leapfrog, 0.125, 8)).unwrap();
        let fine = rollout(
            &sys,
            &st(1.0, 0.0),
            &IntegratorSpec::new(Scheme::Leapfrog, 0.125, 8).with_substeps(10),
        )
        .unwrap();
        assert_eq!(coarse.len(), fine.len());
        let exact = (2f64.sqrt() * 1.0).cos();
        assert!((fine.last().q[0] - exact).abs() < (coarse.last().q[0] - exact).abs());
    }
}
