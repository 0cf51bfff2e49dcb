//! Ground-truth trajectory sets for the benchmark datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LatentTrajectorySet;
use crate::integrators::{rollout, Dynamics, IntegratorSpec, Scheme, DEFAULT_DT, REPLICATOR_DT};
use crate::phase::Trajectory;
use crate::systems::{
    sample_initial_state, sample_system, DatasetKind, ReplicatorGame, SamplerConfig, SystemKind, Variant,
};

/// Largest internal step used for Lennard-Jones rollouts.
pub const LJ_MAX_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub variant: Variant,
    pub trajectories: usize,
    /// Recorded steps `T`; each trajectory holds `T + 1` states.
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
}

impl DatasetSpec {
    /// Spec with the dataset's default step size.
    pub fn new(kind: DatasetKind, variant: Variant, trajectories: usize, steps: usize, seed: u64) -> Self {
        Self {
            kind,
            variant,
            trajectories,
            steps,
            dt: default_dt(kind),
            seed,
        }
    }
}

pub fn default_dt(kind: DatasetKind) -> f64 {
    if kind.is_game() {
        REPLICATOR_DT
    } else {
        DEFAULT_DT
    }
}

/// Simulates trajectory `index` of the dataset.
pub fn simulate_trajectory(spec: &DatasetSpec, index: usize) -> Result<Trajectory> {
    let sampler = SamplerConfig::new(spec.kind, spec.variant, spec.seed);
    let mut rng = sampler.trajectory_rng(index as u64);
    match spec.kind {
        DatasetKind::MatchingPennies | DatasetKind::RockPaperScissors => {
            let game = if spec.kind == DatasetKind::MatchingPennies {
                ReplicatorGame::matching_pennies()
            } else {
                ReplicatorGame::rock_paper_scissors()
            };
            let start = game.sample_state(&mut rng)?;
            rollout(&game, &start, &IntegratorSpec::new(Scheme::ImprovedEuler, spec.dt, spec.steps))
        }
        _ => {
            let system = sample_system(spec.kind, spec.variant, &mut rng)?;
            let start = sample_initial_state(&system, &mut rng)?;
            let integrator = match system.kind() {
                SystemKind::DoublePendulum => IntegratorSpec::new(Scheme::Rk4, spec.dt, spec.steps),
                SystemKind::LennardJones => IntegratorSpec::new(Scheme::Leapfrog, spec.dt, spec.steps)
                    .with_substeps((spec.dt / LJ_MAX_STEP).ceil().max(1.0) as usize),
                _ => IntegratorSpec::new(Scheme::Leapfrog, spec.dt, spec.steps),
            };
            rollout(&system as &dyn Dynamics, &start, &integrator)
        }
    }
}

/// Ground-truth-only set of `spec.trajectories` trajectories, simulated in
/// parallel with one independent random stream per trajectory.
pub fn generate(spec: &DatasetSpec) -> Result<LatentTrajectorySet> {
    if spec.trajectories == 0 {
        return Err(Error::InvalidParameter("at least one trajectory is required".into()));
    }
    if spec.steps == 0 {
        return Err(Error::InvalidParameter("at least one step is required".into()));
    }
    let trajectories = (0..spec.trajectories)
        .into_par_iter()
        .map(|i| simulate_trajectory(spec, i))
        .collect::<Result<Vec<_>>>()?;
    LatentTrajectorySet::from_truth(&trajectories)
}
