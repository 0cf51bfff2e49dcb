//! Parameter and initial-condition samplers for the generated datasets.
//!
//! Every trajectory draws from its own ChaCha stream keyed by the run seed and
//! the trajectory index, so output never depends on scheduling.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HamiltonianSystem, SystemParams};
use crate::error::{Error, Result};
use crate::phase::PhaseState;

/// Fill fraction of the 4-particle Lennard-Jones preset.
pub const LJ_SPARSE_FILL: f64 = 0.05;
/// Fill fraction of the 16-particle Lennard-Jones preset.
pub const LJ_DENSE_FILL: f64 = 0.3;

const LJ_MOMENTUM_STD: f64 = 0.5;
const LJ_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    MassSpring,
    Pendulum,
    DoublePendulum,
    TwoBody,
    MatchingPennies,
    RockPaperScissors,
    #[serde(rename = "lj-4")]
    Lj4,
    #[serde(rename = "lj-16")]
    Lj16,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 8] = [
        DatasetKind::MassSpring,
        DatasetKind::Pendulum,
        DatasetKind::DoublePendulum,
        DatasetKind::TwoBody,
        DatasetKind::MatchingPennies,
        DatasetKind::RockPaperScissors,
        DatasetKind::Lj4,
        DatasetKind::Lj16,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::MassSpring => "mass-spring",
            DatasetKind::Pendulum => "pendulum",
            DatasetKind::DoublePendulum => "double-pendulum",
            DatasetKind::TwoBody => "two-body",
            DatasetKind::MatchingPennies => "matching-pennies",
            DatasetKind::RockPaperScissors => "rock-paper-scissors",
            DatasetKind::Lj4 => "lj-4",
            DatasetKind::Lj16 => "lj-16",
        }
    }

    pub fn is_game(self) -> bool {
        matches!(
            self,
            DatasetKind::MatchingPennies | DatasetKind::RockPaperScissors
        )
    }

    /// Scalar count of one ground-truth state.
    pub fn state_dim(self) -> usize {
        match self {
            DatasetKind::MassSpring | DatasetKind::Pendulum => 2,
            DatasetKind::DoublePendulum | DatasetKind::MatchingPennies => 4,
            DatasetKind::RockPaperScissors => 6,
            DatasetKind::TwoBody => 8,
            DatasetKind::Lj4 => 16,
            DatasetKind::Lj16 => 64,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match normalized.as_str() {
            "n-body" | "nbody" => "two-body",
            "md-4" => "lj-4",
            "md-16" => "lj-16",
            other => other,
        };
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| {
                let names: Vec<_> = DatasetKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown dataset '{s}'; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// `Fixed` uses constant parameters; `Colored` ("+c") resamples them per
/// trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fixed,
    Colored,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Fixed => "fixed",
            Variant::Colored => "colored",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(Variant::Fixed),
            "colored" | "coloured" | "+c" | "c" => Ok(Variant::Colored),
            other => Err(Error::Config(format!(
                "unknown variant '{other}'; expected fixed or colored"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub variant: Variant,
    pub kind: DatasetKind,
}

impl SamplerConfig {
    pub fn new(kind: DatasetKind, variant: Variant, seed: u64) -> Self {
        Self {
            seed,
            variant,
            kind,
        }
    }

    /// Independent generator for one trajectory.
    pub fn trajectory_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// The system trajectory `index` is simulated with.
    pub fn system(&self, index: u64) -> Result<HamiltonianSystem> {
        sample_system(self.kind, self.variant, &mut self.trajectory_rng(index))
    }
}

/// Parameters of one physical system. Fixed variants use the constant
/// column (unit values where none is listed); colored variants draw each
/// parameter uniformly from its range.
pub fn sample_system<R: Rng + ?Sized>(
    kind: DatasetKind,
    variant: Variant,
    rng: &mut R,
) -> Result<HamiltonianSystem> {
    let colored = variant == Variant::Colored;
    let mut draw = |lo: f64, hi: f64, fixed: f64| {
        if colored {
            rng.random_range(lo..hi)
        } else {
            fixed
        }
    };
    match kind {
        DatasetKind::MassSpring => {
            let m = draw(0.2, 1.0, 1.0);
            HamiltonianSystem::mass_spring(2.0, m)
        }
        DatasetKind::Pendulum => {
            let m = draw(0.5, 1.5, 1.0);
            let g = draw(3.0, 4.0, 1.0);
            let l = draw(0.5, 1.0, 1.0);
            HamiltonianSystem::pendulum(m, l, g)
        }
        DatasetKind::DoublePendulum => {
            let m1 = draw(0.4, 0.6, 1.0);
            let m2 = draw(0.4, 0.6, 1.0);
            let g = draw(2.5, 4.0, 1.0);
            let l1 = draw(0.75, 1.0, 1.0);
            let l2 = draw(0.75, 1.0, 1.0);
            HamiltonianSystem::double_pendulum(m1, m2, l1, l2, g)
        }
        DatasetKind::TwoBody => {
            let m1 = draw(0.5, 1.5, 1.0);
            let m2 = draw(0.5, 1.5, 1.0);
            HamiltonianSystem::n_body(1.0, vec![m1, m2])
        }
        DatasetKind::Lj4 => HamiltonianSystem::lennard_jones(4, LJ_SPARSE_FILL),
        DatasetKind::Lj16 => HamiltonianSystem::lennard_jones(16, LJ_DENSE_FILL),
        DatasetKind::MatchingPennies | DatasetKind::RockPaperScissors => Err(Error::Config(
            format!("{kind} is a game, not a Hamiltonian system"),
        )),
    }
}

/// Uniform point on the planar annulus `r_min <= r <= r_max`, by rejection.
pub fn sample_annulus<R: Rng + ?Sized>(r_min: f64, r_max: f64, rng: &mut R) -> (f64, f64) {
    loop {
        let x = rng.random_range(-r_max..=r_max);
        let y = rng.random_range(-r_max..=r_max);
        let r = x.hypot(y);
        if r >= r_min && r <= r_max {
            return (x, y);
        }
    }
}

pub fn sample_initial_state<R: Rng + ?Sized>(
    system: &HamiltonianSystem,
    rng: &mut R,
) -> Result<PhaseState> {
    match system.params() {
        SystemParams::MassSpring { k, m } => {
            let (q, p) = sample_annulus(0.1, 1.0, rng);
            Ok(PhaseState {
                q: vec![q],
                p: vec![p * (k * m).sqrt()],
            })
        }
        SystemParams::Pendulum { .. } => {
            let (q, p) = sample_annulus(1.3, 2.3, rng);
            Ok(PhaseState {
                q: vec![q],
                p: vec![p],
            })
        }
        SystemParams::DoublePendulum { .. } => {
            let (q1, p1) = sample_annulus(1.3, 2.3, rng);
            let (q2, p2) = sample_annulus(1.3, 2.3, rng);
            Ok(PhaseState {
                q: vec![q1, q2],
                p: vec![p1, p2],
            })
        }
        SystemParams::NBody { g, masses } => {
            if masses.len() != 2 {
                return Err(Error::Config(format!(
                    "initial-state sampling supports two bodies, got {}",
                    masses.len()
                )));
            }
            Ok(two_body_state(*g, masses[0], masses[1], rng))
        }
        SystemParams::LennardJones {
            masses,
            fill_fraction,
        } => lennard_jones_state(masses, *fill_fraction, rng),
    }
}

/// Near-circular relative orbit with the centre of mass at rest: separation
/// `r ~ U(0.5, 1.5)`, circular tangential speed and a radial component of up
/// to 10% of it.
fn two_body_state<R: Rng + ?Sized>(g: f64, m1: f64, m2: f64, rng: &mut R) -> PhaseState {
    let total = m1 + m2;
    let reduced = m1 * m2 / total;
    let r = rng.random_range(0.5..1.5);
    let theta = rng.random_range(0.0..2.0 * PI);
    let radial = rng.random_range(-0.1..0.1);
    let (sin, cos) = theta.sin_cos();
    // unit vectors of the separation q2 - q1
    let (ux, uy) = (cos, sin);
    let (tx, ty) = (-sin, cos);
    let speed = (g * total / r).sqrt();
    let (vx, vy) = (speed * (tx + radial * ux), speed * (ty + radial * uy));
    PhaseState {
        q: vec![
            -m2 / total * r * ux,
            -m2 / total * r * uy,
            m1 / total * r * ux,
            m1 / total * r * uy,
        ],
        p: vec![-reduced * vx, -reduced * vy, reduced * vx, reduced * vy],
    }
}

/// Jittered square lattice whose spacing gives each unit-diameter particle
/// the requested area fraction; Gaussian momenta with zero net momentum.
fn lennard_jones_state<R: Rng + ?Sized>(
    masses: &[f64],
    fill_fraction: f64,
    rng: &mut R,
) -> Result<PhaseState> {
    let count = masses.len();
    let side = (count as f64).sqrt().ceil() as usize;
    let spacing = (PI / (4.0 * fill_fraction)).sqrt();
    let normal = Normal::new(0.0, LJ_MOMENTUM_STD).expect("positive std");
    let mut q = Vec::with_capacity(2 * count);
    let mut p = Vec::with_capacity(2 * count);
    for i in 0..count {
        let (col, row) = ((i % side) as f64, (i / side) as f64);
        q.push((col + 0.5) * spacing + rng.random_range(-LJ_JITTER..LJ_JITTER) * spacing);
        q.push((row + 0.5) * spacing + rng.random_range(-LJ_JITTER..LJ_JITTER) * spacing);
        p.push(normal.sample(rng));
        p.push(normal.sample(rng));
    }
    let (mean_x, mean_y) = p
        .chunks_exact(2)
        .fold((0.0, 0.0), |(x, y), c| (x + c[0], y + c[1]));
    for c in p.chunks_exact_mut(2) {
        c[0] -= mean_x / count as f64;
        c[1] -= mean_y / count as f64;
    }
    Ok(PhaseState { q, p })
}
