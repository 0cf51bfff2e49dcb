//! Synthetic latent spaces with a known relationship to ground truth:
//! canonical transforms that a symplectic `F` can undo, and distortions or
//! noise that it cannot.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LatentTrajectorySet;
use crate::phase::CanonicalMatrix;

/// KL surrogate of transformed (signal) dimensions.
pub const SIGNAL_KL: f64 = 1.0;
/// KL surrogate of padding dimensions, below the filter threshold.
pub const PADDING_KL: f64 = 1e-4;
/// Value of the constant padding dimensions.
pub const PAD_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticTransform {
    Identity,
    UniformScale {
        factor: f64,
    },
    /// Harmonic-oscillator action-angle coordinates for `H = k q²/2 + p²/(2m)`
    /// (one degree of freedom).
    ActionAngle {
        stiffness: f64,
        mass: f64,
    },
    RandomLinearSymplectic {
        seed: u64,
    },
    /// Raises each momentum to `exponent`, keeping its sign.
    NonSymplecticDistort {
        exponent: f64,
    },
    /// I.i.d. standard normal latents with no relation to the ground truth.
    PureNoise {
        dim: usize,
        seed: u64,
    },
    /// Pads the inner transform's output to `latent_dim` as
    /// `[Q, pad, P, pad]`, alternating constant and noise pads.
    HighDimEmbed {
        inner: Box<SyntheticTransform>,
        latent_dim: usize,
        noise_level: f64,
        seed: u64,
    },
}

impl SyntheticTransform {
    pub fn embed(self, latent_dim: usize, seed: u64) -> Self {
        SyntheticTransform::HighDimEmbed {
            inner: Box::new(self),
            latent_dim,
            noise_level: 0.05,
            seed,
        }
    }

    /// Latent dimension produced from a `truth_dim`-dimensional phase space.
    pub fn output_dim(&self, truth_dim: usize) -> usize {
        match self {
            SyntheticTransform::PureNoise { dim, .. } => *dim,
            SyntheticTransform::HighDimEmbed { latent_dim, .. } => *latent_dim,
            _ => truth_dim,
        }
    }

    fn validate(&self, truth_dim: usize) -> Result<()> {
        match self {
            SyntheticTransform::Identity | SyntheticTransform::RandomLinearSymplectic { .. } => Ok(()),
            SyntheticTransform::UniformScale { factor } => {
                if *factor == 0.0 || !factor.is_finite() {
                    return Err(Error::InvalidParameter(format!("scale factor must be nonzero, got {factor}")));
                }
                Ok(())
            }
            SyntheticTransform::ActionAngle { stiffness, mass } => {
                if truth_dim != 2 {
                    return Err(Error::InvalidDimension(format!(
                        "action-angle coordinates need a 2-dimensional phase space, got {truth_dim}"
                    )));
                }
                if !(*stiffness > 0.0 && *mass > 0.0) {
                    return Err(Error::InvalidParameter("stiffness and mass must be positive".into()));
                }
                Ok(())
            }
            SyntheticTransform::NonSymplecticDistort { exponent } => {
                if !(*exponent > 0.0 && exponent.is_finite()) {
                    return Err(Error::InvalidParameter(format!("exponent must be positive, got {exponent}")));
                }
                Ok(())
            }
            SyntheticTransform::PureNoise { dim, .. } => {
                if *dim == 0 || dim % 2 != 0 {
                    return Err(Error::InvalidDimension(format!("noise latent dimension must be even, got {dim}")));
                }
                Ok(())
            }
            SyntheticTransform::HighDimEmbed {
                inner,
                latent_dim,
                noise_level,
                ..
            } => {
                if matches!(**inner, SyntheticTransform::HighDimEmbed { .. }) {
                    return Err(Error::Config("nested embeddings are not supported".into()));
                }
                inner.validate(truth_dim)?;
                let inner_dim = inner.output_dim(truth_dim);
                if latent_dim % 2 != 0 || *latent_dim < inner_dim {
                    return Err(Error::InvalidDimension(format!(
                        "embedding dimension {latent_dim} must be even and at least {inner_dim}"
                    )));
                }
                if !(*noise_level >= 0.0 && noise_level.is_finite()) {
                    return Err(Error::InvalidParameter(format!("noise level must be non-negative, got {noise_level}")));
                }
                Ok(())
            }
        }
    }
}

/// `(Q, P)` action-angle coordinates of `(q, p)`.
pub fn action_angle(q: f64, p: f64, stiffness: f64, mass: f64) -> (f64, f64) {
    let omega = (stiffness / mass).sqrt();
    let a = (mass * omega).sqrt();
    let angle = (q * a).atan2(p / a);
    let action = (p * p + (mass * omega * q).powi(2)) / (2.0 * mass * omega);
    (angle, action)
}

/// `∂(Q, P) / ∂(q, p)` of [`action_angle`].
pub fn action_angle_jacobian(q: f64, p: f64, stiffness: f64, mass: f64) -> DMatrix<f64> {
    let omega = (stiffness / mass).sqrt();
    let a = (mass * omega).sqrt();
    let (u, v) = (a * q, p / a);
    let r2 = u * u + v * v;
    DMatrix::from_row_slice(2, 2, &[a * v / r2, -u / (a * r2), a * u, v / a])
}

/// `exp(X)` by scaling and squaring with a Taylor series truncated once terms
/// drop below `1e-14` relative to the sum.
pub fn matrix_exp(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = x.abs().column_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = x / 2f64.powi(squarings);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..100 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= 1e-14 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `exp(A W)` for symmetric `W`, a symplectic matrix.
pub fn symplectic_exp(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != w.ncols() || w.nrows() % 2 != 0 || w.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "generator must be square with even size, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let a = CanonicalMatrix::new(w.nrows() / 2)?.dense();
    let sym = (w + w.transpose()) / 2.0;
    Ok(matrix_exp(&(a * sym)))
}

/// Random `2n x 2n` symplectic matrix generated from a seeded symmetric `W`.
pub fn random_linear_symplectic(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 2 * n;
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    // modest spread keeps the matrix well conditioned
    let w = (&g + g.transpose()) * (0.25 / (d as f64).sqrt());
    symplectic_exp(&w)
}

/// `M⁻¹ = -A Mᵀ A` for symplectic `M`.
pub fn symplectic_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = CanonicalMatrix::new(m.nrows() / 2)?.dense();
    Ok(-(&a * m.transpose() * &a))
}

/// Transforms one trajectory of `steps` flattened truth states.
fn transform_trajectory(
    transform: &SyntheticTransform,
    truth: &[f64],
    truth_dim: usize,
    trajectory: usize,
    linear: Option<&DMatrix<f64>>,
) -> Vec<f64> {
    let steps = truth.len() / truth_dim;
    match transform {
        SyntheticTransform::Identity => truth.to_vec(),
        SyntheticTransform::UniformScale { factor } => truth.iter().map(|v| v * factor).collect(),
        SyntheticTransform::ActionAngle { stiffness, mass } => truth
            .chunks_exact(2)
            .flat_map(|s| {
                let (angle, action) = action_angle(s[0], s[1], *stiffness, *mass);
                [angle, action]
            })
            .collect(),
        SyntheticTransform::RandomLinearSymplectic { .. } => {
            let m = linear.expect("matrix prepared for linear transforms");
            truth
                .chunks_exact(truth_dim)
                .flat_map(|s| (m * nalgebra::DVector::from_column_slice(s)).data.as_vec().clone())
                .collect()
        }
        SyntheticTransform::NonSymplecticDistort { exponent } => {
            let n = truth_dim / 2;
            truth
                .chunks_exact(truth_dim)
                .flat_map(|s| {
                    let mut out = s.to_vec();
                    for v in &mut out[n..] {
                        *v = v.signum() * v.abs().powf(*exponent);
                    }
                    out
                })
                .collect()
        }
        SyntheticTransform::PureNoise { dim, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(trajectory as u64);
            (0..steps * dim).map(|_| rng.sample(StandardNormal)).collect()
        }
        SyntheticTransform::HighDimEmbed {
            inner,
            latent_dim,
            noise_level,
            seed,
        } => {
            let inner_dim = inner.output_dim(truth_dim);
            let signal = transform_trajectory(inner, truth, truth_dim, trajectory, linear);
            let (half_in, half_out) = (inner_dim / 2, latent_dim / 2);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(trajectory as u64);
            let mut out = Vec::with_capacity(steps * latent_dim);
            for s in signal.chunks_exact(inner_dim) {
                for half in 0..2 {
                    out.extend_from_slice(&s[half * half_in..(half + 1) * half_in]);
                    for j in 0..half_out - half_in {
                        out.push(if j % 2 == 0 {
                            PAD_CONSTANT
                        } else {
                            noise_level * rng.sample::<f64, _>(StandardNormal)
                        });
                    }
                }
            }
            out
        }
    }
}

/// KL surrogates: signal dimensions high, padding below the filter threshold.
fn surrogate_kl(transform: &SyntheticTransform, truth_dim: usize) -> Vec<f64> {
    match transform {
        SyntheticTransform::HighDimEmbed { inner, latent_dim, .. } => {
            let half_in = inner.output_dim(truth_dim) / 2;
            let half_out = latent_dim / 2;
            (0..*latent_dim)
                .map(|i| if i % half_out < half_in { SIGNAL_KL } else { PADDING_KL })
                .collect()
        }
        other => vec![SIGNAL_KL; other.output_dim(truth_dim)],
    }
}

fn linear_matrix(transform: &SyntheticTransform, truth_dim: usize) -> Result<Option<DMatrix<f64>>> {
    match transform {
        SyntheticTransform::RandomLinearSymplectic { seed } => Ok(Some(random_linear_symplectic(truth_dim / 2, *seed)?)),
        SyntheticTransform::HighDimEmbed { inner, .. } => linear_matrix(inner, truth_dim),
        _ => Ok(None),
    }
}

/// Builds a latent payload for `truth` from `transform`, pointwise along
/// each trajectory, replacing any existing latent.
pub fn apply_transform(transform: &SyntheticTransform, truth: &LatentTrajectorySet) -> Result<LatentTrajectorySet> {
    let truth_dim = truth.truth_dim();
    if truth_dim % 2 != 0 {
        return Err(Error::InvalidDimension(format!("ground-truth dimension {truth_dim} is odd")));
    }
    transform.validate(truth_dim)?;
    let linear = linear_matrix(transform, truth_dim)?;
    let latent: Vec<f64> = (0..truth.trajectories())
        .into_par_iter()
        .map(|t| transform_trajectory(transform, truth.truth_rows(t..t + 1), truth_dim, t, linear.as_ref()))
        .collect::<Vec<_>>()
        .concat();
    truth.with_latent(transform.output_dim(truth_dim), latent, Some(surrogate_kl(transform, truth_dim)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{filter_informative_dims, DEFAULT_KL_THRESHOLD};
    use crate::phase::{symplecticity_defect, PhaseState, Trajectory};

    fn truth_set() -> LatentTrajectorySet {
        let trajs: Vec<Trajectory> = (0..3)
            .map(|k| {
                let states = (0..5)
                    .map(|i| {
                        let t = 0.3 * i as f64 + k as f64;
                        PhaseState::new(vec![t.cos()], vec![-t.sin() * 1.5]).unwrap()
                    })
                    .collect();
                Trajectory::new(0.125, states).unwrap()
            })
            .collect();
        LatentTrajectorySet::from_truth(&trajs).unwrap()
    }

    #[test]
    fn identity_copies_truth() {
        let set = truth_set();
        let out = apply_transform(&SyntheticTransform::Identity, &set).unwrap();
        assert_eq!(out.latent(), set.truth());
        assert_eq!(out.kl(), Some(&[1.0, 1.0][..]));
    }

    #[test]
    fn action_angle_is_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let q = rng.random_range(-2.0..2.0);
            let p = rng.random_range(-2.0..2.0);
            let (k, m) = (rng.random_range(0.5..3.0), rng.random_range(0.2..2.0));
            let j = action_angle_jacobian(q, p, k, m);
            assert!(symplecticity_defect(&j).unwrap() < 1e-10);
        }
    }

    #[test]
    fn action_angle_jacobian_matches_finite_differences() {
        let (q, p, k, m) = (0.4, -0.9, 2.0, 1.0);
        let j = action_angle_jacobian(q, p, k, m);
        let h = 1e-6;
        let (a1, b1) = action_angle(q + h, p, k, m);
        let (a0, b0) = action_angle(q - h, p, k, m);
        assert!(((a1 - a0) / (2.0 * h) - j[(0, 0)]).abs() < 1e-7);
        assert!(((b1 - b0) / (2.0 * h) - j[(1, 0)]).abs() < 1e-7);
        let (a1, b1) = action_angle(q, p + h, k, m);
        let (a0, b0) = action_angle(q, p - h, k, m);
        assert!(((a1 - a0) / (2.0 * h) - j[(0, 1)]).abs() < 1e-7);
        assert!(((b1 - b0) / (2.0 * h) - j[(1, 1)]).abs() < 1e-7);
        // the action is the energy over the frequency
        let (_, action) = action_angle(q, p, k, m);
        let energy = k * q * q / 2.0 + p * p / (2.0 * m);
        assert!((action - energy / (k / m).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn momentum_cubing_is_far_from_symplectic() {
        // Jacobian diag(1, 3p²) at generic momenta
        for p in [0.3f64, 0.8, 1.4] {
            let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0 * p * p]);
            assert!(symplecticity_defect(&j).unwrap() > 0.1);
        }
        let set = truth_set();
        let out = apply_transform(&SyntheticTransform::NonSymplecticDistort { exponent: 3.0 }, &set).unwrap();
        let p = set.truth_point(1, 2)[1];
        assert!((out.latent_point(1, 2)[1] - p.powi(3)).abs() < 1e-15);
        assert_eq!(out.latent_point(1, 2)[0], set.truth_point(1, 2)[0]);
    }

    #[test]
    fn zero_generator_gives_identity() {
        assert_eq!(symplectic_exp(&DMatrix::zeros(4, 4)).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn matrix_exp_matches_rotation() {
        let t = 2.7;
        let x = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = matrix_exp(&x);
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!((e - expected).amax() < 1e-12);
    }

    #[test]
    fn random_symplectic_matrices() {
        for seed in 0..100 {
            for n in [1, 2, 4] {
                let m = random_linear_symplectic(n, seed).unwrap();
                assert!(symplecticity_defect(&m).unwrap() < 1e-10);
                let inv = symplectic_inverse(&m).unwrap();
                assert!((&inv * &m - DMatrix::identity(2 * n, 2 * n)).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn embedding_layout_and_filtering() {
        let set = truth_set();
        let t = SyntheticTransform::UniformScale { factor: 2.0 }.embed(8, 3);
        let out = apply_transform(&t, &set).unwrap();
        assert_eq!(out.latent_dim(), 8);
        let row = out.latent_point(2, 3);
        let s = set.truth_point(2, 3);
        assert_eq!(row[0], 2.0 * s[0]);
        assert_eq!(row[4], 2.0 * s[1]);
        assert_eq!(row[1], PAD_CONSTANT);
        assert_eq!(row[3], PAD_CONSTANT);
        assert_eq!(out.kl().unwrap(), &[1.0, 1e-4, 1e-4, 1e-4, 1.0, 1e-4, 1e-4, 1e-4]);
        let (reduced, kept) = filter_informative_dims(&out, DEFAULT_KL_THRESHOLD).unwrap();
        assert_eq!(kept, vec![0, 4]);
        assert_eq!(reduced.latent_point(2, 3), &[2.0 * s[0], 2.0 * s[1]]);
        // deterministic noise
        assert_eq!(apply_transform(&t, &set).unwrap(), out);
    }

    #[test]
    fn invalid_transforms_are_rejected() {
        let set = truth_set();
        assert!(apply_transform(&SyntheticTransform::UniformScale { factor: 0.0 }, &set).is_err());
        assert!(apply_transform(&SyntheticTransform::PureNoise { dim: 3, seed: 0 }, &set).is_err());
        assert!(apply_transform(&SyntheticTransform::Identity.embed(1, 0), &set).is_err());
        assert!(apply_transform(&SyntheticTransform::Identity.embed(4, 0).embed(8, 0), &set).is_err());
    }
}
