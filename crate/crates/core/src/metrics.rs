//! R², Sym, SyMetric, VPT and normalized MSE, plus the end-to-end
//! evaluation of a latent trajectory set.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use log::{info, warn};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{filter_informative_dims, LatentTrajectorySet, DEFAULT_KL_THRESHOLD};
use crate::maplearn::{fit_mlp, progressive_polynomial_fit, LassoConfig, LearnedMap, MlpConfig, TrainingData};
use crate::phase::CanonicalMatrix;

pub const REPORT_FORMAT: &str = "symetric-report/1";
pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_LAMBDA: f64 = 0.025;
pub const DEFAULT_KAPPA: usize = 5;
/// Below this, `max |ÂÂᵀ|` is treated as zero.
const DEGENERATE_SCALE: f64 = 1e-12;

/// `1 - SSres / SStot` pooled over all output dimensions, where `SStot`
/// measures each dimension about its own mean.
pub fn r_squared(predicted: &[f64], truth: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || predicted.len() != truth.len() || truth.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let rows = truth.len() / dim;
    if rows < 2 {
        return Err(Error::InvalidDimension("R² needs at least 2 samples".into()));
    }
    let mut mean = vec![0.0; dim];
    for row in truth.chunks_exact(dim) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t_row, p_row) in truth.chunks_exact(dim).zip(predicted.chunks_exact(dim)) {
        for ((t, p), m) in t_row.iter().zip(p_row).zip(&mean) {
            ss_res += (p - t) * (p - t);
            ss_tot += (t - m) * (t - m);
        }
    }
    if ss_tot == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// How the per-trajectory constant `c` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `c = 1 / mean(max |ÂÂᵀ|)`.
    ClosedForm,
    /// The `c` minimizing the squared deviation from the identity.
    Minimizing,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(Normalization::ClosedForm),
            "minimizing" => Ok(Normalization::Minimizing),
            other => Err(Error::Config(format!(
                "unknown normalization '{other}' (expected closed-form or minimizing)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymConfig {
    pub samples: usize,
    pub trajectories_per_sample: usize,
    pub points_per_trajectory: usize,
    /// R² threshold.
    pub alpha: f64,
    /// Sym threshold.
    pub epsilon: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for SymConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            trajectories_per_sample: 5,
            points_per_trajectory: 10,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            normalization: Normalization::ClosedForm,
            seed: 0,
        }
    }
}

impl SymConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.trajectories_per_sample == 0 || self.points_per_trajectory == 0 {
            return Err(Error::InvalidParameter("Sym sampling counts must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Sym of one group of Jacobians sharing a normalization constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSym {
    pub c: f64,
    /// Sum over the group's points of `MSE(c ÂÂᵀ, I)`.
    pub mse_sum: f64,
    pub points: usize,
    /// Every `ÂÂᵀ` vanished; `c = 1` was used.
    pub degenerate: bool,
}

/// `ÂÂᵀ` with `Â = J A Jᵀ`.
pub fn a_hat_gram(jacobian: &DMatrix<f64>, form: &DMatrix<f64>) -> DMatrix<f64> {
    let a_hat = jacobian * form * jacobian.transpose();
    &a_hat * a_hat.transpose()
}

/// Normalizes one trajectory's `ÂÂᵀ` matrices by a shared constant and sums
/// their squared deviation from the identity.
pub fn sym_for_group(grams: &[DMatrix<f64>], normalization: Normalization) -> GroupSym {
    let mut c = match normalization {
        Normalization::ClosedForm => {
            let mean_max = grams.iter().map(|g| g.amax()).sum::<f64>() / grams.len() as f64;
            (mean_max >= DEGENERATE_SCALE).then(|| 1.0 / mean_max)
        }
        Normalization::Minimizing => {
            let trace: f64 = grams.iter().map(|g| g.trace()).sum();
            let norm: f64 = grams.iter().map(|g| g.norm_squared()).sum();
            (norm.sqrt() >= DEGENERATE_SCALE).then(|| trace / norm)
        }
    };
    let degenerate = c.is_none();
    let c = c.get_or_insert(1.0);
    let mse_sum = grams
        .iter()
        .map(|g| {
            let d = g.nrows();
            let dev: f64 = (0..d)
                .flat_map(|r| (0..d).map(move |k| (r, k)))
                .map(|(r, k)| {
                    let id = if r == k { 1.0 } else { 0.0 };
                    (*c * g[(r, k)] - id).powi(2)
                })
                .sum();
            dev / (d * d) as f64
        })
        .sum();
    GroupSym {
        c: *c,
        mse_sum,
        points: grams.len(),
        degenerate,
    }
}

/// Sym over groups of Jacobians, each group normalized separately.
pub fn sym_from_jacobians(
    groups: &[Vec<DMatrix<f64>>],
    form: &DMatrix<f64>,
    normalization: Normalization,
) -> Result<(f64, Vec<GroupSym>)> {
    let mut stats = Vec::with_capacity(groups.len());
    for g in groups {
        if g.is_empty() {
            return Err(Error::InvalidDimension("empty Jacobian group".into()));
        }
        let grams: Vec<DMatrix<f64>> = g.iter().map(|j| a_hat_gram(j, form)).collect();
        stats.push(sym_for_group(&grams, normalization));
    }
    let total: f64 = stats.iter().map(|s| s.mse_sum).sum();
    let points: usize = stats.iter().map(|s| s.points).sum();
    if points == 0 {
        return Err(Error::InvalidDimension("no Jacobians".into()));
    }
    Ok((total / points as f64, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymScore {
    /// Mean over resamples.
    pub sym: f64,
    pub min: f64,
    pub max: f64,
    pub per_sample: Vec<f64>,
    /// `c` of every sampled trajectory, sample-major.
    pub c_values: Vec<f64>,
    /// Every sampled `ÂÂᵀ` vanished.
    pub degenerate: bool,
}

/// The canonical form restricted to the latent columns of `set` that
/// survived filtering.
pub fn latent_form(set: &LatentTrajectorySet) -> Result<DMatrix<f64>> {
    let source = set.source_latent_dim();
    if source % 2 != 0 {
        return Err(Error::InvalidDimension(format!(
            "latent dimension {source} is odd and has no canonical pairing"
        )));
    }
    CanonicalMatrix::new(source / 2)?.restricted(set.source_index())
}

/// Resamples trajectories from `pool` and points along them, evaluates `J`
/// of `map` at each point and scores its symplecticity.
pub fn sym_score(map: &LearnedMap, set: &LatentTrajectorySet, pool: Range<usize>, config: &SymConfig) -> Result<SymScore> {
    config.validate()?;
    if pool.is_empty() || pool.end > set.trajectories() {
        return Err(Error::InvalidParameter(format!(
            "trajectory pool {pool:?} is empty or exceeds the {} trajectories",
            set.trajectories()
        )));
    }
    if map.input_dim() != set.latent_dim() {
        return Err(Error::DimensionMismatch {
            expected: set.latent_dim(),
            found: map.input_dim(),
        });
    }
    let form = latent_form(set)?;
    let mut tasks = Vec::new();
    for s in 0..config.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(s as u64);
        let trajs = sample(&mut rng, pool.len(), config.trajectories_per_sample.min(pool.len()));
        for t in trajs.iter() {
            let points = sample(&mut rng, set.steps(), config.points_per_trajectory.min(set.steps())).into_vec();
            tasks.push((s, pool.start + t, points));
        }
    }
    let stats: Vec<GroupSym> = tasks
        .par_iter()
        .map(|(_, traj, points)| {
            let grams = points
                .iter()
                .map(|&p| Ok(a_hat_gram(&map.jacobian(set.latent_point(*traj, p))?, &form)))
                .collect::<Result<Vec<_>>>()?;
            Ok(sym_for_group(&grams, config.normalization))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_sample = vec![(0.0, 0usize); config.samples];
    for ((s, _, _), g) in tasks.iter().zip(&stats) {
        per_sample[*s].0 += g.mse_sum;
        per_sample[*s].1 += g.points;
    }
    let per_sample: Vec<f64> = per_sample.iter().map(|(sum, n)| sum / *n as f64).collect();
    let degenerate = stats.iter().all(|g| g.degenerate);
    Ok(SymScore {
        sym: per_sample.iter().sum::<f64>() / per_sample.len() as f64,
        min: per_sample.iter().copied().fold(f64::INFINITY, f64::min),
        max: per_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_sample,
        c_values: stats.iter().map(|g| g.c).collect(),
        degenerate,
    })
}

/// 1 iff `r2 > alpha` and `sym < epsilon`.
pub fn symetric(r2: f64, sym: f64, alpha: f64, epsilon: f64) -> u8 {
    u8::from(r2 > alpha && sym < epsilon)
}

/// `||x - x̂||² / ||x||²`.
pub fn normalized_mse(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    let norm: f64 = truth.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    let err: f64 = truth.iter().zip(predicted).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / norm)
}

/// Normalized MSE of every frame of two equal-length sequences of
/// `frame_dim`-wide frames.
pub fn framewise_mse(truth: &[f64], predicted: &[f64], frame_dim: usize) -> Result<Vec<f64>> {
    if frame_dim == 0 || truth.len() != predicted.len() || truth.len() % frame_dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: predicted.len(),
        });
    }
    truth
        .chunks_exact(frame_dim)
        .zip(predicted.chunks_exact(frame_dim))
        .map(|(t, p)| normalized_mse(t, p))
        .collect()
}

/// Mean framewise normalized MSE over the frames in `window`.
pub fn windowed_mse(truth: &[f64], predicted: &[f64], frame_dim: usize, window: Range<usize>) -> Result<f64> {
    let per_frame = framewise_mse(truth, predicted, frame_dim)?;
    if window.is_empty() || window.end > per_frame.len() {
        return Err(Error::InvalidParameter(format!(
            "frame window {window:?} outside a sequence of {} frames",
            per_frame.len()
        )));
    }
    Ok(per_frame[window.clone()].iter().sum::<f64>() / window.len() as f64)
}

/// First frame whose normalized MSE exceeds `lambda`, or the sequence length
/// if none does.
pub fn vpt(truth: &[f64], predicted: &[f64], frame_dim: usize, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let per_frame = framewise_mse(truth, predicted, frame_dim)?;
    Ok(per_frame.iter().position(|e| *e > lambda).unwrap_or(per_frame.len()))
}

/// Mean of the forward and backward valid prediction times.
pub fn vpt_average(forward: usize, backward: usize) -> f64 {
    (forward as f64 + backward as f64) / 2.0
}

/// Scores of predicted rollouts against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutScores {
    pub lambda: f64,
    /// Training horizon `T`: frames `0..=T` are reconstruction, later ones
    /// extrapolation.
    pub horizon: usize,
    pub vpt_forward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vpt_backward: Option<f64>,
    /// Forward/backward average (forward alone without a backward rollout).
    pub vpt: f64,
    pub mse_reconstruction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_extrapolation: Option<f64>,
}

fn check_rollout(set: &LatentTrajectorySet) -> Result<()> {
    if set.latent_dim() != set.truth_dim() {
        return Err(Error::DimensionMismatch {
            expected: set.truth_dim(),
            found: set.latent_dim(),
        });
    }
    Ok(())
}

/// Mean per-trajectory VPT of a rollout set whose latent payload holds the
/// predictions in ground-truth coordinates.
fn mean_vpt(set: &LatentTrajectorySet, lambda: f64) -> Result<f64> {
    let per_traj = (0..set.trajectories())
        .into_par_iter()
        .map(|t| vpt(set.truth_rows(t..t + 1), set.latent_rows(t..t + 1), set.truth_dim(), lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_traj.iter().map(|v| *v as f64).sum::<f64>() / per_traj.len() as f64)
}

fn mean_window(set: &LatentTrajectorySet, window: Range<usize>) -> Result<f64> {
    let per_traj = (0..set.trajectories())
        .into_par_iter()
        .map(|t| windowed_mse(set.truth_rows(t..t + 1), set.latent_rows(t..t + 1), set.truth_dim(), window.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_traj.iter().sum::<f64>() / per_traj.len() as f64)
}

pub fn score_rollouts(
    forward: &LatentTrajectorySet,
    backward: Option<&LatentTrajectorySet>,
    horizon: usize,
    lambda: f64,
) -> Result<RolloutScores> {
    check_rollout(forward)?;
    if horizon == 0 || horizon >= forward.steps() {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} must lie in 1..{}",
            forward.steps()
        )));
    }
    let vpt_forward = mean_vpt(forward, lambda)?;
    let vpt_backward = match backward {
        Some(b) => {
            check_rollout(b)?;
            Some(mean_vpt(b, lambda)?)
        }
        None => None,
    };
    let end = forward.steps().min(2 * horizon + 1);
    Ok(RolloutScores {
        lambda,
        horizon,
        vpt_forward,
        vpt_backward,
        vpt: vpt_backward.map_or(vpt_forward, |b| (vpt_forward + b) / 2.0),
        mse_reconstruction: mean_window(forward, 0..horizon + 1)?,
        mse_extrapolation: if end > horizon + 1 {
            Some(mean_window(forward, horizon + 1..end)?)
        } else {
            None
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pr,
    Mlp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pr => "pr",
            Method::Mlp => "mlp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pr" | "polynomial" => Ok(Method::Pr),
            "mlp" => Ok(Method::Mlp),
            other => Err(Error::Config(format!("unknown method '{other}' (expected pr or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    /// Highest polynomial order tried.
    pub kappa: usize,
    pub kl_threshold: f64,
    /// Share of trajectories (taken from the end) held out for R².
    pub holdout_fraction: f64,
    pub sym: SymConfig,
    pub lasso: LassoConfig,
    pub mlp: MlpConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: Method::Pr,
            kappa: DEFAULT_KAPPA,
            kl_threshold: DEFAULT_KL_THRESHOLD,
            holdout_fraction: 0.2,
            sym: SymConfig::default(),
            lasso: LassoConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub method: Method,
    pub symetric: u8,
    /// R² on the held-out trajectories.
    pub r2: f64,
    pub r2_train: f64,
    pub sym: f64,
    pub sym_min: f64,
    pub sym_max: f64,
    pub sym_samples: Vec<f64>,
    pub c_values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polynomial_order: Option<usize>,
    /// Training R² of each polynomial order tried.
    pub order_r2: Vec<f64>,
    pub trajectories: usize,
    pub train_trajectories: usize,
    pub steps: usize,
    pub truth_dim: usize,
    pub latent_dim: usize,
    pub kept_dims: Vec<usize>,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutScores>,
    pub config: EvalConfig,
}

impl EvaluationReport {
    /// TOML rendering; one key per field, arrays inline.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot render report: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse report: {e}")))
    }
}

/// Filters the latent, fits `F` on the leading trajectories, scores R² on
/// the held-out tail and Sym on the training trajectories.
pub fn evaluate(set: &LatentTrajectorySet, config: &EvalConfig) -> Result<EvaluationReport> {
    config.sym.validate()?;
    if config.kappa == 0 {
        return Err(Error::InvalidParameter("kappa must be at least 1".into()));
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction must lie in (0, 1), got {}",
            config.holdout_fraction
        )));
    }
    if set.latent_dim() == 0 {
        return Err(Error::InvalidDimension("the set carries no latent trajectories; synthesize or attach one first".into()));
    }
    let k = set.trajectories();
    let held_out = ((k as f64 * config.holdout_fraction).round() as usize).max(1);
    let train = k.saturating_sub(held_out);
    let min_train = match config.method {
        Method::Pr => config.lasso.folds,
        Method::Mlp => 1,
    };
    if train < min_train {
        return Err(Error::InvalidParameter(format!(
            "{k} trajectories leave {train} for training after holding out {held_out}; at least {min_train} needed"
        )));
    }

    let (filtered, kept) = filter_informative_dims(set, config.kl_threshold)?;
    let mut diagnostics = Vec::new();
    if kept.len() < set.latent_dim() {
        info!("kept {} of {} latent dimensions: {kept:?}", kept.len(), set.latent_dim());
    }
    let data = TrainingData {
        inputs: filtered.latent_rows(0..train),
        input_dim: filtered.latent_dim(),
        targets: filtered.truth_rows(0..train),
        output_dim: filtered.truth_dim(),
        groups: train,
    };
    let (map, polynomial_order, order_r2) = match config.method {
        Method::Pr => {
            let fit = progressive_polynomial_fit(data, config.kappa, config.sym.alpha, &config.lasso)?;
            let history = fit.history.iter().map(|(_, r2)| *r2).collect();
            (fit.map, Some(fit.order), history)
        }
        Method::Mlp => (fit_mlp(data, &config.mlp)?, None, Vec::new()),
    };
    let r2_train = r_squared(&map.predict_rows(data.inputs)?, data.targets, data.output_dim)?;
    let r2 = r_squared(
        &map.predict_rows(filtered.latent_rows(train..k))?,
        filtered.truth_rows(train..k),
        filtered.truth_dim(),
    )?;
    let sym = sym_score(&map, &filtered, 0..train, &config.sym)?;
    if sym.degenerate {
        diagnostics.push("degenerate map: every sampled ÂÂᵀ vanished; Sym is the unnormalized deviation".into());
    }
    let mut flag = symetric(r2, sym.sym, config.sym.alpha, config.sym.epsilon);
    if filtered.latent_dim() < filtered.truth_dim() {
        warn!(
            "{} informative latent dimensions cannot cover a {}-dimensional phase space",
            filtered.latent_dim(),
            filtered.truth_dim()
        );
        diagnostics.push(format!(
            "filtered latent dimension {} is below the ground-truth dimension {}; SyMetric set to 0",
            filtered.latent_dim(),
            filtered.truth_dim()
        ));
        flag = 0;
    }
    Ok(EvaluationReport {
        format: REPORT_FORMAT.into(),
        method: config.method,
        symetric: flag,
        r2,
        r2_train,
        sym: sym.sym,
        sym_min: sym.min,
        sym_max: sym.max,
        sym_samples: sym.per_sample,
        c_values: sym.c_values,
        polynomial_order,
        order_r2,
        trajectories: k,
        train_trajectories: train,
        steps: set.steps(),
        truth_dim: set.truth_dim(),
        latent_dim: set.latent_dim(),
        kept_dims: kept,
        diagnostics,
        rollout: None,
        config: config.clone(),
    })
}
