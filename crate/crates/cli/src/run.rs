//! Run configurations and their execution.
//!
//! Every subcommand that produces data or a report first builds a
//! [`RunConfig`], then hands it to [`execute`]. The configuration is written
//! next to the output so the run can be repeated with `symetric run`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use symetric_core::datasets::{default_dt, generate, DatasetSpec};
use symetric_core::ingest::{load_container, save_container, LatentTrajectorySet};
use symetric_core::maplearn::MlpConfig;
use symetric_core::metrics::{
    evaluate, score_rollouts, EvalConfig, EvaluationReport, Method, Normalization, RolloutScores, SymConfig,
    REPORT_FORMAT,
};
use symetric_core::synth::{apply_transform, SyntheticTransform};
use symetric_core::systems::{DatasetKind, Variant};

/// Name of the run record written into generated containers.
pub const RUN_FILE: &str = "run.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Generate,
    Synth,
    Evaluate,
    Vpt,
}

/// Everything that determines the output of a run. Thread count is left
/// out on purpose: results do not depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetKind>,
    pub variant: Variant,
    pub k: usize,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub kappa: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub kl_threshold: f64,
    pub normalization: Normalization,
    pub mlp_steps: usize,
    pub allow_insufficient_data: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<SyntheticTransform>,
}

/// On-disk report: the run that produced it plus its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutScores>,
}

impl ReportFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read report {}", path.display()))?;
        let report: ReportFile =
            toml::from_str(&text).with_context(|| format!("{} is not a symetric report", path.display()))?;
        if report.format != REPORT_FORMAT {
            bail!(
                "{}: unsupported report format '{}' (expected {REPORT_FORMAT})",
                path.display(),
                report.format
            );
        }
        Ok(report)
    }
}

/// Reads a run configuration from a standalone file or from the `[run]`
/// table of a report.
pub fn load_run(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("{} is not TOML", path.display()))?;
    let value = match table.remove("run") {
        Some(run) => run,
        None => toml::Value::Table(table),
    };
    value
        .try_into()
        .with_context(|| format!("{} does not hold a valid run configuration", path.display()))
}

impl RunConfig {
    fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            method: self.method,
            kappa: self.kappa,
            kl_threshold: self.kl_threshold,
            sym: SymConfig {
                alpha: self.alpha,
                epsilon: self.epsilon,
                normalization: self.normalization,
                seed: self.seed,
                ..SymConfig::default()
            },
            mlp: MlpConfig {
                steps: self.mlp_steps,
                allow_insufficient_data: self.allow_insufficient_data,
                seed: self.seed,
                ..MlpConfig::default()
            },
            ..EvalConfig::default()
        }
    }

    fn required_input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .with_context(|| format!("{:?} needs an input container (--input)", self.subcommand))
    }

    fn required_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .with_context(|| format!("{:?} needs an output directory (--out)", self.subcommand))
    }

    fn dataset_spec(&self) -> Result<DatasetSpec> {
        let kind = self.dataset.context("no dataset given (--dataset)")?;
        Ok(DatasetSpec {
            kind,
            variant: self.variant,
            trajectories: self.k,
            steps: self.steps,
            dt: self.dt.unwrap_or_else(|| default_dt(kind)),
            seed: self.seed,
        })
    }

    /// Ground truth from `--input` if given, otherwise freshly simulated.
    fn truth(&self) -> Result<LatentTrajectorySet> {
        match &self.input {
            Some(path) => load_container(path).with_context(|| format!("cannot load {}", path.display())),
            None => Ok(generate(&self.dataset_spec()?)?),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// What a run produced, for the caller to print.
pub enum Outcome {
    Container(PathBuf, LatentTrajectorySet),
    Report(ReportFile, String),
}

fn write_container(config: &RunConfig, set: &LatentTrajectorySet) -> Result<Outcome> {
    let out = config.required_out()?;
    save_container(set, out).with_context(|| format!("cannot write container {}", out.display()))?;
    fs::write(out.join(RUN_FILE), config.to_toml()?)
        .with_context(|| format!("cannot write {}", out.join(RUN_FILE).display()))?;
    info!("wrote {}", out.display());
    Ok(Outcome::Container(out.to_path_buf(), set.clone()))
}

fn write_report(config: &RunConfig, report: ReportFile) -> Result<Outcome> {
    let text = toml::to_string(&report)?;
    if let Some(out) = &config.out {
        fs::write(out, &text).with_context(|| format!("cannot write report {}", out.display()))?;
        info!("wrote {}", out.display());
    }
    Ok(Outcome::Report(report, text))
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    match config.subcommand {
        Subcommand::Generate => {
            let set = generate(&config.dataset_spec()?)?;
            write_container(config, &set)
        }
        Subcommand::Synth => {
            let transform = config.transform.as_ref().context("no transform given (--transform)")?;
            let latent = apply_transform(transform, &config.truth()?)?;
            write_container(config, &latent)
        }
        Subcommand::Evaluate => {
            let input = config.required_input()?;
            let set = load_container(input).with_context(|| format!("cannot load {}", input.display()))?;
            let evaluation = evaluate(&set, &config.eval_config())?;
            write_report(
                config,
                ReportFile {
                    format: REPORT_FORMAT.into(),
                    run: config.clone(),
                    evaluation: Some(evaluation),
                    rollout: None,
                },
            )
        }
        Subcommand::Vpt => {
            let input = config.required_input()?;
            let forward = load_container(input).with_context(|| format!("cannot load {}", input.display()))?;
            let backward = match &config.backward {
                Some(path) => Some(load_container(path).with_context(|| format!("cannot load {}", path.display()))?),
                None => None,
            };
            let horizon = config.horizon.unwrap_or(config.steps).min(forward.steps() - 1);
            let rollout = score_rollouts(&forward, backward.as_ref(), horizon, config.lambda)?;
            write_report(
                config,
                ReportFile {
                    format: REPORT_FORMAT.into(),
                    run: config.clone(),
                    evaluation: None,
                    rollout: Some(rollout),
                },
            )
        }
    }
}
