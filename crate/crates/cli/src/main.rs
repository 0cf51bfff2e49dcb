//! `symetric`: generate ground-truth trajectories, build synthetic latents,
//! and score latent dynamics from the command line.
//!
//! Exit status is 0 on success, 1 for invalid input or configuration and 2
//! when the numerics fail. Set `SYMETRIC_LOG` (e.g. `info`, `debug`) for
//! progress messages on stderr.

mod run;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use run::{execute, load_run, Outcome, ReportFile, RunConfig};
use symetric_core::ingest::DEFAULT_KL_THRESHOLD;
use symetric_core::maplearn::MlpConfig;
use symetric_core::metrics::{Method, Normalization, DEFAULT_ALPHA, DEFAULT_EPSILON, DEFAULT_KAPPA, DEFAULT_LAMBDA};
use symetric_core::synth::SyntheticTransform;
use symetric_core::systems::{DatasetKind, Variant};

#[derive(Parser, Debug)]
#[command(name = "symetric", version, about = "Score learned latent dynamics for Hamiltonian structure")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a ground-truth dataset into an HTRJ1 container
    Generate {
        #[command(flatten)]
        data: DataArgs,
        /// Output container directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a synthetic latent transform to ground truth
    Synth {
        /// Ground-truth container; simulated from the dataset flags if absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        transform: TransformArgs,
        /// Output container directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the latent-to-truth map and compute R², Sym and SyMetric
    Evaluate {
        /// Container with latent and ground-truth trajectories
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        /// Seed for Sym sampling and MLP training
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report file (TOML); printed to stdout if absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Valid prediction time and windowed MSE of predicted rollouts
    Vpt {
        /// Container whose latent payload holds forward predictions in
        /// ground-truth coordinates
        #[arg(long)]
        input: PathBuf,
        /// Same layout for backward predictions
        #[arg(long)]
        backward: Option<PathBuf>,
        /// VPT threshold
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
        /// Training horizon T; later frames count as extrapolation
        #[arg(long, default_value_t = 60)]
        steps: usize,
        /// Report file (TOML); printed to stdout if absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize saved reports as text and optionally CSV
    Report {
        /// Report files written by `evaluate` or `vpt`
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// CSV output file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a run from a report or run.toml
    Run {
        config: PathBuf,
        /// Write somewhere other than the recorded output path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// mass-spring, pendulum, double-pendulum, two-body, matching-pennies,
    /// rock-paper-scissors, lj-4 or lj-16
    #[arg(long)]
    dataset: Option<DatasetKind>,
    /// fixed or colored
    #[arg(long, default_value = "fixed")]
    variant: Variant,
    /// Number of trajectories
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Recorded steps per trajectory
    #[arg(long, default_value_t = 60)]
    steps: usize,
    /// Step size (dataset default if absent)
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TransformKind {
    Identity,
    UniformScale,
    ActionAngle,
    RandomLinearSymplectic,
    NonSymplecticDistort,
    PureNoise,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, value_enum)]
    transform: TransformKind,
    /// Scale factor for uniform-scale
    #[arg(long, default_value_t = 2.0)]
    factor: f64,
    /// Spring constant for action-angle
    #[arg(long, default_value_t = 2.0)]
    stiffness: f64,
    /// Mass for action-angle
    #[arg(long, default_value_t = 1.0)]
    mass: f64,
    /// Momentum exponent for non-symplectic-distort
    #[arg(long, default_value_t = 3.0)]
    exponent: f64,
    /// Latent dimension for pure-noise (ground-truth dimension if absent)
    #[arg(long)]
    noise_dim: Option<usize>,
    /// Pad the latent to this dimension with constant and noise channels
    #[arg(long)]
    embed: Option<usize>,
    /// Standard deviation of the noise padding
    #[arg(long, default_value_t = 0.05)]
    noise_level: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// pr (progressive polynomial regression) or mlp
    #[arg(long, default_value = "pr")]
    method: Method,
    /// Highest polynomial order
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: usize,
    /// R² threshold
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Sym threshold
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Latent dimensions scoring below this are dropped
    #[arg(long, default_value_t = DEFAULT_KL_THRESHOLD)]
    kl_threshold: f64,
    /// closed-form or minimizing
    #[arg(long, default_value = "closed-form")]
    normalization: Normalization,
    /// MLP optimizer steps
    #[arg(long, default_value_t = MlpConfig::default().steps)]
    mlp_steps: usize,
    /// Train the MLP even with fewer datapoints than required
    #[arg(long)]
    allow_insufficient_data: bool,
}

fn base_config(subcommand: run::Subcommand) -> RunConfig {
    RunConfig {
        subcommand,
        dataset: None,
        variant: Variant::Fixed,
        k: 100,
        steps: 60,
        dt: None,
        seed: 0,
        method: Method::Pr,
        kappa: DEFAULT_KAPPA,
        alpha: DEFAULT_ALPHA,
        epsilon: DEFAULT_EPSILON,
        lambda: DEFAULT_LAMBDA,
        kl_threshold: DEFAULT_KL_THRESHOLD,
        normalization: Normalization::ClosedForm,
        mlp_steps: MlpConfig::default().steps,
        allow_insufficient_data: false,
        horizon: None,
        input: None,
        backward: None,
        out: None,
        transform: None,
    }
}

fn with_data(mut config: RunConfig, data: DataArgs) -> RunConfig {
    config.dataset = data.dataset;
    config.variant = data.variant;
    config.k = data.k;
    config.steps = data.steps;
    config.dt = data.dt;
    config.seed = data.seed;
    config
}

fn transform(args: &TransformArgs, seed: u64) -> SyntheticTransform {
    let inner = match args.transform {
        TransformKind::Identity => SyntheticTransform::Identity,
        TransformKind::UniformScale => SyntheticTransform::UniformScale { factor: args.factor },
        TransformKind::ActionAngle => SyntheticTransform::ActionAngle {
            stiffness: args.stiffness,
            mass: args.mass,
        },
        TransformKind::RandomLinearSymplectic => SyntheticTransform::RandomLinearSymplectic { seed },
        TransformKind::NonSymplecticDistort => SyntheticTransform::NonSymplecticDistort {
            exponent: args.exponent,
        },
        TransformKind::PureNoise => SyntheticTransform::PureNoise {
            // zero means "match the ground truth", resolved below
            dim: args.noise_dim.unwrap_or(0),
            seed,
        },
    };
    match args.embed {
        Some(latent_dim) => SyntheticTransform::HighDimEmbed {
            inner: Box::new(inner),
            latent_dim,
            noise_level: args.noise_level,
            seed: seed.wrapping_add(1),
        },
        None => inner,
    }
}

/// Fills a pure-noise dimension left at zero with the ground-truth dimension.
fn resolve_noise_dim(t: &mut SyntheticTransform, truth_dim: usize) {
    match t {
        SyntheticTransform::PureNoise { dim, .. } if *dim == 0 => *dim = truth_dim,
        SyntheticTransform::HighDimEmbed { inner, .. } => resolve_noise_dim(inner, truth_dim),
        _ => {}
    }
}

fn config_for(command: Command) -> Result<Option<RunConfig>> {
    use run::Subcommand as S;
    Ok(Some(match command {
        Command::Generate { data, out } => {
            let mut c = with_data(base_config(S::Generate), data);
            c.out = Some(out);
            c
        }
        Command::Synth {
            input,
            data,
            transform: targs,
            out,
        } => {
            let seed = data.seed;
            let mut c = with_data(base_config(S::Synth), data);
            let truth_dim = match (&input, c.dataset) {
                (Some(path), _) => symetric_core::ingest::load_container(path)
                    .with_context(|| format!("cannot load {}", path.display()))?
                    .truth_dim(),
                (None, Some(kind)) => kind.state_dim(),
                (None, None) => anyhow::bail!("synth needs --input or --dataset"),
            };
            let mut t = transform(&targs, seed);
            resolve_noise_dim(&mut t, truth_dim);
            c.transform = Some(t);
            c.input = input;
            c.out = Some(out);
            c
        }
        Command::Evaluate { input, eval, seed, out } => {
            let mut c = base_config(S::Evaluate);
            c.method = eval.method;
            c.kappa = eval.kappa;
            c.alpha = eval.alpha;
            c.epsilon = eval.epsilon;
            c.kl_threshold = eval.kl_threshold;
            c.normalization = eval.normalization;
            c.mlp_steps = eval.mlp_steps;
            c.allow_insufficient_data = eval.allow_insufficient_data;
            c.seed = seed;
            c.input = Some(input);
            c.out = out;
            c
        }
        Command::Vpt {
            input,
            backward,
            lambda,
            steps,
            out,
        } => {
            let mut c = base_config(S::Vpt);
            c.input = Some(input);
            c.backward = backward;
            c.lambda = lambda;
            c.steps = steps;
            c.horizon = Some(steps);
            c.out = out;
            c
        }
        Command::Report { reports, out } => {
            let loaded = reports
                .into_iter()
                .map(|p| ReportFile::load(&p).map(|r| (p, r)))
                .collect::<Result<Vec<_>>>()?;
            for (path, report) in &loaded {
                println!("{}", summary::text(path, report));
            }
            if let Some(out) = out {
                let file = std::fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
                summary::write_csv(&loaded, file)?;
            }
            return Ok(None);
        }
        Command::Run { config, out } => {
            let mut c = load_run(&config)?;
            if out.is_some() {
                c.out = out;
            }
            c
        }
    }))
}

fn run_cli(cli: Cli) -> Result<()> {
    let Some(config) = config_for(cli.command)? else {
        return Ok(());
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("cannot start the worker pool")?;
    match pool.install(|| execute(&config))? {
        Outcome::Container(path, set) => println!(
            "wrote {}: {} trajectories x {} states, latent dim {}, truth dim {}",
            path.display(),
            set.trajectories(),
            set.steps(),
            set.latent_dim(),
            set.truth_dim()
        ),
        Outcome::Report(report, text) => match &config.out {
            Some(out) => println!("{}", summary::text(out, &report)),
            None => print!("{text}"),
        },
    }
    Ok(())
}

/// 2 for numeric failures reported by the library, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err
        .chain()
        .filter_map(|e| e.downcast_ref::<symetric_core::Error>())
        .any(|e| e.is_numeric());
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SYMETRIC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
