//! CSV and plain-text renderings of saved reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use crate::run::ReportFile;

/// One CSV row per report. Columns that do not apply are left empty.
#[derive(Debug, Serialize)]
struct Row {
    report: String,
    subcommand: String,
    method: String,
    seed: u64,
    symetric: Option<u8>,
    r2: Option<f64>,
    r2_train: Option<f64>,
    sym: Option<f64>,
    sym_min: Option<f64>,
    sym_max: Option<f64>,
    polynomial_order: Option<usize>,
    trajectories: Option<usize>,
    truth_dim: Option<usize>,
    latent_dim: Option<usize>,
    kept_dims: String,
    vpt: Option<f64>,
    vpt_forward: Option<f64>,
    vpt_backward: Option<f64>,
    mse_reconstruction: Option<f64>,
    mse_extrapolation: Option<f64>,
}

fn row(path: &Path, report: &ReportFile) -> Row {
    let e = report.evaluation.as_ref();
    let r = report.rollout.as_ref();
    Row {
        report: path.display().to_string(),
        subcommand: format!("{:?}", report.run.subcommand).to_lowercase(),
        method: report.run.method.to_string(),
        seed: report.run.seed,
        symetric: e.map(|e| e.symetric),
        r2: e.map(|e| e.r2),
        r2_train: e.map(|e| e.r2_train),
        sym: e.map(|e| e.sym),
        sym_min: e.map(|e| e.sym_min),
        sym_max: e.map(|e| e.sym_max),
        polynomial_order: e.and_then(|e| e.polynomial_order),
        trajectories: e.map(|e| e.trajectories),
        truth_dim: e.map(|e| e.truth_dim),
        latent_dim: e.map(|e| e.latent_dim),
        kept_dims: e
            .map(|e| e.kept_dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default(),
        vpt: r.map(|r| r.vpt),
        vpt_forward: r.map(|r| r.vpt_forward),
        vpt_backward: r.and_then(|r| r.vpt_backward),
        mse_reconstruction: r.map(|r| r.mse_reconstruction),
        mse_extrapolation: r.and_then(|r| r.mse_extrapolation),
    }
}

pub fn write_csv<W: Write>(reports: &[(PathBuf, ReportFile)], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for (path, report) in reports {
        writer.serialize(row(path, report))?;
    }
    writer.flush()?;
    Ok(())
}

/// Short human-readable description of one report.
pub fn text(path: &Path, report: &ReportFile) -> String {
    let mut lines = vec![format!("{}:", path.display())];
    if let Some(e) = &report.evaluation {
        let order = e.polynomial_order.map(|o| format!(", order {o}")).unwrap_or_default();
        lines.push(format!(
            "  SyMetric {}  R² {:.4} (train {:.4})  Sym {:.4e} [{:.3e}, {:.3e}]  method {}{order}",
            e.symetric, e.r2, e.r2_train, e.sym, e.sym_min, e.sym_max, e.method
        ));
        lines.push(format!(
            "  {} trajectories ({} for training), latent {} -> kept {}, truth {}",
            e.trajectories,
            e.train_trajectories,
            e.latent_dim,
            e.kept_dims.len(),
            e.truth_dim
        ));
        for d in &e.diagnostics {
            lines.push(format!("  note: {d}"));
        }
    }
    if let Some(r) = &report.rollout {
        let backward = r.vpt_backward.map(|b| format!(", backward {b:.2}")).unwrap_or_default();
        let extrapolation = r
            .mse_extrapolation
            .map(|m| format!(", extrapolation {m:.4e}"))
            .unwrap_or_default();
        lines.push(format!(
            "  VPT {:.2} (forward {:.2}{backward}) at λ {}",
            r.vpt, r.vpt_forward, r.lambda
        ));
        lines.push(format!("  MSE reconstruction {:.4e}{extrapolation}", r.mse_reconstruction));
    }
    lines.join("\n")
}
