use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::{execute, write_artifacts, EXIT_OK};
use crate::error::{Error, Result};

/// The configuration field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    Eps0,
    BetaMargin,
    ProfileParam,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(SweepAxis::N),
            "eps0" => Ok(SweepAxis::Eps0),
            "beta-margin" => Ok(SweepAxis::BetaMargin),
            "profile-param" => Ok(SweepAxis::ProfileParam),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis `{other}` (expected N, eps0, beta-margin or profile-param)"
            ))),
        }
    }
}

impl SweepAxis {
    fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::N => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::InvalidArgument(format!("N must be a positive integer, got {value}")));
                }
                cfg.grid.n = value as usize;
            }
            SweepAxis::Eps0 => cfg.eps0 = Some(value),
            SweepAxis::BetaMargin => cfg.margins.condition3 = value,
            SweepAxis::ProfileParam => match cfg.profile.params.first_mut() {
                Some(p) => *p = value,
                None => cfg.profile.params.push(value),
            },
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub exit_code: i32,
    pub ts_estimate: Option<f64>,
    pub beta_eff: Option<f64>,
    pub nu_fit: Option<f64>,
    pub drift_residual: Option<f64>,
    pub worst_bootstrap: Option<f64>,
    pub worst_eta_bound: Option<f64>,
    pub worst_outer_bound: Option<f64>,
    pub worst_rate: Option<f64>,
    pub error: Option<String>,
}

fn sweep_row(base: &RunConfig, axis: SweepAxis, value: f64, dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        value,
        status: "config-error".into(),
        exit_code: super::EXIT_CONFIG,
        ts_estimate: None,
        beta_eff: None,
        nu_fit: None,
        drift_residual: None,
        worst_bootstrap: None,
        worst_eta_bound: None,
        worst_outer_bound: None,
        worst_rate: None,
        error: None,
    };
    let cfg = match axis.apply(base, value) {
        Ok(c) => c,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let output = execute(&cfg);
    if let Err(e) = write_artifacts(dir, &output) {
        row.error = Some(e.to_string());
    }
    let r = &output.report;
    row.status = r.blowup.outcome.clone();
    row.exit_code = output.exit_code;
    if row.error.is_none() {
        row.error = r.blowup.error.clone();
    }
    if let Some(b) = &r.blowup.run {
        row.ts_estimate = b.ts_estimate;
        row.beta_eff = b.beta_eff;
        row.drift_residual = Some(b.max_drift_residual);
    }
    row.nu_fit = r.cusp_fit.as_ref().and_then(|c| c.fit.as_ref()).map(|f| f.nu_fit);
    if let Some(m) = &r.monitors {
        row.worst_bootstrap = m.bootstrap.map(|w| w.margin);
        row.worst_eta_bound = m.eta_bound.map(|w| w.margin);
        row.worst_outer_bound = m.outer_bound.map(|w| w.margin);
        row.worst_rate = m.rate.map(|w| w.margin);
    }
    row
}

/// Runs one independent job per value, each in `out/<axis>_<index>`, and
/// writes `out/summary.csv` in the order of `values`. A failing row is
/// recorded and the sweep continues.
pub fn cmd_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<(Vec<SweepRow>, i32)> {
    fs::create_dir_all(out)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sweep_row(base, axis, v, &out.join(format!("row_{i:03}"))))
        .collect();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out.join("summary.csv"))?;
    w.write_record([
        "value",
        "status",
        "exit_code",
        "ts_estimate",
        "beta_eff",
        "nu_fit",
        "drift_residual",
        "worst_bootstrap",
        "worst_eta_bound",
        "worst_outer_bound",
        "worst_rate",
        "error",
    ])?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok((rows, EXIT_OK))
}
