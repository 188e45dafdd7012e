//! Run orchestration and artifact persistence behind the `cuspform` binary.

pub mod config;
pub mod report;
mod sweep;

pub use config::{parse_config, Mode, RunConfig};
pub use report::{Certificate, RunReport};
pub use sweep::{cmd_sweep, SweepAxis, SweepRow};

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::analysis::{
    fit_cusp_exponent, needle_diagnostic, needle_threshold, reconstruct_theta, verify_cusp_bound,
};
use crate::certify::{
    cusp_bound_constant, select_constants_with, Selection, BETA_CEILING, BETA_START, BETA_STEP,
};
use crate::error::{Error, Result};
use crate::flowfield::{cumulative_phi, make_grid, FlowField, FlowState, GridSpec};
use crate::integrator::{run, RunSetup, RunStatus, StepControl, Trajectory};
use crate::profile::{build_forcing, build_profile, fit_k_bounds, Forcing, InitialProfile};
use report::{BlowupSection, ConstantsSection, CuspSection, MonitorSummary, Recipe, Timing};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NO_BLOWUP: i32 = 4;

/// Samples used to re-check the K-bounds on the chosen `eps0`.
const K_RECHECK_SAMPLES: usize = 10_000;

/// Fits the K-bounds, selects the constants and checks every condition.
/// Returns an error only when no certificate can be formed at all.
pub fn certify(cfg: &RunConfig) -> Result<Certificate> {
    let profile = build_profile(cfg.family()?)?;
    profile.require_strict_maximum()?;
    let m = &cfg.margins;
    let fit_forcing = build_forcing(&profile, m.k_fit_eps0)?;
    let k_bounds = fit_k_bounds(&fit_forcing)?.widened(m.k_bound);
    let o = cfg.overrides;
    let sel = Selection { condition3_margin: m.condition3, beta: o.beta, kappa: o.kappa, eps0: o.eps0 };
    let constants = select_constants_with(k_bounds.k0, k_bounds.k1, &sel)?;
    let forcing = build_forcing(&profile, constants.eps0)?;
    let k_bounds_slack = k_bounds.worst_slack(&forcing, K_RECHECK_SAMPLES);
    let rounding = 1e-12 * constants.eps0 * constants.eps0 * k_bounds.k1;
    let mut failures: Vec<String> = constants.margins.failures().iter().map(|s| s.to_string()).collect();
    if k_bounds_slack < -rounding {
        failures.push(format!("K-bounds fail on eps0 = {} (slack {k_bounds_slack:e})", constants.eps0));
    }
    Ok(Certificate {
        profile: profile.family(),
        k_bounds,
        k_bounds_slack,
        constants,
        conditions_pass: failures.is_empty(),
        failures,
        recipe: Recipe {
            beta_start: BETA_START,
            beta_step: BETA_STEP,
            beta_ceiling: BETA_CEILING,
            condition3_margin: m.condition3,
            k_bound_margin: m.k_bound,
            k_fit_eps0: m.k_fit_eps0,
            beta_override: o.beta,
            kappa_override: o.kappa,
            eps0_override: o.eps0,
        },
        cusp_bound: cusp_bound_constant(&constants),
    })
}

/// A configuration resolved into the objects a run needs.
pub struct Prepared {
    pub profile: InitialProfile,
    pub forcing: Forcing,
    pub certificate: Option<Certificate>,
    pub control: StepControl,
    pub setup: RunSetup,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let profile = build_profile(cfg.family()?)?;
    let (eps0, certificate, constants) = match cfg.mode {
        Mode::Certified => {
            let cert = certify(cfg)?;
            if !cert.conditions_pass {
                return Err(Error::ConditionsFail(cert.failures.join("; ")));
            }
            (cert.constants.eps0, Some(cert.clone()), Some(cert.constants))
        }
        Mode::Uncertified => {
            let eps0 = cfg.uncertified_eps0();
            // diagnostic constants; absent when the profile admits none
            let constants = certify(cfg).ok().map(|c| c.constants.with_eps0(eps0));
            (eps0, None, constants)
        }
    };
    let forcing = build_forcing(&profile, eps0)?;
    let spec = GridSpec {
        a: forcing.support_end(),
        n: cfg.grid.n,
        grading: cfg.grid.grading,
        x_min_factor: cfg.grid.x_min_factor,
    };
    let grid = make_grid(&spec)?;
    let control = cfg.step_control(eps0);
    control.validate(eps0)?;
    let mut setup = RunSetup::new(FlowField::new(grid, forcing));
    setup.constants = constants;
    setup.certified = cfg.mode == Mode::Certified;
    setup.monitor_tolerance = cfg.margins.monitor_tolerance;
    setup.snapshot_every = cfg.outputs.snapshot_every;
    Ok(Prepared { profile, forcing, certificate, control, setup })
}

/// A completed (or refused) run held in memory.
pub struct RunOutput {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    pub prepared: Option<Prepared>,
    pub exit_code: i32,
}

fn status_exit(status: RunStatus) -> (i32, bool) {
    match status {
        RunStatus::BlowupDetected => (EXIT_OK, false),
        RunStatus::NoBlowupWithinHorizon => (EXIT_NO_BLOWUP, false),
        RunStatus::InvariantViolation
        | RunStatus::MonitorViolation
        | RunStatus::Stalled
        | RunStatus::StepLimit => (EXIT_VIOLATION, true),
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Runs a configuration end to end without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> RunOutput {
    let start = Instant::now();
    let prepared = match prepare(cfg) {
        Ok(p) => p,
        Err(e) => {
            let report = RunReport::failed(Some(cfg.clone()), "precondition-failed", EXIT_CONFIG, e.to_string());
            return RunOutput { report, trajectory: None, prepared: None, exit_code: EXIT_CONFIG };
        }
    };
    let tr = match run(&prepared.setup, &prepared.control) {
        Ok(tr) => tr,
        Err(e) => {
            let report = RunReport::failed(Some(cfg.clone()), "run-error", EXIT_VIOLATION, e.to_string());
            return RunOutput { report, trajectory: None, prepared: Some(prepared), exit_code: EXIT_VIOLATION };
        }
    };
    let field = &prepared.setup.field;
    let grid = field.grid();
    let forcing = &prepared.forcing;
    let (exit_code, truncated) = status_exit(tr.blowup.status);

    let theta = reconstruct_theta(grid, &tr.final_state, forcing);
    let policy = cfg.analysis.policy();
    let (fit, fit_error) = match fit_cusp_exponent(&theta, policy) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bound = prepared.certificate.as_ref().map(|c| {
        let mut b = c.cusp_bound;
        b.y_range_hint = Some(tr.final_state.flow_at(grid, forcing, 1.0));
        b
    });
    let bound_check = bound.map(|b| verify_cusp_bound(&theta, b.c, b.nu, b.y_range_hint.unwrap_or(0.0)));
    let threshold = cfg.analysis.needle_threshold.unwrap_or(needle_threshold(prepared.control.eps_stop));
    let needle = needle_diagnostic(grid, forcing, tr.final_window(), tr.blowup.ts_estimate, threshold);
    let monitors = prepared.setup.constants.map(|_| {
        MonitorSummary::from_reports(&tr.monitors, prepared.setup.certified, prepared.setup.monitor_tolerance)
    });

    let report = RunReport {
        config: Some(cfg.clone()),
        constants: Some(ConstantsSection {
            certified: prepared.setup.certified,
            eps0: forcing.eps0(),
            k_bounds: prepared.certificate.as_ref().map(|c| c.k_bounds),
            constants: prepared.setup.constants,
            cusp_bound: bound,
        }),
        blowup: BlowupSection {
            outcome: kebab(&tr.blowup.status),
            exit_code,
            truncated,
            error: tr.blowup.fit_error.clone(),
            run: Some(tr.blowup.clone()),
        },
        cusp_fit: Some(CuspSection {
            policy,
            fit,
            error: fit_error,
            conjectured_nu: 0.5,
            bound,
            bound_check,
        }),
        needle: Some(needle),
        monitors,
        violations: tr.violations.clone(),
        timing: Timing {
            accepted_steps: tr.blowup.accepted_steps,
            rejected_steps: tr.blowup.rejected_steps,
            wall_clock_seconds: cfg.outputs.wall_clock.then(|| start.elapsed().as_secs_f64()),
        },
    };
    RunOutput { report, trajectory: Some(tr), prepared: Some(prepared), exit_code }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_snapshots(path: &Path, nodes: &[f64], snapshots: &[FlowState]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x", "phi", "Phi"])?;
    for s in snapshots {
        for ((x, p), f) in nodes.iter().zip(&s.phi).zip(&s.flow) {
            w.serialize((s.t, x, p, f))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_theta(path: &Path, prepared: &Prepared, snapshots: &[FlowState]) -> Result<()> {
    let grid = prepared.setup.field.grid();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "y", "theta"])?;
    for s in snapshots {
        let p = reconstruct_theta(grid, s, &prepared.forcing);
        for (y, th) in p.y.iter().zip(&p.theta) {
            w.serialize((s.t, y, th))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_monitors(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t", "eps", "l_t", "bootstrap_margin", "eta_bound_margin", "outer_bound_margin", "rate_margin",
        "rate_margin_analytic",
    ])?;
    for m in &tr.monitors {
        w.serialize((
            m.t,
            m.eps,
            m.l_t,
            m.bootstrap_margin,
            m.eta_bound_margin,
            m.outer_bound_margin,
            m.rate_margin,
            m.rate_margin_analytic,
        ))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every artifact of `output` into `out`.
pub fn write_artifacts(out: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(out)?;
    if let (Some(tr), Some(p)) = (&output.trajectory, &output.prepared) {
        write_snapshots(&out.join("snapshots.csv"), p.setup.field.grid().nodes(), &tr.snapshots)?;
        write_theta(&out.join("theta.csv"), p, &tr.snapshots)?;
        if p.setup.constants.is_some() {
            write_monitors(&out.join("monitors.csv"), tr)?;
        }
        if let Some(cert) = &p.certificate {
            write_json(&out.join("certificate.json"), cert)?;
        }
    }
    write_json(&out.join("report.json"), &output.report)
}

/// `run`: executes and persists; returns the exit code. A configuration
/// that failed to parse still leaves a report behind.
pub fn cmd_run(cfg: Result<RunConfig>, out: &Path) -> Result<i32> {
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            fs::create_dir_all(out)?;
            write_json(&out.join("report.json"), &RunReport::failed(None, "config-error", EXIT_CONFIG, e.to_string()))?;
            return Ok(EXIT_CONFIG);
        }
    };
    let output = execute(&cfg);
    write_artifacts(out, &output)?;
    info!("run finished: {} (exit {})", output.report.blowup.outcome, output.exit_code);
    Ok(output.exit_code)
}

/// `certify`: writes `certificate.json`; exit 0 iff every margin is positive.
pub fn cmd_certify(cfg: &RunConfig, out: &Path) -> Result<i32> {
    fs::create_dir_all(out)?;
    if cfg.mode != Mode::Certified {
        log::error!("certify needs mode = \"certified\"");
        return Ok(EXIT_CONFIG);
    }
    match certify(cfg) {
        Ok(cert) => {
            write_json(&out.join("certificate.json"), &cert)?;
            if cert.conditions_pass {
                Ok(EXIT_OK)
            } else {
                log::error!("conditions fail: {}", cert.failures.join("; "));
                Ok(EXIT_CONFIG)
            }
        }
        Err(e) => {
            log::error!("{e}");
            write_json(&out.join("certificate.json"), &serde_json::json!({ "error": e.to_string() }))?;
            Ok(EXIT_CONFIG)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub snapshots: usize,
    pub final_t: f64,
    /// Largest `|Phi_stored - Phi_recomputed|` relative to `Phi(a)`.
    pub roundtrip_max_rel_error: f64,
    pub theta_max_preserved: bool,
    pub cusp_fit: Option<crate::analysis::CuspFit>,
    pub cusp_fit_error: Option<String>,
}

/// One snapshot as read back from `snapshots.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub flow: Vec<f64>,
}

/// Snapshots in file order; consecutive rows with equal `t` form one.
pub fn read_snapshots(path: &Path) -> Result<Vec<StoredSnapshot>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut snaps: Vec<StoredSnapshot> = Vec::new();
    for rec in r.deserialize() {
        let (t, x, phi, flow): (f64, f64, f64, f64) = rec?;
        // a node at 0 always opens a new snapshot
        match snaps.last_mut() {
            Some(s) if s.t.to_bits() == t.to_bits() && x != 0.0 => {
                s.x.push(x);
                s.phi.push(phi);
                s.flow.push(flow);
            }
            _ => snaps.push(StoredSnapshot { t, x: vec![x], phi: vec![phi], flow: vec![flow] }),
        }
    }
    Ok(snaps)
}

/// `analyze`: re-reads `snapshots.csv`, checks that `Phi` is reproduced from
/// `phi`, and refits the cusp on the last snapshot.
pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let snaps = read_snapshots(&out.join("snapshots.csv"))?;
    let prepared = prepare(cfg)?;
    let forcing = &prepared.forcing;
    let mut worst = 0.0f64;
    let mut max_ok = true;
    for StoredSnapshot { t, x, phi, flow } in &snaps {
        let again = cumulative_phi(x, phi);
        let scale = flow.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
        for (a, b) in again.iter().zip(flow) {
            worst = worst.max((a - b).abs() / scale);
        }
        let grid = crate::flowfield::LagrangianGrid::from_nodes(x.clone())?;
        let state = FlowState::new(&grid, *t, phi.clone())?;
        let theta = reconstruct_theta(&grid, &state, forcing);
        max_ok &= theta.theta.first() == Some(&forcing.profile().peak());
    }
    let last = snaps.last().ok_or_else(|| Error::InvalidState("no snapshots".into()))?;
    let grid = crate::flowfield::LagrangianGrid::from_nodes(last.x.clone())?;
    let state = FlowState::new(&grid, last.t, last.phi.clone())?;
    let theta = reconstruct_theta(&grid, &state, forcing);
    let (fit, err) = match fit_cusp_exponent(&theta, cfg.analysis.policy()) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rep = AnalyzeReport {
        snapshots: snaps.len(),
        final_t: last.t,
        roundtrip_max_rel_error: worst,
        theta_max_preserved: max_ok,
        cusp_fit: fit,
        cusp_fit_error: err,
    };
    write_json(&out.join("analysis.json"), &rep)?;
    Ok(if worst <= 4.0 * f64::EPSILON && max_ok { EXIT_OK } else { EXIT_VIOLATION })
}
