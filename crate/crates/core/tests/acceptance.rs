//! Acceptance gate: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Runs without the libtest harness so the lines always print.

use std::process::ExitCode;
use std::time::Instant;

use cuspform::analysis::{fit_cusp_exponent, reconstruct_theta, verify_cusp_bound, WindowPolicy};
use cuspform::cli::{self, cmd_sweep, parse_config, SweepAxis};
use cuspform::integrator::extrapolate_ts;
use cuspform::{
    build_forcing, build_profile, eulerian_velocity_gradient, make_grid, velocity_gradient, FlowState,
    Forcing, GridSpec, ProfileFamily,
};

const REF1: &str = "mode = \"uncertified\"\n[profile]\nfamily = \"poly-bump\"\nparams = [3]\n";
const REF1_CERTIFIED: &str = "mode = \"certified\"\n[profile]\nfamily = \"poly-bump\"\nparams = [3]\n[grid]\nn = 8192\n";

type Outcome = Result<String, String>;

fn ref1(eps0: f64) -> Forcing {
    let p = build_profile(ProfileFamily::PolyBump { radius: 1.0, power: 3.0 }).unwrap();
    build_forcing(&p, eps0).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uncertified_ref1() -> cli::RunOutput {
    let out = cli::execute(&parse_config(REF1).unwrap());
    assert_eq!(out.exit_code, 0, "{:?}", out.report.blowup);
    out
}

fn criterion_1(run: &cli::RunOutput) -> Outcome {
    let b = run.report.blowup.run.as_ref().ok_or("no blowup report")?;
    check(b.max_drift_residual <= 1e-6, format!("max |Phi(a,t) - (1 - t)| = {:.3e}", b.max_drift_residual))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for eps0 in [1.0, 0.1, 1e-3, 7.3097e-8] {
        let f = ref1(eps0);
        let grid = make_grid(&GridSpec::new(f.support_end(), 4096)).unwrap();
        let v = velocity_gradient(&grid, &FlowState::initial(&grid, &f), &f).unwrap();
        worst = worst.max((v.values[0] + 3.2).abs());
    }
    check(worst <= 1e-8, format!("max |I(0,0) + 3.2| = {worst:.3e} over four eps0"))
}

fn criterion_3(run: &cli::RunOutput) -> Outcome {
    let tr = run.trajectory.as_ref().ok_or("no trajectory")?;
    let p = run.prepared.as_ref().ok_or("no setup")?;
    let grid = p.setup.field.grid();
    if !tr.violations.is_empty() {
        return Err(format!("{} violations, first {:?}", tr.violations.len(), tr.violations[0]));
    }
    let eps = tr.history.eps();
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err("eps not strictly decreasing".into());
    }
    // independent re-check of every stored state
    let mut states: Vec<&FlowState> = tr.snapshots.iter().chain(&tr.decay_samples).collect();
    states.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut prev: Option<&FlowState> = None;
    for s in &states {
        let th = reconstruct_theta(grid, s, &p.forcing);
        if th.eta.iter().any(|&e| e < 1.0 - 1e-10) {
            return Err(format!("eta < 1 at t = {}", s.t));
        }
        if s.phi.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
            return Err(format!("phi decreasing in x at t = {}", s.t));
        }
        if th.theta[0] != p.forcing.profile().peak() {
            return Err(format!("theta(0) = {} at t = {}", th.theta[0], s.t));
        }
        if let Some(q) = prev {
            if q.t < s.t && s.phi.iter().zip(&q.phi).any(|(a, b)| a > b) {
                return Err(format!("phi increasing in t at t = {}", s.t));
            }
        }
        prev = Some(s);
    }
    Ok(format!("{} accepted steps, {} stored states re-checked, 0 violations", eps.len() - 1, states.len()))
}

fn lagrangian_vs_eulerian(grid: &cuspform::LagrangianGrid, state: &FlowState, f: &Forcing) -> f64 {
    let lag = velocity_gradient(grid, state, f).unwrap().values;
    let th = reconstruct_theta(grid, state, f);
    let shifted: Vec<f64> = th.drop.iter().map(|d| -d).collect();
    let hi = grid.first_at_or_above(0.5);
    let (l0, l1) = (2f64.ln(), (hi as f64).ln());
    let mut worst = 0.0f64;
    for k in 0..20 {
        let i = (l0 + (l1 - l0) * k as f64 / 19.0).exp().round() as usize;
        let eul = eulerian_velocity_gradient(&shifted, &th.y, state.flow[i]).unwrap();
        worst = worst.max((eul - lag[i]).abs() / lag[i].abs());
    }
    worst
}

fn criterion_4(run: &cli::RunOutput) -> Outcome {
    let tr = run.trajectory.as_ref().ok_or("no trajectory")?;
    let p = run.prepared.as_ref().ok_or("no setup")?;
    let grid = p.setup.field.grid();
    let eps0 = p.forcing.eps0();
    let at0 = lagrangian_vs_eulerian(grid, &tr.snapshots[0], &p.forcing);
    let late = tr.snapshots.iter().find(|s| s.eps() <= 1e-2 * eps0).ok_or("no snapshot at eps/eps0 = 1e-2")?;
    let at2 = lagrangian_vs_eulerian(grid, late, &p.forcing);
    check(
        at0 <= 1e-4 && at2 <= 1e-4,
        format!("max rel. diff {at0:.2e} at t = 0, {at2:.2e} at eps/eps0 = {:.2e}", late.eps() / eps0),
    )
}

fn criterion_5(run: &cli::RunOutput) -> Outcome {
    let b = run.report.blowup.run.as_ref().ok_or("no blowup report")?;
    let eps0 = run.prepared.as_ref().unwrap().forcing.eps0();
    let ts = b.ts_estimate.unwrap_or(f64::NAN);
    let beta = b.beta_eff.unwrap_or(f64::NAN);
    let r2 = b.fit_r2.unwrap_or(f64::NAN);
    check(
        b.eps_at_stop <= 1e-6 * eps0 && b.t_stop < 1.0 && ts < 1.0 && beta > 0.0 && beta < 1.0 && r2 >= 0.99,
        format!("t_stop = {:.6}, eps = {:.2e}, Ts = {ts:.6}, beta_eff = {beta:.4}, r2 = {r2:.6}", b.t_stop, b.eps_at_stop),
    )
}

fn criterion_6(run: &cli::RunOutput, secs: f64) -> Outcome {
    let p = run.prepared.as_ref().ok_or("certified run refused")?;
    let c = p.setup.constants.ok_or("no constants")?;
    let m = run.report.monitors.as_ref().ok_or("no monitors")?;
    let b = run.report.blowup.run.as_ref().ok_or("no blowup report")?;
    let worst = |w: Option<cli::report::Worst>| w.map_or(f64::NAN, |w| w.margin);
    let margins = [worst(m.bootstrap), worst(m.eta_bound), worst(m.outer_bound), worst(m.rate)];
    check(
        run.exit_code == 0
            && c.margins.all_positive()
            && (c.beta - 0.95).abs() < 1e-12
            && (c.kappa - std::f64::consts::E).abs() < 1e-15
            && b.eps_at_stop <= p.control.eps_stop
            && margins.iter().all(|&v| v >= -1e-8)
            && secs <= 300.0,
        format!(
            "beta = {}, eps0 = {:.4e}, conditions {:.3e}/{:.3e}/{:.3e}; worst bootstrap {:.2e}, eta {:.2e}, outer {:.2e}, rate {:.2e} over {} steps in {secs:.1} s",
            c.beta, c.eps0, c.margins.condition1, c.margins.condition2, c.margins.condition3,
            margins[0], margins[1], margins[2], margins[3], m.steps
        ),
    )
}

fn criterion_7(run: &cli::RunOutput) -> Outcome {
    let tr = run.trajectory.as_ref().ok_or("no trajectory")?;
    let p = run.prepared.as_ref().ok_or("no setup")?;
    let cert = p.certificate.as_ref().ok_or("no certificate")?;
    let grid = p.setup.field.grid();
    let th = reconstruct_theta(grid, &tr.final_state, &p.forcing);
    let hint = tr.final_state.flow_at(grid, &p.forcing, 1.0);
    let slack = verify_cusp_bound(&th, cert.cusp_bound.c, cert.cusp_bound.nu, hint);
    let fit = fit_cusp_exponent(&th, WindowPolicy::default()).map_err(|e| e.to_string())?;
    check(
        slack.min_slack >= -1e-6 && fit.nu_fit > 0.0 && fit.nu_fit < 1.0 && fit.decade_span >= 2.0,
        format!(
            "min_slack = {:.2e} on y <= {hint:.2e}; nu_fit = {:.4} (conjectured 0.5) over {:.2} decades",
            slack.min_slack, fit.nu_fit, fit.decade_span
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = parse_config(REF1).unwrap();
    let (rows, _) = cmd_sweep(&cfg, SweepAxis::N, &[512.0, 1024.0, 2048.0, 4096.0], dir.path())
        .map_err(|e| e.to_string())?;
    let res: Vec<f64> = rows.iter().map(|r| r.drift_residual.unwrap_or(f64::NAN)).collect();
    let ratios: Vec<f64> = res.windows(2).map(|w| w[0] / w[1]).collect();
    check(
        ratios.iter().all(|r| (3.0..=5.0).contains(r)),
        format!("residuals {:.3e} / {:.3e} / {:.3e} / {:.3e}, ratios {:.3} / {:.3} / {:.3}",
            res[0], res[1], res[2], res[3], ratios[0], ratios[1], ratios[2]),
    )
}

fn criterion_9() -> Outcome {
    let out = cli::execute(&parse_config("mode = \"uncertified\"\n[profile]\nfamily = \"zero\"\n").unwrap());
    let tr = out.trajectory.as_ref().ok_or("no trajectory")?;
    let phi0 = &tr.snapshots[0].phi;
    let drift = tr
        .snapshots
        .iter()
        .chain(std::iter::once(&tr.final_state))
        .flat_map(|s| s.phi.iter().zip(phi0).map(|(a, b)| (a - b).abs() / b))
        .fold(0.0f64, f64::max);
    check(
        out.exit_code == 4 && tr.final_state.t == 10.0 && drift <= 1e-14,
        format!("exit {}, t_end = {}, max rel. change of phi = {drift:.1e}", out.exit_code, tr.final_state.t),
    )
}

fn criterion_10() -> Outcome {
    let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.01).collect();
    let eps: Vec<f64> = t.iter().map(|t| (1.0 - t) * (1.0 - t)).collect();
    let fit = extrapolate_ts(&eps, &t).map_err(|e| e.to_string())?;
    let ts = fit.ts_estimate.unwrap_or(f64::NAN);
    check(
        (fit.beta_eff - 0.5).abs() <= 0.01 && (ts - 1.0).abs() <= 0.01,
        format!("beta_eff = {:.6}, Ts = {ts:.6}", fit.beta_eff),
    )
}

fn main() -> ExitCode {
    let unc = uncertified_ref1();
    let start = Instant::now();
    let cert = cli::execute(&parse_config(REF1_CERTIFIED).unwrap());
    let cert_secs = start.elapsed().as_secs_f64();

    let results = [
        ("drift-identity oracle", criterion_1(&unc)),
        ("quadrature spot value", criterion_2()),
        ("invariant suite", criterion_3(&unc)),
        ("nonlocal-law equivalence", criterion_4(&unc)),
        ("blowup detection", criterion_5(&unc)),
        ("certified-mode barrier suite", criterion_6(&cert, cert_secs)),
        ("cusp bound and fit", criterion_7(&cert)),
        ("convergence order", criterion_8()),
        ("degenerate oracle", criterion_9()),
        ("extrapolator oracle", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
