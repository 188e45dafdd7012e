//! Adaptive time stepping of `phi_t = phi I` up to the blowup of `eps`.

mod dopri;
mod extrapolate;

pub use extrapolate::{extrapolate_ts, RateFit, BETA_MARGIN, FIT_DECADES, MIN_FIT_SAMPLES};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::reconstruct_theta;
use crate::certify::{monitor, CertifiedConstants, EpsHistory, MonitorReport};
use crate::error::{Error, Result};
use crate::flowfield::{cumulative_phi, FlowField, FlowState};
use dopri::{Dopri, Trial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Largest allowed relative drop of `eps` per step.
    pub safety: f64,
    pub dt_max: f64,
    pub eps_stop: f64,
    pub t_max: f64,
    pub rk_tolerance: f64,
    pub dt_min: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn for_eps0(eps0: f64) -> Self {
        StepControl {
            safety: 0.05,
            dt_max: 0.05,
            eps_stop: default_eps_stop(eps0),
            t_max: 10.0,
            rk_tolerance: 1e-10,
            dt_min: 1e-14,
            max_steps: 200_000,
        }
    }

    pub fn validate(&self, eps0: f64) -> Result<()> {
        let positive = [
            ("safety", self.safety),
            ("dt_max", self.dt_max),
            ("eps_stop", self.eps_stop),
            ("t_max", self.t_max),
            ("rk_tolerance", self.rk_tolerance),
            ("dt_min", self.dt_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.safety >= 1.0 {
            return Err(Error::InvalidArgument("safety must lie in (0, 1)".into()));
        }
        if self.eps_stop >= eps0 {
            return Err(Error::InvalidArgument(format!(
                "eps_stop = {} must be below eps0 = {eps0}",
                self.eps_stop
            )));
        }
        Ok(())
    }
}

pub fn default_eps_stop(eps0: f64) -> f64 {
    (1e-6 * eps0).max(1e-12)
}

/// `phi_t = phi I(x, t)`, computed from `phi` alone.
pub fn rhs(field: &FlowField, phi: &[f64]) -> Result<Vec<f64>> {
    let flow = cumulative_phi(field.grid().nodes(), phi);
    let mut out = vec![0.0; phi.len()];
    field.velocity_gradient_into(phi, &flow, &mut out)?;
    for (o, p) in out.iter_mut().zip(phi) {
        *o *= p;
    }
    Ok(out)
}

/// The step-size proposal before the embedded-error controller:
/// `min(dt_max, safety eps / |eps_t|)`.
pub fn adapt_dt(state: &FlowState, rhs_values: &[f64], control: &StepControl) -> f64 {
    let rate = rhs_values[0].abs();
    let guard = if rate > 0.0 { control.safety * state.eps() / rate } else { f64::INFINITY };
    control.dt_max.min(guard)
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub field: FlowField,
    /// Constants used by the monitors.
    pub constants: Option<CertifiedConstants>,
    /// In certified mode any monitor below `-monitor_tolerance` aborts.
    pub certified: bool,
    pub monitor_tolerance: f64,
    /// Snapshot every this many accepted steps (plus every decade of `eps`).
    pub snapshot_every: usize,
}

impl RunSetup {
    pub fn new(field: FlowField) -> Self {
        RunSetup { field, constants: None, certified: false, monitor_tolerance: 1e-8, snapshot_every: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    BlowupDetected,
    NoBlowupWithinHorizon,
    InvariantViolation,
    MonitorViolation,
    Stalled,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub status: RunStatus,
    pub t_stop: f64,
    pub eps_at_stop: f64,
    pub ts_estimate: Option<f64>,
    pub beta_eff: Option<f64>,
    pub c_eff: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    pub fit_r2: Option<f64>,
    pub fit_error: Option<String>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// `max |Phi(a, t) - Phi(a, 0) + g(0) t|` over accepted steps.
    pub max_drift_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<FlowState>,
    /// States sampled ten times per decade of `eps` decay, for the needle
    /// diagnostic.
    pub decay_samples: Vec<FlowState>,
    pub final_state: FlowState,
    pub history: EpsHistory,
    pub monitors: Vec<MonitorReport>,
    pub violations: Vec<Violation>,
    pub blowup: BlowupReport,
}

impl Trajectory {
    /// Decay samples in the final fit window `eps <= 100 eps_stop`.
    pub fn final_window(&self) -> &[FlowState] {
        let cutoff = self.final_state.eps() * 10f64.powf(FIT_DECADES);
        let start = self.decay_samples.partition_point(|s| s.eps() > cutoff);
        &self.decay_samples[start..]
    }
}

/// Relative slack allowed for `phi` increasing in `t` at a node.
const TIME_MONOTONE_TOL: f64 = 1e-14;
const ETA_TOL: f64 = 1e-10;
const SPACE_MONOTONE_TOL: f64 = 1e-12;

fn check_step(
    field: &FlowField,
    prev: &FlowState,
    next: &FlowState,
    forcing_active: bool,
    out: &mut Vec<Violation>,
) {
    let t = next.t;
    let mut push = |kind: &str, detail: String| out.push(Violation { t, kind: kind.into(), detail });
    let (e0, e1) = (prev.eps(), next.eps());
    if forcing_active && !(e1 < e0) {
        push("eps-not-decreasing", format!("eps {e0:e} -> {e1:e}"));
    }
    let nodes = field.grid().nodes();
    if let Some(i) = next.phi.iter().position(|&p| p / e1 < 1.0 - ETA_TOL) {
        push("eta-below-one", format!("eta({:e}) = {:e}", nodes[i], next.phi[i] / e1));
    }
    if let Some(i) = next.phi.windows(2).position(|w| w[1] < w[0] * (1.0 - SPACE_MONOTONE_TOL)) {
        push("phi-decreasing-in-x", format!("phi({:e}) > phi({:e})", nodes[i], nodes[i + 1]));
    }
    if let Some(i) = next
        .phi
        .iter()
        .zip(&prev.phi)
        .position(|(a, b)| *a > *b * (1.0 + TIME_MONOTONE_TOL))
    {
        push(
            "phi-increasing-in-t",
            format!("phi({:e}): {:e} -> {:e}", nodes[i], prev.phi[i], next.phi[i]),
        );
    }
    let theta = reconstruct_theta(field.grid(), next, field.forcing());
    if theta.theta[0] != field.forcing().profile().peak() {
        push("theta-max-moved", format!("theta(0) = {:e}", theta.theta[0]));
    }
}

/// Integrates until `eps <= eps_stop`, `t >= t_max`, or an abort.
pub fn run(setup: &RunSetup, control: &StepControl) -> Result<Trajectory> {
    let field = &setup.field;
    let forcing = field.forcing();
    control.validate(forcing.eps0())?;
    let n = field.len();
    let g0 = forcing.g(0.0);
    let forcing_active = g0 > 0.0;

    let mut state = FlowState::initial(field.grid(), forcing);
    let flow_a0 = *state.flow.last().expect("nonempty grid");
    let mut dphi = rhs(field, &state.phi)?;
    let mut history = EpsHistory::new();
    history.push(state.t, state.eps());
    let mut snapshots = vec![state.clone()];
    let mut decay_samples = vec![state.clone()];
    let mut monitors = Vec::new();
    let mut violations = Vec::new();
    let mut stepper = Dopri::new(n);
    let mut pending: Option<(FlowState, f64)> = None;

    let eps0 = forcing.eps0();
    let mut next_decade = 0.1;
    let mut next_sample = 10f64.powf(-0.1);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut max_drift = 0.0f64;
    let mut dt_ctrl = control.dt_max;
    let mut status = None;

    let mut f = |_t: f64, y: &[f64], out: &mut [f64]| -> bool {
        if y.iter().any(|&v| !(v > 0.0)) {
            return false;
        }
        let flow = cumulative_phi(field.grid().nodes(), y);
        if field.velocity_gradient_into(y, &flow, out).is_err() {
            return false;
        }
        for (o, p) in out.iter_mut().zip(y) {
            *o *= p;
        }
        true
    };

    while status.is_none() {
        if state.eps() <= control.eps_stop {
            status = Some(RunStatus::BlowupDetected);
            break;
        }
        if state.t >= control.t_max {
            status = Some(RunStatus::NoBlowupWithinHorizon);
            break;
        }
        if accepted >= control.max_steps {
            status = Some(RunStatus::StepLimit);
            break;
        }
        let cap = adapt_dt(&state, &dphi, control).min(control.t_max - state.t);
        let mut dt = dt_ctrl.min(cap).max(control.dt_min.min(cap));
        let (phi, dy, err_norm) = loop {
            match stepper.trial(&mut f, state.t, &state.phi, &dphi, dt) {
                Trial::Inadmissible => {
                    rejected += 1;
                    if dt <= control.dt_min {
                        break (None, None, f64::INFINITY);
                    }
                    dt = (0.5 * dt).max(control.dt_min);
                }
                Trial::Done { y, dy, err } => {
                    let norm = err
                        .iter()
                        .zip(&y)
                        .map(|(e, v)| e.abs() / (control.rk_tolerance * v.abs()))
                        .fold(0.0, f64::max);
                    if norm <= 1.0 || dt <= control.dt_min {
                        if norm > 1.0 {
                            warn!("step controller stalled at dt = {dt:e}, t = {}", state.t);
                        }
                        break (Some(y), Some(dy), norm);
                    }
                    rejected += 1;
                    let factor = (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
                    dt = (dt * factor).max(control.dt_min);
                }
            }
        };
        let (Some(phi), Some(dy)) = (phi, dy) else {
            status = Some(RunStatus::Stalled);
            break;
        };
        let factor = if err_norm > 0.0 { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        dt_ctrl = dt * factor;

        let t_new = if cap - dt <= 4.0 * f64::EPSILON * control.t_max && cap == control.t_max - state.t {
            control.t_max
        } else {
            state.t + dt
        };
        let flow = cumulative_phi(field.grid().nodes(), &phi);
        let next = FlowState { t: t_new, phi, flow };
        accepted += 1;
        check_step(field, &state, &next, forcing_active, &mut violations);
        max_drift = max_drift.max((next.flow[n - 1] - flow_a0 + g0 * next.t).abs());
        history.push(next.t, next.eps());

        // monitors lag one step so that eps_t is a centered difference
        if let Some(c) = &setup.constants {
            let k = history.len() - 2;
            let analytic = pending.take().map(|(_, d)| d).unwrap_or(dphi[0]);
            let m = monitor(field.grid(), &state, &history, k, c, Some(analytic));
            if setup.certified && m.worst() < -setup.monitor_tolerance {
                violations.push(Violation {
                    t: m.t,
                    kind: "monitor".into(),
                    detail: format!("worst margin {:e}", m.worst()),
                });
            }
            monitors.push(m);
            pending = Some((next.clone(), dy[0]));
        }

        let ratio = next.eps() / eps0;
        let mut snap = accepted % setup.snapshot_every.max(1) == 0;
        while ratio <= next_decade {
            snap = true;
            next_decade *= 0.1;
        }
        let mut sample = false;
        while ratio <= next_sample {
            sample = true;
            next_sample *= 10f64.powf(-0.1);
        }
        if sample {
            decay_samples.push(next.clone());
        }
        if snap {
            snapshots.push(next.clone());
        }
        debug!("t = {:.6}, eps = {:e}, dt = {dt:e}", next.t, next.eps());
        state = next;
        dphi = dy;
        if !violations.is_empty() {
            status = Some(if violations.iter().any(|v| v.kind == "monitor") {
                RunStatus::MonitorViolation
            } else {
                RunStatus::InvariantViolation
            });
        }
    }

    if let Some(c) = &setup.constants {
        if history.len() >= 2 {
            let k = history.len() - 1;
            let m = monitor(field.grid(), &state, &history, k, c, Some(dphi[0]));
            if setup.certified && m.worst() < -setup.monitor_tolerance {
                violations.push(Violation {
                    t: m.t,
                    kind: "monitor".into(),
                    detail: format!("worst margin {:e}", m.worst()),
                });
                status = Some(RunStatus::MonitorViolation);
            }
            monitors.push(m);
        }
    }
    if snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    if decay_samples.last().map(|s| s.t) != Some(state.t) {
        decay_samples.push(state.clone());
    }

    let status = status.expect("loop exits with a status");
    let mut blowup = BlowupReport {
        status,
        t_stop: state.t,
        eps_at_stop: state.eps(),
        ts_estimate: None,
        beta_eff: None,
        c_eff: None,
        fit_window: None,
        fit_r2: None,
        fit_error: None,
        accepted_steps: accepted,
        rejected_steps: rejected,
        max_drift_residual: max_drift,
    };
    if status == RunStatus::BlowupDetected {
        match extrapolate_ts(history.eps(), history.times()) {
            Ok(fit) => {
                blowup.ts_estimate = fit.ts_estimate;
                blowup.beta_eff = Some(fit.beta_eff);
                blowup.c_eff = Some(fit.c_eff);
                blowup.fit_window = Some(fit.window);
                blowup.fit_r2 = Some(fit.r2);
                if fit.ts_estimate.is_none() {
                    blowup.fit_error = Some(format!("beta_eff = {} rules out a finite-time zero", fit.beta_eff));
                }
            }
            Err(e) => blowup.fit_error = Some(e.to_string()),
        }
    }
    Ok(Trajectory { snapshots, decay_samples, final_state: state, history, monitors, violations, blowup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{make_grid, GridSpec};
    use crate::profile::{build_forcing, build_profile, Forcing, ProfileFamily};
    use approx::assert_relative_eq;

    fn ref1(eps0: f64) -> Forcing {
        let p = build_profile(ProfileFamily::PolyBump { radius: 1.0, power: 3.0 }).unwrap();
        build_forcing(&p, eps0).unwrap()
    }

    fn field(f: Forcing, n: usize) -> FlowField {
        FlowField::new(make_grid(&GridSpec::new(f.support_end(), n)).unwrap(), f)
    }

    #[test]
    fn initial_rhs_and_guard() {
        for &eps0 in &[1.0, 1e-3] {
            let ff = field(ref1(eps0), 4096);
            let s = FlowState::initial(ff.grid(), ff.forcing());
            let d = rhs(&ff, &s.phi).unwrap();
            assert_relative_eq!(d[0], -3.2 * eps0, max_relative = 1e-10);
            assert_eq!(*d.last().unwrap(), 0.0);
            let c = StepControl::for_eps0(eps0);
            assert_relative_eq!(adapt_dt(&s, &d, &c), 0.015625, max_relative = 1e-10);
        }
    }

    #[test]
    fn guard_inactive_without_rate() {
        let c = StepControl::for_eps0(1.0);
        let ff = field(ref1(1.0), 64);
        let s = FlowState::initial(ff.grid(), ff.forcing());
        assert_eq!(adapt_dt(&s, &vec![0.0; 64], &c), c.dt_max);
    }

    #[test]
    fn first_order_expansion_of_eps() {
        let ff = field(ref1(1.0), 1024);
        let s = FlowState::initial(ff.grid(), ff.forcing());
        let d = rhs(&ff, &s.phi).unwrap();
        let mut st = Dopri::new(ff.len());
        let mut f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out.copy_from_slice(&rhs(&ff, y).unwrap());
            true
        };
        for &dt in &[1e-3, 1e-4] {
            let Trial::Done { y, .. } = st.trial(&mut f, 0.0, &s.phi, &d, dt) else { panic!() };
            let lin = 1.0 + d[0] * dt;
            assert!((y[0] - lin).abs() < 20.0 * dt * dt);
        }
    }

    #[test]
    fn stationary_run_has_no_blowup() {
        let p = build_profile(ProfileFamily::Zero { radius: 1.0 }).unwrap();
        let f = build_forcing(&p, 1.0).unwrap();
        let ff = field(f, 64);
        let tr = run(&RunSetup::new(ff), &StepControl::for_eps0(1.0)).unwrap();
        assert_eq!(tr.blowup.status, RunStatus::NoBlowupWithinHorizon);
        assert_eq!(tr.final_state.t, 10.0);
        assert!(tr.final_state.phi.iter().all(|&p| p == 1.0));
        assert!(tr.violations.is_empty());
    }

    #[test]
    fn coarse_ref1_blows_up_before_one() {
        let ff = field(ref1(1.0), 512);
        let tr = run(&RunSetup::new(ff), &StepControl::for_eps0(1.0)).unwrap();
        assert_eq!(tr.blowup.status, RunStatus::BlowupDetected, "{:?}", tr.violations);
        assert!(tr.blowup.ts_estimate.unwrap() < 1.0);
        let b = tr.blowup.beta_eff.unwrap();
        assert!(b > 0.0 && b < 1.0);
        assert!(tr.history.eps().windows(2).all(|w| w[1] < w[0]));
        assert!(tr.blowup.max_drift_residual < 1e-4);
    }

    #[test]
    fn control_validation() {
        let mut c = StepControl::for_eps0(1.0);
        c.eps_stop = 2.0;
        assert!(c.validate(1.0).is_err());
        let mut c = StepControl::for_eps0(1.0);
        c.safety = 0.0;
        assert!(c.validate(1.0).is_err());
        assert_eq!(default_eps_stop(1e-7), 1e-12);
        assert_eq!(default_eps_stop(1.0), 1e-6);
    }
}
