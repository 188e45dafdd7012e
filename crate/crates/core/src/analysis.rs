//! Eulerian reconstruction `theta(y, t) = g(Phi^-1(y, t))`, cusp-exponent fits
//! and the needle diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{nonuniform_derivative, FlowState, LagrangianGrid};
use crate::profile::Forcing;
use crate::regression::fit_line;

pub const MIN_CUSP_NODES: usize = 12;

/// `theta` sampled at `y_i = Phi(x_i, t)`. The depletion
/// `theta0(0) - theta` is kept separately so that it stays accurate where it
/// is many orders below `theta0(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianProfile {
    pub t: f64,
    pub peak: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub drop: Vec<f64>,
    /// `phi / eps` at each node; empty for synthetic profiles.
    pub eta: Vec<f64>,
}

impl EulerianProfile {
    /// A profile from samples of the depletion, with the Lagrangian label
    /// taken equal to `y`.
    pub fn from_samples(peak: f64, y: Vec<f64>, drop: Vec<f64>) -> Result<Self> {
        if y.len() != drop.len() || y.len() < 2 {
            return Err(Error::InvalidArgument("need matching y/drop samples".into()));
        }
        if y.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("y samples must strictly increase".into()));
        }
        let theta = drop.iter().map(|d| peak - d).collect();
        Ok(EulerianProfile { t: 0.0, peak, x: y.clone(), y, theta, drop, eta: Vec::new() })
    }

    /// `theta(y)` by monotone piecewise-linear interpolation, `0` past the
    /// last sample.
    pub fn theta_at(&self, y: f64) -> f64 {
        self.interpolate(&self.theta, y, 0.0)
    }

    pub fn drop_at(&self, y: f64) -> f64 {
        self.interpolate(&self.drop, y, self.peak)
    }

    fn interpolate(&self, v: &[f64], y: f64, beyond: f64) -> f64 {
        let n = self.y.len();
        if y <= self.y[0] {
            return v[0];
        }
        if y >= self.y[n - 1] {
            return if y == self.y[n - 1] { v[n - 1] } else { beyond };
        }
        let j = self.y.partition_point(|&s| s <= y);
        let s = (y - self.y[j - 1]) / (self.y[j] - self.y[j - 1]);
        v[j - 1] + s * (v[j] - v[j - 1])
    }

    /// `y` where the flow map reaches `x`, by linear interpolation in `x`.
    fn y_at_label(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let j = self.x.partition_point(|&s| s <= x).max(1);
        let s = (x - self.x[j - 1]) / (self.x[j] - self.x[j - 1]);
        self.y[j - 1] + s * (self.y[j] - self.y[j - 1])
    }
}

pub fn reconstruct_theta(grid: &LagrangianGrid, state: &FlowState, forcing: &Forcing) -> EulerianProfile {
    let x = grid.nodes().to_vec();
    let drop: Vec<f64> = x.iter().map(|&v| forcing.g_drop(v)).collect();
    let peak = forcing.profile().peak();
    let eps = state.eps();
    EulerianProfile {
        t: state.t,
        peak,
        theta: x.iter().map(|&v| forcing.g(v)).collect(),
        drop,
        y: state.flow.clone(),
        eta: state.phi.iter().map(|p| p / eps).collect(),
        x,
    }
}

/// How the cusp-fit window `[y_lo, y_hi]` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum WindowPolicy {
    /// `y_lo` ten times above the edge of the regularized core (the first
    /// node with `eta >= core_eta`), `y_hi = Phi(a, t)/10`.
    Adaptive { core_eta: f64 },
    /// `[10 y_first_positive, Phi(min(1, a), t)/10]`.
    SupportDecades,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Adaptive { core_eta: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspFit {
    pub nu_fit: f64,
    pub c_fit: f64,
    pub window: [f64; 2],
    pub r2: f64,
    pub decade_span: f64,
    pub nodes: usize,
    /// Fewer than two decades in the window.
    pub low_confidence: bool,
}

pub fn cusp_window(profile: &EulerianProfile, policy: WindowPolicy) -> Result<[f64; 2]> {
    let first_pos = profile
        .y
        .iter()
        .copied()
        .find(|&v| v > 0.0)
        .ok_or_else(|| Error::FitUnavailable("no positive y".into()))?;
    let floor = 10.0 * first_pos;
    let y_last = *profile.y.last().expect("nonempty profile");
    let window = match policy {
        WindowPolicy::SupportDecades => [floor, profile.y_at_label(1.0) / 10.0],
        WindowPolicy::Adaptive { core_eta } => {
            let core = profile
                .eta
                .iter()
                .position(|&e| e >= core_eta)
                .map(|i| 10.0 * profile.y[i])
                .unwrap_or(floor);
            [core.max(floor), y_last / 10.0]
        }
    };
    Ok(window)
}

/// Least-squares line through `(ln y, ln(theta0(0) - theta))` on the window.
pub fn fit_cusp_exponent(profile: &EulerianProfile, policy: WindowPolicy) -> Result<CuspFit> {
    let [lo, hi] = cusp_window(profile, policy)?;
    let (mut x, mut v) = (Vec::new(), Vec::new());
    for (&y, &d) in profile.y.iter().zip(&profile.drop) {
        if y >= lo && y <= hi && d > 0.0 {
            x.push(y.ln());
            v.push(d.ln());
        }
    }
    if x.len() < MIN_CUSP_NODES {
        return Err(Error::FitUnavailable(format!(
            "{} usable nodes in [{lo:e}, {hi:e}], need {MIN_CUSP_NODES}",
            x.len()
        )));
    }
    let decade_span = (x[x.len() - 1] - x[0]) / std::f64::consts::LN_10;
    if decade_span < 1.0 {
        return Err(Error::FitUnavailable(format!("window spans {decade_span:.2} decades")));
    }
    let line = fit_line(&x, &v).ok_or_else(|| Error::FitUnavailable("degenerate window".into()))?;
    Ok(CuspFit {
        nu_fit: line.slope,
        c_fit: line.intercept.exp(),
        window: [lo, hi],
        r2: line.r2,
        decade_span,
        nodes: x.len(),
        low_confidence: decade_span < 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspSlack {
    pub min_slack: f64,
    pub argmin_y: f64,
    pub nodes: usize,
}

/// `min (theta0(0) - c y^nu - theta(y))` over nodes with `y <= y_max`.
pub fn verify_cusp_bound(profile: &EulerianProfile, c: f64, nu: f64, y_max: f64) -> CuspSlack {
    let mut out = CuspSlack { min_slack: f64::INFINITY, argmin_y: 0.0, nodes: 0 };
    for (&y, &d) in profile.y.iter().zip(&profile.drop) {
        if y > y_max {
            break;
        }
        let slack = d - c * y.powf(nu);
        out.nodes += 1;
        if slack < out.min_slack {
            out.min_slack = slack;
            out.argmin_y = y;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeedleFlag {
    CuspLike,
    NeedleSuspected,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeedleDiagnostic {
    pub s0_estimate: f64,
    /// `g(0) - g(s0)`: the jump of `theta` at the origin implied by `s0`.
    pub theta_gap: f64,
    pub flag: NeedleFlag,
    /// Worst per-node fit quality among the nodes that decide `s0`.
    pub min_node_r2: Option<f64>,
    pub threshold: f64,
}

pub const NEEDLE_MIN_R2: f64 = 0.9;
pub const NEEDLE_GAP_TOL: f64 = 1e-6;
/// Default cut for "vanished at `Ts`": two decades below the smallest `phi`
/// the run resolved, the same span the rate-law fits extrapolate over.
pub fn needle_threshold(eps_stop: f64) -> f64 {
    eps_stop * 1e-2
}

/// Relative decay over the window below which a node counts as frozen.
const FROZEN_DECAY: f64 = 1e-9;

/// `phi(x_i, Ts)` per node from the rate law `-phi_t = C phi^b` fitted on
/// the node's own history. Returns the value and the fit's `r2` (`None` for
/// frozen nodes).
fn extrapolate_node(t: &[f64], phi: &[f64], ts: f64) -> (f64, Option<f64>) {
    let n = phi.len();
    let last = phi[n - 1];
    if n < 3 || (phi[0] - last).abs() <= FROZEN_DECAY * phi[0].abs() || ts <= t[n - 1] {
        return (last, None);
    }
    let d = nonuniform_derivative(t, phi);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (p, v) in phi.iter().zip(&d) {
        if *p > 0.0 && *v < 0.0 {
            x.push(p.ln());
            y.push((-v).ln());
        }
    }
    let Some(line) = fit_line(&x, &y) else {
        return (last, Some(0.0));
    };
    let (b, c) = (line.slope, line.intercept.exp());
    let dt = ts - t[n - 1];
    let value = if b < 1.0 {
        let base = last.powf(1.0 - b) - c * (1.0 - b) * dt;
        if base <= 0.0 { 0.0 } else { base.powf(1.0 / (1.0 - b)) }
    } else {
        last * (-c * last.powf(b - 1.0) * dt).exp()
    };
    (value, Some(line.r2))
}

/// Extrapolates every node to `ts` from the sampled states and locates `s0`,
/// the end of the leading run of nodes whose extrapolated `phi` falls below
/// `threshold`. With `ts = None` (no blowup) the diagnostic is vacuous.
pub fn needle_diagnostic(
    grid: &LagrangianGrid,
    forcing: &Forcing,
    samples: &[FlowState],
    ts: Option<f64>,
    threshold: f64,
) -> NeedleDiagnostic {
    let vacuous = NeedleDiagnostic {
        s0_estimate: 0.0,
        theta_gap: 0.0,
        flag: NeedleFlag::CuspLike,
        min_node_r2: None,
        threshold,
    };
    let Some(ts) = ts else { return vacuous };
    if samples.is_empty() {
        return NeedleDiagnostic { flag: NeedleFlag::Inconclusive, ..vacuous };
    }
    let nodes = grid.nodes();
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let mut series = vec![0.0; samples.len()];
    let mut end = None;
    let mut min_r2: Option<f64> = None;
    for i in 0..nodes.len() {
        for (v, s) in series.iter_mut().zip(samples) {
            *v = s.phi[i];
        }
        let (value, r2) = extrapolate_node(&times, &series, ts);
        if let Some(r) = r2 {
            min_r2 = Some(min_r2.map_or(r, |m: f64| m.min(r)));
        }
        if value < threshold {
            end = Some(i);
        } else {
            break;
        }
    }
    let s0 = end.map_or(0.0, |i| nodes[i]);
    let theta_gap = forcing.g_drop(s0);
    let flag = if min_r2.is_some_and(|r| r < NEEDLE_MIN_R2) {
        NeedleFlag::Inconclusive
    } else if nodes.len() > 1 && s0 > nodes[1] && theta_gap > NEEDLE_GAP_TOL {
        NeedleFlag::NeedleSuspected
    } else {
        NeedleFlag::CuspLike
    };
    NeedleDiagnostic { s0_estimate: s0, theta_gap, flag, min_node_r2: min_r2, threshold }
}
