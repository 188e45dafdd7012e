use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::nonuniform_derivative;
use crate::regression::fit_line;

pub const MIN_FIT_SAMPLES: usize = 8;
/// Decades of `eps` decay required overall, and the width of the fit window.
pub const FIT_DECADES: f64 = 2.0;
/// `beta_eff` must stay below `1 - BETA_MARGIN` for a finite-time extrapolation.
pub const BETA_MARGIN: f64 = 0.01;

/// Power-law fit `-eps_t = C eps^beta` over the final decay window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `None` when `beta_eff >= 1 - BETA_MARGIN`: no finite-time zero.
    pub ts_estimate: Option<f64>,
    pub beta_eff: f64,
    pub c_eff: f64,
    pub r2: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Fits the rate law on the samples with `eps <= 100 eps_last`, using
/// second-order differences for `eps_t`, and extrapolates the singular time
/// `Ts = t_last + eps_last^(1-beta) / (C (1-beta))`.
pub fn extrapolate_ts(eps: &[f64], t: &[f64]) -> Result<RateFit> {
    let n = eps.len();
    if n != t.len() {
        return Err(Error::InvalidArgument("eps and t differ in length".into()));
    }
    if n < MIN_FIT_SAMPLES {
        return Err(Error::FitUnavailable(format!("{n} samples, need {MIN_FIT_SAMPLES}")));
    }
    if eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::FitUnavailable("eps must stay positive".into()));
    }
    let last = eps[n - 1];
    let first = eps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(first / last >= 10f64.powf(FIT_DECADES)) {
        return Err(Error::FitUnavailable(format!(
            "eps decays by {:.3} decades, need {FIT_DECADES}",
            (first / last).log10()
        )));
    }
    let d = nonuniform_derivative(t, eps);
    let cutoff = last * 10f64.powf(FIT_DECADES);
    let start = (0..n).rev().take_while(|&i| eps[i] <= cutoff).last().unwrap_or(n - 1);
    let window = start..n;
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::FitUnavailable(format!(
            "{} samples in the final window, need {MIN_FIT_SAMPLES}",
            window.len()
        )));
    }
    if d[window.clone()].iter().any(|&v| !(v < 0.0)) {
        return Err(Error::FitUnavailable("eps is not strictly decreasing in the window".into()));
    }
    let x: Vec<f64> = eps[window.clone()].iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = d[window.clone()].iter().map(|v| (-v).ln()).collect();
    let line = fit_line(&x, &y)
        .ok_or_else(|| Error::FitUnavailable("degenerate regression".into()))?;
    let beta = line.slope;
    let c = line.intercept.exp();
    let ts_estimate = (beta > 0.0 && beta < 1.0 - BETA_MARGIN)
        .then(|| t[n - 1] + last.powf(1.0 - beta) / (c * (1.0 - beta)));
    Ok(RateFit {
        ts_estimate,
        beta_eff: beta,
        c_eff: c,
        r2: line.r2,
        window: [t[start], t[n - 1]],
        samples: window.len(),
    })
}
