use serde::{Deserialize, Serialize};

use crate::analysis::{CuspFit, CuspSlack, NeedleDiagnostic, WindowPolicy};
use crate::certify::{CertifiedConstants, CuspBound, MonitorReport};
use crate::integrator::{BlowupReport, Violation};
use crate::profile::{KBounds, ProfileFamily};

use super::config::RunConfig;

/// Everything `certify` decides, with the inputs of each formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub profile: ProfileFamily,
    pub k_bounds: KBounds,
    /// Worst slack of the K-bounds re-checked on the chosen `eps0`.
    pub k_bounds_slack: f64,
    pub constants: CertifiedConstants,
    pub conditions_pass: bool,
    pub failures: Vec<String>,
    pub recipe: Recipe,
    pub cusp_bound: CuspBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub beta_start: f64,
    pub beta_step: f64,
    pub beta_ceiling: f64,
    pub condition3_margin: f64,
    pub k_bound_margin: f64,
    pub k_fit_eps0: f64,
    pub beta_override: Option<f64>,
    pub kappa_override: Option<f64>,
    pub eps0_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSection {
    pub certified: bool,
    pub eps0: f64,
    pub k_bounds: Option<KBounds>,
    /// In uncertified mode these only parametrize the diagnostic monitors.
    pub constants: Option<CertifiedConstants>,
    pub cusp_bound: Option<CuspBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSection {
    pub outcome: String,
    pub exit_code: i32,
    pub truncated: bool,
    pub error: Option<String>,
    #[serde(flatten)]
    pub run: Option<BlowupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspSection {
    pub policy: WindowPolicy,
    pub fit: Option<CuspFit>,
    pub error: Option<String>,
    /// Conjectured universal exponent, for comparison only.
    pub conjectured_nu: f64,
    pub bound: Option<CuspBound>,
    pub bound_check: Option<CuspSlack>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Worst {
    pub margin: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub certified: bool,
    pub steps: usize,
    pub tolerance: f64,
    pub bootstrap: Option<Worst>,
    pub eta_bound: Option<Worst>,
    pub outer_bound: Option<Worst>,
    pub rate: Option<Worst>,
    pub rate_analytic: Option<Worst>,
    pub all_within_tolerance: bool,
}

impl MonitorSummary {
    pub fn from_reports(reports: &[MonitorReport], certified: bool, tolerance: f64) -> Self {
        let worst = |f: &dyn Fn(&MonitorReport) -> Option<f64>| {
            reports
                .iter()
                .filter_map(|m| f(m).filter(|v| !v.is_nan()).map(|v| Worst { margin: v, t: m.t }))
                .fold(None, |acc: Option<Worst>, w| match acc {
                    Some(a) if a.margin <= w.margin => Some(a),
                    _ => Some(w),
                })
        };
        let bootstrap = worst(&|m| Some(m.bootstrap_margin));
        let eta_bound = worst(&|m| Some(m.eta_bound_margin));
        let outer_bound = worst(&|m| Some(m.outer_bound_margin));
        let rate = worst(&|m| Some(m.rate_margin));
        let rate_analytic = worst(&|m| m.rate_margin_analytic);
        let all_within_tolerance = [bootstrap, eta_bound, outer_bound, rate]
            .iter()
            .all(|w| w.is_none_or(|w| w.margin >= -tolerance));
        MonitorSummary {
            certified,
            steps: reports.len(),
            tolerance,
            bootstrap,
            eta_bound,
            outer_bound,
            rate,
            rate_analytic,
            all_within_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Only recorded when `outputs.wall_clock` is set.
    pub wall_clock_seconds: Option<f64>,
}

/// The run report; its eight top-level keys are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: Option<RunConfig>,
    pub constants: Option<ConstantsSection>,
    pub blowup: BlowupSection,
    pub cusp_fit: Option<CuspSection>,
    pub needle: Option<NeedleDiagnostic>,
    pub monitors: Option<MonitorSummary>,
    pub violations: Vec<Violation>,
    pub timing: Timing,
}

impl RunReport {
    /// Report for a run that never started.
    pub fn failed(config: Option<RunConfig>, outcome: &str, exit_code: i32, error: String) -> Self {
        RunReport {
            config,
            constants: None,
            blowup: BlowupSection {
                outcome: outcome.into(),
                exit_code,
                truncated: false,
                error: Some(error),
                run: None,
            },
            cusp_fit: None,
            needle: None,
            monitors: None,
            violations: Vec::new(),
            timing: Timing { accepted_steps: 0, rejected_steps: 0, wall_clock_seconds: None },
        }
    }
}
