use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::WindowPolicy;
use crate::error::{Error, Result};
use crate::integrator::{default_eps_stop, StepControl};
use crate::profile::ProfileFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Certified,
    Uncertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub family: String,
    #[serde(default = "one")]
    pub radius: f64,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
    #[serde(default = "default_x_min_factor")]
    pub x_min_factor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: default_n(), grading: default_grading(), x_min_factor: default_x_min_factor() }
    }
}

/// Step control as written; `eps_stop` is resolved against `eps0` later.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub safety: Option<f64>,
    pub dt_max: Option<f64>,
    pub eps_stop: Option<f64>,
    pub t_max: Option<f64>,
    pub rk_tolerance: Option<f64>,
    pub dt_min: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Records elapsed wall-clock time in the report, which makes reports
    /// differ between otherwise identical runs.
    #[serde(default)]
    pub wall_clock: bool,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            directory: default_directory(),
            snapshot_every: default_snapshot_every(),
            wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginsConfig {
    /// Relative widening of the fitted K-bounds.
    #[serde(default)]
    pub k_bound: f64,
    /// Relative slack demanded of condition 3 during the beta sweep.
    #[serde(default = "default_condition3")]
    pub condition3: f64,
    /// `eps0` at which the K-bounds are sampled; they hold for every smaller
    /// `eps0`.
    #[serde(default = "default_k_fit_eps0")]
    pub k_fit_eps0: f64,
    #[serde(default = "default_monitor_tolerance")]
    pub monitor_tolerance: f64,
}

impl Default for MarginsConfig {
    fn default() -> Self {
        MarginsConfig {
            k_bound: 0.0,
            condition3: default_condition3(),
            k_fit_eps0: default_k_fit_eps0(),
            monitor_tolerance: default_monitor_tolerance(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverridesConfig {
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub eps0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum WindowName {
    Adaptive,
    SupportDecades,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_window")]
    pub window: WindowName,
    #[serde(default = "default_core_eta")]
    pub core_eta: f64,
    /// Cut below which an extrapolated `phi(x, Ts)` counts as vanished;
    /// defaults to `eps_stop / 100`.
    pub needle_threshold: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { window: default_window(), core_eta: default_core_eta(), needle_threshold: None }
    }
}

impl AnalysisConfig {
    pub fn policy(&self) -> WindowPolicy {
        match self.window {
            WindowName::Adaptive => WindowPolicy::Adaptive { core_eta: self.core_eta },
            WindowName::SupportDecades => WindowPolicy::SupportDecades,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Uncertified mode only; certified mode derives `eps0`.
    pub eps0: Option<f64>,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub margins: MarginsConfig,
    /// Certified mode only: bypass the constant-selection recipe.
    #[serde(default)]
    pub overrides: OverridesConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn one() -> f64 {
    1.0
}
fn default_n() -> usize {
    4096
}
fn default_grading() -> f64 {
    10.0
}
fn default_x_min_factor() -> f64 {
    1e-12
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}
fn default_snapshot_every() -> usize {
    50
}
fn default_condition3() -> f64 {
    0.01
}
fn default_k_fit_eps0() -> f64 {
    0.1
}
fn default_monitor_tolerance() -> f64 {
    1e-8
}
fn default_window() -> WindowName {
    WindowName::Adaptive
}
fn default_core_eta() -> f64 {
    10.0
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.to_string(), message: message.into() }
}

/// Parses and validates a TOML run configuration. Unknown keys and
/// ill-typed values are reported with their key path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_err("<root>", e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(if path.is_empty() { "<root>" } else { &path }, e.inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(path, format!("must be positive, got {v}")))
            }
        };
        match self.mode {
            Mode::Uncertified => {
                if let Some(e) = self.eps0 {
                    if !(e > 0.0 && e <= 1.0) {
                        return Err(config_err("eps0", format!("must lie in (0, 1], got {e}")));
                    }
                }
                let o = &self.overrides;
                if o.beta.is_some() || o.kappa.is_some() || o.eps0.is_some() {
                    return Err(config_err("overrides", "only valid in certified mode"));
                }
            }
            Mode::Certified => {
                if self.eps0.is_some() {
                    return Err(config_err(
                        "eps0",
                        "certified mode derives eps0; use overrides.eps0 to force it",
                    ));
                }
            }
        }
        self.family().map_err(|e| config_err("profile", e.to_string()))?;
        if self.grid.n < crate::flowfield::MIN_NODES {
            return Err(config_err(
                "grid.n",
                format!("must be at least {}, got {}", crate::flowfield::MIN_NODES, self.grid.n),
            ));
        }
        if !(self.grid.grading >= 0.0 && self.grid.grading.is_finite()) {
            return Err(config_err("grid.grading", "must be nonnegative"));
        }
        if !(self.grid.x_min_factor > 0.0 && self.grid.x_min_factor < 1.0) {
            return Err(config_err("grid.x_min_factor", "must lie in (0, 1)"));
        }
        let c = &self.control;
        for (name, v) in [
            ("control.safety", c.safety),
            ("control.dt_max", c.dt_max),
            ("control.eps_stop", c.eps_stop),
            ("control.t_max", c.t_max),
            ("control.rk_tolerance", c.rk_tolerance),
            ("control.dt_min", c.dt_min),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if c.safety.is_some_and(|s| s >= 1.0) {
            return Err(config_err("control.safety", "must lie in (0, 1)"));
        }
        if c.max_steps == Some(0) {
            return Err(config_err("control.max_steps", "must be positive"));
        }
        if self.outputs.snapshot_every == 0 {
            return Err(config_err("outputs.snapshot_every", "must be positive"));
        }
        let m = &self.margins;
        if !(m.k_bound >= 0.0 && m.k_bound < 1.0) {
            return Err(config_err("margins.k_bound", "must lie in [0, 1)"));
        }
        if !(m.condition3 >= 0.0 && m.condition3 < 1.0) {
            return Err(config_err("margins.condition3", "must lie in [0, 1)"));
        }
        if !(m.k_fit_eps0 > 0.0 && m.k_fit_eps0 <= 1.0) {
            return Err(config_err("margins.k_fit_eps0", "must lie in (0, 1]"));
        }
        positive("margins.monitor_tolerance", m.monitor_tolerance)?;
        for (name, v) in [
            ("overrides.beta", self.overrides.beta),
            ("overrides.kappa", self.overrides.kappa),
            ("overrides.eps0", self.overrides.eps0),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        positive("analysis.core_eta", self.analysis.core_eta)?;
        if let Some(t) = self.analysis.needle_threshold {
            positive("analysis.needle_threshold", t)?;
        }
        Ok(())
    }

    pub fn family(&self) -> Result<ProfileFamily> {
        ProfileFamily::from_name(&self.profile.family, self.profile.radius, &self.profile.params)
    }

    /// `eps0` for uncertified runs (defaults to 1).
    pub fn uncertified_eps0(&self) -> f64 {
        self.eps0.unwrap_or(1.0)
    }

    /// Step control with defaults resolved against the run's `eps0`.
    pub fn step_control(&self, eps0: f64) -> StepControl {
        let d = StepControl::for_eps0(eps0);
        let c = &self.control;
        StepControl {
            safety: c.safety.unwrap_or(d.safety),
            dt_max: c.dt_max.unwrap_or(d.dt_max),
            eps_stop: c.eps_stop.unwrap_or(default_eps_stop(eps0)),
            t_max: c.t_max.unwrap_or(d.t_max),
            rk_tolerance: c.rk_tolerance.unwrap_or(d.rk_tolerance),
            dt_min: c.dt_min.unwrap_or(d.dt_min),
            max_steps: c.max_steps.unwrap_or(d.max_steps),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "certified"
[profile]
family = "poly-bump"
"#;

    #[test]
    fn minimal_certified_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.n, 4096);
        assert_eq!(c.profile.radius, 1.0);
        let sc = c.step_control(7.3e-8);
        assert_eq!(sc.safety, 0.05);
        assert_eq!(sc.eps_stop, 1e-12);
        assert_eq!(c.step_control(0.5).eps_stop, 0.5e-6);
    }

    #[test]
    fn uncertified_eps0_defaults_to_one() {
        let c = parse_config("mode = \"uncertified\"\n[profile]\nfamily = \"poly-bump\"\n").unwrap();
        assert_eq!(c.uncertified_eps0(), 1.0);
    }

    #[test]
    fn negative_n_reports_path() {
        let text = format!("{MINIMAL}[grid]\nn = -5\n");
        match parse_config(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "grid.n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}[control]\nsafty = 0.1\n");
        match parse_config(&text) {
            Err(Error::Config { path, message }) => {
                assert!(path.starts_with("control"), "{path}");
                assert!(message.contains("safty"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mode_consistency() {
        let text = "mode = \"certified\"\neps0 = 0.5\n[profile]\nfamily = \"poly-bump\"\n";
        assert!(matches!(parse_config(text), Err(Error::Config { path, .. }) if path == "eps0"));
        let text = "mode = \"uncertified\"\n[profile]\nfamily = \"poly-bump\"\n[overrides]\nbeta = 0.5\n";
        assert!(matches!(parse_config(text), Err(Error::Config { path, .. }) if path == "overrides"));
    }

    #[test]
    fn bad_family_and_values() {
        let text = "mode = \"uncertified\"\n[profile]\nfamily = \"gauss\"\n";
        assert!(matches!(parse_config(text), Err(Error::Config { path, .. }) if path == "profile"));
        let text = format!("{MINIMAL}[control]\nsafety = -1.0\n");
        assert!(matches!(parse_config(&text), Err(Error::Config { path, .. }) if path == "control.safety"));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}
