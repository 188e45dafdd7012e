//! Constant selection for the blowup proof and the monitors that check every
//! proved bound along a computed trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{FlowState, LagrangianGrid};

pub const BETA_START: f64 = 0.7;
pub const BETA_STEP: f64 = 0.05;
/// Upper end of the `beta` sweep.
pub const BETA_CEILING: f64 = 1.0 - 1e-3;

pub fn c_beta(beta: f64) -> f64 {
    beta * (beta + 1.0) / ((2.0 * beta + 1.0) * (1.0 - beta))
}

pub fn nu(beta: f64) -> f64 {
    2.0 * beta / (beta + 1.0)
}

/// Signed slacks of the three conditions and of `kappa > 2`. All must be
/// strictly positive for a certified run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargins {
    /// `kappa eps0^(1/beta) - eps0`
    pub condition1: f64,
    /// `1/2 - eps0^(1-beta)`
    pub condition2: f64,
    /// `ln(kappa)/kappa - 2 K1 / (K0 c_beta beta)`
    pub condition3: f64,
    /// `kappa - 2`
    pub kappa: f64,
}

impl ConditionMargins {
    pub fn all_positive(&self) -> bool {
        self.failures().is_empty()
    }

    /// Names of the conditions with nonpositive slack.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, v) in [
            ("condition 1 (eps0 <= kappa eps0^(1/beta))", self.condition1),
            ("condition 2 (eps0^(1-beta) <= 1/2)", self.condition2),
            ("condition 3 (2 K1/(K0 c_beta beta) < ln(kappa)/kappa)", self.condition3),
            ("kappa > 2", self.kappa),
        ] {
            if !(v > 0.0) {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedConstants {
    pub beta: f64,
    pub kappa: f64,
    pub eps0: f64,
    pub c_beta: f64,
    pub nu: f64,
    pub k0: f64,
    pub k1: f64,
    pub margins: ConditionMargins,
}

impl CertifiedConstants {
    /// Assembles constants and evaluates their margins, without any check.
    pub fn new(beta: f64, kappa: f64, eps0: f64, k0: f64, k1: f64) -> Self {
        let mut c = CertifiedConstants {
            beta,
            kappa,
            eps0,
            c_beta: c_beta(beta),
            nu: nu(beta),
            k0,
            k1,
            margins: ConditionMargins { condition1: 0.0, condition2: 0.0, condition3: 0.0, kappa: 0.0 },
        };
        c.margins = check_three_conditions(&c);
        c
    }

    /// Same constants with a different `eps0`, margins re-evaluated.
    pub fn with_eps0(&self, eps0: f64) -> Self {
        CertifiedConstants::new(self.beta, self.kappa, eps0, self.k0, self.k1)
    }

    /// Coefficient of `eps^beta` in the lower bound on `-eps_t`.
    pub fn rate_coefficient(&self) -> f64 {
        self.eps0 * self.eps0 * self.k0 * self.c_beta / (2.0 * self.kappa)
    }
}

/// Knobs of [`select_constants_with`]. Overrides bypass the recipe for the
/// corresponding constant; the result may then fail its conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Selection {
    /// Condition 3 must hold with `2 K1/(K0 c_beta beta) <= (1 - m) ln(kappa)/kappa`.
    pub condition3_margin: f64,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub eps0: Option<f64>,
}

pub fn select_constants(k0: f64, k1: f64) -> Result<CertifiedConstants> {
    select_constants_with(k0, k1, &Selection::default())
}

/// `beta` values tried in order: `0.7, 0.75, ..., 0.95`, then halving the
/// distance to 1 until the ceiling.
fn beta_candidates() -> impl Iterator<Item = f64> {
    let coarse = (0..)
        .map(|k| BETA_START + BETA_STEP * k as f64)
        .take_while(|&b| b < 1.0 - BETA_STEP / 2.0);
    let fine = (1..).map(|k| 1.0 - BETA_STEP * 0.5f64.powi(k)).take_while(|&b| b < BETA_CEILING);
    coarse.chain(fine)
}

pub fn select_constants_with(k0: f64, k1: f64, sel: &Selection) -> Result<CertifiedConstants> {
    if !(k0 > 0.0 && k1 >= k0 && k1.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < K0 <= K1, got K0 = {k0}, K1 = {k1}")));
    }
    let kappa = sel.kappa.unwrap_or(std::f64::consts::E);
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must exceed 1, got {kappa}")));
    }
    let lk = kappa.ln();
    let feasible = |beta: f64| {
        let lhs = 2.0 * k1 / (k0 * c_beta(beta) * beta);
        lhs <= (1.0 - sel.condition3_margin) * lk / kappa && lk > std::f64::consts::LN_2 / beta
    };
    let beta = match sel.beta {
        Some(b) => {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {b}")));
            }
            b
        }
        None => beta_candidates()
            .find(|&b| feasible(b))
            .ok_or(Error::ConstantsInfeasible { k0, k1 })?,
    };
    let eps0 = match sel.eps0 {
        Some(e) => e,
        None => {
            let lo = -beta * lk / (1.0 - beta);
            let hi = -std::f64::consts::LN_2 / (1.0 - beta);
            (0.5 * (lo + hi)).exp()
        }
    };
    if !(eps0 > 0.0 && eps0 <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps0 must lie in (0, 1], got {eps0}")));
    }
    Ok(CertifiedConstants::new(beta, kappa, eps0, k0, k1))
}

pub fn check_three_conditions(c: &CertifiedConstants) -> ConditionMargins {
    let (b, k, e) = (c.beta, c.kappa, c.eps0);
    ConditionMargins {
        condition1: k * e.powf(1.0 / b) - e,
        condition2: 0.5 - e.powf(1.0 - b),
        condition3: k.ln() / k - 2.0 * c.k1 / (c.k0 * c_beta(b) * b),
        kappa: k - 2.0,
    }
}

/// Accepted `(t, eps)` samples with the running integral of `1/eps`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpsHistory {
    t: Vec<f64>,
    eps: Vec<f64>,
    inv_integral: Vec<f64>,
}

impl EpsHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, eps: f64) {
        let acc = match (self.t.last(), self.eps.last(), self.inv_integral.last()) {
            (Some(&t0), Some(&e0), Some(&i0)) => i0 + 0.5 * (1.0 / e0 + 1.0 / eps) * (t - t0),
            _ => 0.0,
        };
        self.t.push(t);
        self.eps.push(eps);
        self.inv_integral.push(acc);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// `int_0^{t_k} 1/eps(s) ds` by the trapezoid rule.
    pub fn inv_integral(&self, k: usize) -> f64 {
        self.inv_integral[k]
    }

    /// `eps_t` at sample `k` from second-order differences: centered in the
    /// interior, one-sided at the ends. `None` with fewer than two samples.
    pub fn derivative(&self, k: usize) -> Option<f64> {
        let (t, e) = (&self.t, &self.eps);
        let n = t.len();
        if n < 2 || k >= n {
            return None;
        }
        if n == 2 {
            return Some((e[1] - e[0]) / (t[1] - t[0]));
        }
        let i = k.clamp(1, n - 2);
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let (s1, s2) = ((e[i] - e[i - 1]) / h1, (e[i + 1] - e[i]) / h2);
        let at = t[k] - t[i - 1];
        Some(s1 + (s2 - s1) / (h1 + h2) * (2.0 * at - h1))
    }
}

/// Slacks of every monitored bound at one accepted step. Each must be
/// nonnegative (up to tolerance) in a certified run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub t: f64,
    pub eps: f64,
    /// `l(t) = eps^beta`
    pub l_t: f64,
    /// `kappa eps - max phi` on the inner zone and its bracket.
    pub bootstrap_margin: f64,
    /// Exponential bound on `eta = phi/eps` minus the observed `eta`.
    pub eta_bound_margin: f64,
    /// `min (kappa x^(1/beta) - phi)` over nodes at or beyond `l(t)`.
    pub outer_bound_margin: f64,
    /// `-eps_t - c eps^beta` with `eps_t` from differences of the history.
    pub rate_margin: f64,
    /// Same, with the analytic `eps_t = eps I(0)` when supplied.
    pub rate_margin_analytic: Option<f64>,
}

impl MonitorReport {
    pub fn worst(&self) -> f64 {
        self.bootstrap_margin
            .min(self.eta_bound_margin)
            .min(self.outer_bound_margin)
            .min(self.rate_margin)
    }
}

/// Evaluates all monitors for `state`, which must be history sample `k`.
///
/// The inner zone `[0, l(t)]` is checked on every node inside it plus the
/// first node beyond it, so the continuum bound is bracketed. The bound on
/// `eta` at a node `x` is `exp(eps0^2 K1 max(l, x) int eps^-1)`.
pub fn monitor(
    grid: &LagrangianGrid,
    state: &FlowState,
    history: &EpsHistory,
    k: usize,
    constants: &CertifiedConstants,
    eps_t_analytic: Option<f64>,
) -> MonitorReport {
    let nodes = grid.nodes();
    let eps = state.eps();
    let beta = constants.beta;
    let kappa = constants.kappa;
    let l_t = eps.powf(beta);
    let hi = grid.first_at_or_above(l_t).min(nodes.len() - 1);
    let expo = constants.eps0 * constants.eps0 * constants.k1 * history.inv_integral(k);

    let mut max_inner = f64::NEG_INFINITY;
    let mut eta_margin = f64::INFINITY;
    for i in 0..=hi {
        let phi = state.phi[i];
        max_inner = max_inner.max(phi);
        let bound = (expo * l_t.max(nodes[i])).exp();
        eta_margin = eta_margin.min(bound - phi / eps);
    }
    let outer = nodes[hi..]
        .iter()
        .zip(&state.phi[hi..])
        .filter(|(&x, _)| x >= l_t)
        .map(|(&x, &phi)| kappa * x.powf(1.0 / beta) - phi)
        .fold(f64::INFINITY, f64::min);

    let rate_c = constants.rate_coefficient() * eps.powf(beta);
    let rate_margin = history.derivative(k).map_or(f64::NAN, |d| -d - rate_c);
    MonitorReport {
        t: state.t,
        eps,
        l_t,
        bootstrap_margin: kappa * eps - max_inner,
        eta_bound_margin: eta_margin,
        outer_bound_margin: outer,
        rate_margin,
        rate_margin_analytic: eps_t_analytic.map(|d| -d - rate_c),
    }
}

/// Constants of the cusp bound `theta(y, Ts) <= theta0(0) - c y^nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspBound {
    pub c: f64,
    pub nu: f64,
    /// Largest `y` where the bound is claimed, `Phi(1, t_stop)`; filled in
    /// once a trajectory exists.
    pub y_range_hint: Option<f64>,
}

pub fn cusp_bound_constant(c: &CertifiedConstants) -> CuspBound {
    let nu = nu(c.beta);
    let ratio = ((c.beta + 1.0) / (c.kappa * c.beta)).powf(nu);
    CuspBound { c: 0.5 * c.eps0 * c.eps0 * c.k0 * ratio, nu, y_range_hint: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{make_grid, GridSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn reference_selection() {
        let c = select_constants(5.8806, 6.0).unwrap();
        assert_relative_eq!(c.beta, 0.95, epsilon = 1e-12);
        assert_eq!(c.kappa, std::f64::consts::E);
        assert_relative_eq!(c.eps0.ln(), -16.4315, epsilon = 1e-3);
        assert_relative_eq!(c.c_beta, 12.7759, epsilon = 1e-3);
        assert_relative_eq!(c.nu, 0.974359, epsilon = 1e-6);
        assert!(c.margins.all_positive());
        let lhs = 2.0 * 6.0 / (5.8806 * c.c_beta * 0.95);
        assert_relative_eq!(lhs, 0.16813, epsilon = 1e-4);
        assert!(lhs < 1.0 / std::f64::consts::E);
    }

    #[test]
    fn beta_09_misses_condition3() {
        let lhs = 2.0 * 6.0 / (5.8806 * c_beta(0.9) * 0.9);
        assert!(lhs > 1.0 / std::f64::consts::E);
    }

    #[test]
    fn equal_bounds_move_past_half() {
        assert_relative_eq!(c_beta(0.5), 0.75);
        let c = select_constants(6.0, 6.0).unwrap();
        assert!(c.beta > 0.5 && c.margins.all_positive());
    }

    #[test]
    fn condition2_failure() {
        let c = CertifiedConstants::new(0.5, 2.5, 0.4, 5.0, 6.0);
        assert_relative_eq!(c.margins.condition2, 0.5 - 0.4f64.sqrt(), epsilon = 1e-15);
        assert!(c.margins.condition2 < -0.13);
        assert!(!c.margins.all_positive());
    }

    #[test]
    fn infeasible_ratio() {
        assert!(matches!(
            select_constants(1.0, 1e6),
            Err(Error::ConstantsInfeasible { .. })
        ));
        let low_kappa = Selection { kappa: Some(1.01), ..Default::default() };
        assert!(select_constants_with(5.8806, 6.0, &low_kappa).is_err());
    }

    #[test]
    fn overrides_are_used_verbatim() {
        let sel = Selection { beta: Some(0.5), eps0: Some(0.4), ..Default::default() };
        let c = select_constants_with(5.8806, 6.0, &sel).unwrap();
        assert_eq!((c.beta, c.eps0), (0.5, 0.4));
        assert!(c.margins.condition2 < 0.0);
    }

    #[test]
    fn cusp_constant_reference() {
        let c = CertifiedConstants::new(0.95, std::f64::consts::E, 1e-7, 5.8806, 6.0);
        let b = cusp_bound_constant(&c);
        assert_relative_eq!(b.nu, 1.9 / 1.95, epsilon = 1e-15);
        let prefactor = b.c / (0.5 * 1e-14 * 5.8806);
        assert_relative_eq!(prefactor, 0.7605, epsilon = 1e-4);
        let doubled = cusp_bound_constant(&CertifiedConstants { k0: 2.0 * 5.8806, ..c });
        assert_relative_eq!(doubled.c, 2.0 * b.c, max_relative = 1e-15);
    }

    #[test]
    fn history_integral_and_derivative() {
        let mut h = EpsHistory::new();
        for k in 0..=100 {
            let t = k as f64 * 0.009;
            h.push(t, (1.0 - t).powi(2));
        }
        for k in [0, 1, 50, 100] {
            let t = h.times()[k];
            assert_relative_eq!(h.derivative(k).unwrap(), -2.0 * (1.0 - t), epsilon = 1e-12);
        }
        // int_0^t (1-s)^-2 ds = t / (1 - t)
        assert_relative_eq!(h.inv_integral(100), 0.9 / 0.1, max_relative = 1e-2);
    }

    #[test]
    fn monitors_at_t0() {
        let c = CertifiedConstants::new(0.95, std::f64::consts::E, 1e-3, 5.8806, 6.0);
        let grid = make_grid(&GridSpec::new(1e3, 64)).unwrap();
        let state = FlowState::new(&grid, 0.0, vec![1e-3; 64]).unwrap();
        let mut h = EpsHistory::new();
        h.push(0.0, 1e-3);
        let m = monitor(&grid, &state, &h, 0, &c, Some(-3.2e-3));
        assert_relative_eq!(m.bootstrap_margin, (c.kappa - 1.0) * 1e-3, max_relative = 1e-14);
        assert_eq!(m.eta_bound_margin, 0.0);
        assert!(m.rate_margin.is_nan());
        assert!(m.rate_margin_analytic.unwrap() > 0.0);
    }

    #[test]
    fn stationary_rate_margin_is_negative() {
        let c = CertifiedConstants::new(0.95, std::f64::consts::E, 1e-3, 5.8806, 6.0);
        let grid = make_grid(&GridSpec::new(1e3, 64)).unwrap();
        let state = FlowState::new(&grid, 1.0, vec![1e-3; 64]).unwrap();
        let mut h = EpsHistory::new();
        h.push(0.0, 1e-3);
        h.push(1.0, 1e-3);
        let m = monitor(&grid, &state, &h, 1, &c, None);
        let expected = -c.rate_coefficient() * 1e-3f64.powf(0.95);
        assert_relative_eq!(m.rate_margin, expected, max_relative = 1e-14);
        assert!(m.rate_margin < 0.0);
    }

    proptest! {
        #[test]
        fn derived_constants_independent_path(beta in 0.01f64..0.99) {
            // nu = 1 - (1 - beta)/(1 + beta); c_beta via partial fractions
            let nu_alt = 1.0 - (1.0 - beta) / (1.0 + beta);
            prop_assert!((nu(beta) - nu_alt).abs() < 1e-15);
            prop_assert!(nu(beta) < 1.0);
            let cb_alt = (beta / (1.0 - beta)) * ((beta + 1.0) / (2.0 * beta + 1.0));
            prop_assert!((c_beta(beta) / cb_alt - 1.0).abs() < 1e-14);
        }

        #[test]
        fn selected_constants_pass(k0 in 1.0f64..10.0, spread in 1.0f64..1.5) {
            if let Ok(c) = select_constants(k0, k0 * spread) {
                prop_assert!(c.margins.all_positive());
                prop_assert!(c.beta < BETA_CEILING);
            }
        }
    }
}
