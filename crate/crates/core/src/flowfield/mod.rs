//! Lagrangian state, the flow map by cumulative quadrature, and the nonlocal
//! velocity gradient together with its Eulerian counterpart.

mod grid;

pub use grid::{make_grid, GridSpec, LagrangianGrid, MIN_NODES};

use crate::error::{Error, Result};
use crate::profile::Forcing;

/// Snapshot of the stretching `phi = d Phi / dx` on the grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub phi: Vec<f64>,
    /// The flow map `Phi(x_i, t)`.
    pub flow: Vec<f64>,
}

impl FlowState {
    pub fn new(grid: &LagrangianGrid, t: f64, phi: Vec<f64>) -> Result<Self> {
        if phi.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "phi has {} values for {} nodes",
                phi.len(),
                grid.len()
            )));
        }
        if let Some(i) = phi.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidState(format!(
                "phi({:e}) = {:e} is not positive",
                grid.nodes()[i],
                phi[i]
            )));
        }
        let flow = cumulative_phi(grid.nodes(), &phi);
        Ok(FlowState { t, phi, flow })
    }

    /// `phi(x, 0) = eps0`.
    pub fn initial(grid: &LagrangianGrid, forcing: &Forcing) -> Self {
        let phi = vec![forcing.eps0(); grid.len()];
        let flow = cumulative_phi(grid.nodes(), &phi);
        FlowState { t: 0.0, phi, flow }
    }

    /// `eps(t) = phi(0, t)`.
    pub fn eps(&self) -> f64 {
        self.phi[0]
    }

    /// `Phi(x, t)` at any `x >= 0`: linear-in-phi interpolation inside the
    /// grid, and the closed form `Phi(a) + eps0 (x - a)` past its end.
    pub fn flow_at(&self, grid: &LagrangianGrid, forcing: &Forcing, x: f64) -> f64 {
        let nodes = grid.nodes();
        let last = nodes.len() - 1;
        if x >= nodes[last] {
            return self.flow[last] + forcing.eps0() * (x - nodes[last]);
        }
        let j = grid.first_at_or_above(x).max(1);
        let (x0, x1) = (nodes[j - 1], nodes[j]);
        let s = (x - x0) / (x1 - x0);
        let phi_x = self.phi[j - 1] + s * (self.phi[j] - self.phi[j - 1]);
        self.flow[j - 1] + 0.5 * (x - x0) * (self.phi[j - 1] + phi_x)
    }
}

/// Cumulative trapezoid integral `Phi(x_i) = int_0^{x_i} phi`, exact for
/// `phi` affine between nodes.
pub fn cumulative_phi(nodes: &[f64], phi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..nodes.len() {
        acc += 0.5 * (phi[i - 1] + phi[i]) * (nodes[i] - nodes[i - 1]);
        out.push(acc);
    }
    out
}

/// `I(x_i, t) = int_{x_i}^inf g'(z) / Phi(z, t) dz`; equals the Eulerian
/// velocity gradient `u_y` at `y = Phi(x_i, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGradient {
    pub values: Vec<f64>,
}

/// Grid and forcing bundled with the forcing sampled at the nodes, so that the
/// right-hand side can be evaluated repeatedly without re-sampling `g'`.
#[derive(Debug, Clone)]
pub struct FlowField {
    grid: LagrangianGrid,
    forcing: Forcing,
    dg: Vec<f64>,
    ddg0: f64,
    /// First node at or past the end of `supp g'`.
    support_index: usize,
}

impl FlowField {
    pub fn new(grid: LagrangianGrid, forcing: Forcing) -> Self {
        let dg = grid.nodes().iter().map(|&x| forcing.dg(x)).collect();
        let ddg0 = forcing.ddg(0.0);
        let support_index = grid.first_at_or_above(forcing.support_end());
        FlowField { grid, forcing, dg, ddg0, support_index }
    }

    pub fn grid(&self) -> &LagrangianGrid {
        &self.grid
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Writes `I(x_i)` into `out` given `phi` and `Phi` on the nodes.
    ///
    /// Trapezoid rule in the grid's generating coordinate, summed from the
    /// right. The integrand at `z = 0` is its removable limit
    /// `g''(0) / phi(0)`.
    pub fn velocity_gradient_into(&self, phi: &[f64], flow: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.grid.len();
        let nodes = self.grid.nodes();
        let jac = self.grid.jacobian();
        let cell = self.grid.cell_xi();
        let end = self.support_index.min(n - 1);
        for v in out[end..].iter_mut() {
            *v = 0.0;
        }
        let integrand = |i: usize| -> Result<f64> {
            if i == 0 {
                return Ok(self.ddg0 / phi[0]);
            }
            let d = self.dg[i];
            if d == 0.0 {
                return Ok(0.0);
            }
            if !(flow[i] > 0.0) {
                return Err(Error::InvalidState(format!(
                    "Phi({:e}) = {:e} is not positive",
                    nodes[i], flow[i]
                )));
            }
            Ok(d / flow[i])
        };
        let mut acc = 0.0;
        let mut right = if end >= 1 { integrand(end)? * jac[end] } else { 0.0 };
        for i in (1..end).rev() {
            let left = integrand(i)? * jac[i];
            acc += 0.5 * (left + right) * cell[i];
            out[i] = acc;
            right = left;
        }
        if end >= 1 {
            let f1 = integrand(1)?;
            acc += 0.5 * (integrand(0)? + f1) * cell[0];
            out[0] = acc;
        }
        Ok(())
    }

    pub fn velocity_gradient(&self, state: &FlowState) -> Result<VelocityGradient> {
        let mut values = vec![0.0; self.grid.len()];
        self.velocity_gradient_into(&state.phi, &state.flow, &mut values)?;
        Ok(VelocityGradient { values })
    }
}

/// Free-function form of [`FlowField::velocity_gradient`].
pub fn velocity_gradient(
    grid: &LagrangianGrid,
    state: &FlowState,
    forcing: &Forcing,
) -> Result<VelocityGradient> {
    FlowField::new(grid.clone(), *forcing).velocity_gradient(state)
}

/// `Phi(a, t)`; the drift identity says it equals `Phi(a, 0) - g(0) t`.
pub fn support_drift(state: &FlowState, _forcing: &Forcing) -> f64 {
    *state.flow.last().expect("state is never empty")
}

/// `|Phi(a, t) - Phi(a, 0) + g(0) t|`.
pub fn drift_residual(state: &FlowState, forcing: &Forcing, flow_a0: f64) -> f64 {
    (support_drift(state, forcing) - flow_a0 + forcing.g(0.0) * state.t).abs()
}

/// Centered finite-difference derivative on nonuniform nodes, second order,
/// with one-sided three-point formulas at both ends.
pub fn nonuniform_derivative(y: &[f64], v: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let s = (v[1] - v[0]) / (y[1] - y[0]);
            d[0] = s;
            d[1] = s;
        }
        return d;
    }
    // Newton form: exact zero on constants, exact on quadratics
    let quad = |h1: f64, h2: f64, s1: f64, s2: f64, at: f64| s1 + (s2 - s1) / (h1 + h2) * at;
    for i in 1..n - 1 {
        let (hm, hp) = (y[i] - y[i - 1], y[i + 1] - y[i]);
        let (s1, s2) = ((v[i] - v[i - 1]) / hm, (v[i + 1] - v[i]) / hp);
        d[i] = quad(hm, hp, s1, s2, hm);
    }
    let (h1, h2) = (y[1] - y[0], y[2] - y[1]);
    d[0] = quad(h1, h2, (v[1] - v[0]) / h1, (v[2] - v[1]) / h2, -h1);
    let (h1, h2) = (y[n - 2] - y[n - 3], y[n - 1] - y[n - 2]);
    let (s1, s2) = ((v[n - 2] - v[n - 3]) / h1, (v[n - 1] - v[n - 2]) / h2);
    d[n - 1] = quad(h1, h2, s1, s2, h1 + 2.0 * h2);
    d
}

/// The model Biot-Savart law `u_y(y) = int_y^inf theta_y(z) / z dz`,
/// evaluated on samples of `theta`.
///
/// `theta_y` comes from centered differences and the integral from the
/// trapezoid rule in `y`. Only differences of `theta` enter, so any constant
/// shift of `theta` may be passed; `theta - theta0(0)` (minus the depletion)
/// keeps the differences free of cancellation near the origin. The samples
/// must cover the support of `theta_y`.
pub fn eulerian_velocity_gradient(theta: &[f64], y: &[f64], y_eval: f64) -> Result<f64> {
    if !(y_eval > 0.0) {
        return Err(Error::InvalidArgument(format!("y_eval must be positive, got {y_eval}")));
    }
    if theta.len() != y.len() || y.len() < 3 {
        return Err(Error::InvalidArgument("need matching theta/y samples, at least 3".into()));
    }
    if y[0] < 0.0 || y.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("y samples must be nonnegative and increasing".into()));
    }
    let n = y.len();
    if y_eval >= y[n - 1] {
        return Ok(0.0);
    }
    let dtheta = nonuniform_derivative(y, theta);
    let k = y.partition_point(|&v| v <= y_eval);
    // y[k-1] <= y_eval < y[k]
    let d_eval = if k == 0 {
        dtheta[0]
    } else {
        let s = (y_eval - y[k - 1]) / (y[k] - y[k - 1]);
        dtheta[k - 1] + s * (dtheta[k] - dtheta[k - 1])
    };
    let mut acc = 0.5 * (d_eval / y_eval + dtheta[k] / y[k]) * (y[k] - y_eval);
    for i in k..n - 1 {
        acc += 0.5 * (dtheta[i] / y[i] + dtheta[i + 1] / y[i + 1]) * (y[i + 1] - y[i]);
    }
    Ok(acc)
}
