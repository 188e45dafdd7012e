use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 16;

/// Parameters of the graded Lagrangian grid.
///
/// Nodes past the origin are equally spaced in the coordinate
/// `xi(x) = ln(x / x_min) + grading * x / a`, which is logarithmic near the
/// origin and uniform near `a`. `grading = 0` gives a pure geometric grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub a: f64,
    pub n: usize,
    pub grading: f64,
    /// `x_min = a * x_min_factor`.
    pub x_min_factor: f64,
}

impl GridSpec {
    pub fn new(a: f64, n: usize) -> Self {
        GridSpec { a, n, grading: 10.0, x_min_factor: 1e-12 }
    }

    pub fn with_grading(self, grading: f64) -> Self {
        GridSpec { grading, ..self }
    }
}

/// Strictly increasing nodes `0 = x_0 < x_1 < ... < x_{N-1} = a`, together
/// with the generating coordinate used by the outer quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianGrid {
    nodes: Vec<f64>,
    /// `dx/dxi` at each node (unused at node 0).
    jacobian: Vec<f64>,
    /// Width in `xi` of each cell `[x_i, x_{i+1}]` for `i >= 1`; entry 0 is
    /// the physical width of the first cell.
    cell_xi: Vec<f64>,
}

impl LagrangianGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.nodes.last().expect("grid is never empty")
    }

    pub(crate) fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }

    pub(crate) fn cell_xi(&self) -> &[f64] {
        &self.cell_xi
    }

    /// Builds a grid on arbitrary strictly increasing nodes starting at 0.
    /// The generating coordinate is `x` itself, so the outer quadrature
    /// reduces to the ordinary trapezoid rule.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::InvalidArgument(
                "grid needs at least two nodes, the first at 0".into(),
            ));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid nodes must strictly increase".into()));
        }
        let jacobian = vec![1.0; nodes.len()];
        let cell_xi = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(LagrangianGrid { nodes, jacobian, cell_xi })
    }

    /// Index of the first node `>= x`, or `len()` if none.
    pub fn first_at_or_above(&self, x: f64) -> usize {
        self.nodes.partition_point(|&n| n < x)
    }
}

pub fn make_grid(spec: &GridSpec) -> Result<LagrangianGrid> {
    let GridSpec { a, n, grading, x_min_factor } = *spec;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidArgument(format!("grid extent a must be positive, got {a}")));
    }
    if n < MIN_NODES {
        return Err(Error::InvalidArgument(format!(
            "grid needs N >= {MIN_NODES} nodes, got {n}"
        )));
    }
    if !(grading.is_finite() && grading >= 0.0) {
        return Err(Error::InvalidArgument(format!("grading must be >= 0, got {grading}")));
    }
    if !(x_min_factor > 0.0 && x_min_factor < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "x_min_factor must lie in (0, 1), got {x_min_factor}"
        )));
    }
    let x_min = a * x_min_factor;
    let log_span = -x_min_factor.ln();
    // xi measured from x_min, in terms of u = ln(x / x_min)
    let xi_of_u = |u: f64| u + grading * x_min_factor * u.exp();
    let xi_end = log_span + grading;
    let xi_start = grading * x_min_factor;
    let cells = (n - 2) as f64;

    let mut nodes = Vec::with_capacity(n);
    nodes.push(0.0);
    nodes.push(x_min);
    let mut u = 0.0f64;
    for k in 1..n - 2 {
        let target = xi_start + (xi_end - xi_start) * k as f64 / cells;
        // xi_of_u is convex and increasing, so Newton from the previous
        // root approaches monotonically from below.
        for _ in 0..100 {
            let f = xi_of_u(u) - target;
            let df = 1.0 + grading * x_min_factor * u.exp();
            let step = f / df;
            u -= step;
            if step.abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
                break;
            }
        }
        nodes.push(x_min * u.exp());
    }
    nodes.push(a);

    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(format!(
            "grid with N = {n} does not resolve distinct nodes; reduce N or widen x_min_factor"
        )));
    }

    let jacobian: Vec<f64> = nodes
        .iter()
        .map(|&x| if x > 0.0 { 1.0 / (1.0 / x + grading / a) } else { 0.0 })
        .collect();
    let xi = |x: f64| (x / x_min).ln() + grading * x / a;
    let mut cell_xi = Vec::with_capacity(n - 1);
    cell_xi.push(nodes[1] - nodes[0]);
    for w in nodes[1..].windows(2) {
        cell_xi.push(xi(w[1]) - xi(w[0]));
    }
    Ok(LagrangianGrid { nodes, jacobian, cell_xi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_contract() {
        let g = make_grid(&GridSpec::new(1.0, 16)).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[1], 1e-12);
        assert_eq!(g.last(), 1.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn certified_extent() {
        let g = make_grid(&GridSpec::new(1e7, 4096)).unwrap();
        assert_eq!(g.last(), 1e7);
        assert_eq!(g.len(), 4096);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_grid(&GridSpec::new(1.0, 15)).is_err());
        assert!(make_grid(&GridSpec::new(0.0, 64)).is_err());
        assert!(make_grid(&GridSpec::new(1.0, 64).with_grading(-1.0)).is_err());
        assert!(LagrangianGrid::from_nodes(vec![0.0, 1.0, 1.0]).is_err());
        assert!(LagrangianGrid::from_nodes(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn uniform_in_generating_coordinate() {
        for &grading in &[0.0, 10.0] {
            let g = make_grid(&GridSpec::new(3.0, 300).with_grading(grading)).unwrap();
            let w = &g.cell_xi()[1..];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            assert!(w.iter().all(|c| (c / mean - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn doubling_refines_every_decade() {
        let coarse = make_grid(&GridSpec::new(1.0, 256)).unwrap();
        let fine = make_grid(&GridSpec::new(1.0, 512)).unwrap();
        for d in 0..12 {
            let lo = 10f64.powi(-12 + d);
            let hi = lo * 10.0;
            let count = |g: &LagrangianGrid| g.nodes().iter().filter(|&&x| x >= lo && x < hi).count();
            assert!(count(&fine) > count(&coarse), "decade {d}");
        }
    }

    #[test]
    fn pure_log_grid_is_geometric() {
        let g = make_grid(&GridSpec::new(1.0, 130).with_grading(0.0)).unwrap();
        let ratio = (1e12f64).powf(1.0 / 128.0);
        for w in g.nodes()[1..].windows(2) {
            assert!((w[1] / w[0] / ratio - 1.0).abs() < 1e-12);
        }
    }
}
