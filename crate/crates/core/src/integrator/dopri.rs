//! Dormand-Prince 5(4) with first-same-as-last.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Outcome of a trial step.
pub enum Trial {
    /// Fifth-order solution, its derivative (reusable as the next first
    /// stage), and the embedded error vector.
    Done { y: Vec<f64>, dy: Vec<f64>, err: Vec<f64> },
    /// A stage left the admissible set; the caller should shrink `dt`.
    Inadmissible,
}

/// Scratch space for the stages, reused across steps.
pub struct Dopri {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
}

impl Dopri {
    pub fn new(n: usize) -> Self {
        Dopri { k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n] }
    }

    /// One trial step from `(t, y)` with `dy0 = f(t, y)`.
    ///
    /// `f` writes the derivative into its output and returns `false` when
    /// its input is inadmissible.
    pub fn trial<F>(&mut self, f: &mut F, t: f64, y: &[f64], dy0: &[f64], dt: f64) -> Trial
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    {
        let n = y.len();
        self.k[0].copy_from_slice(dy0);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * self.k[j][i];
                }
                self.stage[i] = y[i] + dt * acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            if !f(t + C[s] * dt, &self.stage, &mut rest[0]) {
                return Trial::Inadmissible;
            }
        }
        // the last stage point is the fifth-order solution
        let y_new = self.stage.clone();
        let dy = self.k[6].clone();
        let err = (0..n)
            .map(|i| dt * (0..7).map(|s| E[s] * self.k[s][i]).sum::<f64>())
            .collect();
        Trial::Done { y: y_new, dy, err }
    }
}
