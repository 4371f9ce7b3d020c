//! Distributional residual of a discrete trajectory.
//!
//! For `φ(t, x) = θ(t) ψ(x)` with `θ(t) = (1 - t/T)²` the weak form reads
//!
//! ```text
//! ∫₀^T ∫ u φ_t + β(u) Δφ + D b(u) u · ∇φ dx dt + ∫ u₀ φ(0) dx = 0.
//! ```
//!
//! Time integrals use the left-endpoint rule on the step grid, space
//! integrals the midpoint rule on cell centres.

use crate::error::{Error, Result};
use crate::operator::FvOperator;
use crate::resolvent::Trajectory;

/// Tensor product of `(1 - ((x_a - c_a)/w)²)⁴` over the axes, zero outside the support.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpTest {
    pub center: Vec<f64>,
    pub width: f64,
}

fn bump_1d(s: f64) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - s * s;
    (q.powi(4), -8.0 * s * q.powi(3), -8.0 * q.powi(3) + 48.0 * s * s * q * q)
}

impl BumpTest {
    pub fn new(center: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("bad test function: center {center:?}, width {width}")));
        }
        Ok(Self { center, width })
    }

    /// `(ψ, ∇ψ, Δψ)` at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>, f64) {
        let d = x.len();
        let parts: Vec<(f64, f64, f64)> = (0..d).map(|a| bump_1d((x[a] - self.center[a]) / self.width)).collect();
        let w = self.width;
        let value: f64 = parts.iter().map(|p| p.0).product();
        let mut grad = vec![0.0; d];
        let mut lap = 0.0;
        for a in 0..d {
            let others: f64 = parts.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, p)| p.0).product();
            grad[a] = parts[a].1 / w * others;
            lap += parts[a].2 / (w * w) * others;
        }
        (value, grad, lap)
    }
}

/// `|residual|` for each test function. The trajectory must hold every step.
pub fn weak_residual(op: &FvOperator, traj: &Trajectory, tests: &[BumpTest]) -> Result<Vec<f64>> {
    let n = traj.diagnostics.len() - 1;
    if traj.snapshots.len() != n + 1 || traj.snapshots.iter().enumerate().any(|(k, (s, _))| *s != k) {
        return Err(Error::Config("weak residual needs snapshot_stride = 1".into()));
    }
    let d = op.grid.dimension();
    if tests.iter().any(|t| t.center.len() != d) {
        return Err(Error::GridMismatch("test function dimension differs from the grid".into()));
    }
    let h = traj.step_size;
    let t_final = h * n as f64;
    let vol = op.grid.cell_volume();
    let cs = &op.cs;

    // per cell: ψ, Δψ and D·∇ψ for every test function
    let mut x = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut table = vec![(0.0, 0.0, 0.0); op.grid.n_cells() * tests.len()];
    for c in 0..op.grid.n_cells() {
        op.grid.center(c, &mut x);
        cs.drift(&x, &mut drift);
        for (j, t) in tests.iter().enumerate() {
            let (v, g, lap) = t.eval(&x);
            let dg: f64 = drift.iter().zip(&g).map(|(a, b)| a * b).sum();
            table[c * tests.len() + j] = (v, lap, dg);
        }
    }

    let mut acc = vec![0.0; tests.len()];
    for (k, (_, u)) in traj.snapshots.iter().enumerate() {
        let t = k as f64 * h;
        let theta = (1.0 - t / t_final).powi(2);
        let dtheta = -2.0 * (1.0 - t / t_final) / t_final;
        let mut pair = vec![(0.0, 0.0); tests.len()];
        for (c, &ui) in u.values.iter().enumerate() {
            let beta = cs.beta(ui);
            let flux = cs.b(ui) * ui;
            for (j, p) in pair.iter_mut().enumerate() {
                let (v, lap, dg) = table[c * tests.len() + j];
                p.0 += ui * v;
                p.1 += beta * lap + flux * dg;
            }
        }
        for (j, (m, gen)) in pair.into_iter().enumerate() {
            if k == 0 {
                acc[j] += theta * m * vol;
            }
            if k < n {
                acc[j] += h * vol * (dtheta * m + theta * gen);
            }
        }
    }
    Ok(acc.into_iter().map(f64::abs).collect())
}
