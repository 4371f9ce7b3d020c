//! Free energy `V(u) = Σ η(u) + Σ Φu = -S[u] + E[u]`, entropy production Ψ and
//! the discrete H-theorem checks.

use std::f64::consts::E;

use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{DensityField, Face};
use crate::operator::{FluxScheme, FvOperator};
use crate::resolvent::Trajectory;

/// Cells below `-NEGATIVE_TOL` are rejected by the entropy functionals.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Faces whose two neighbours are both below this carry no entropy production.
pub const VACUUM: f64 = 1e-14;
const PARALLEL_CELLS: usize = 2048;

fn clamp_nonnegative(u: &DensityField) -> Result<Vec<f64>> {
    let (min, cell) = u.min();
    if min < -NEGATIVE_TOL {
        return Err(Error::Domain(format!("entropy needs u >= 0, found {min:.3e} in cell {cell}")));
    }
    Ok(u.values.iter().map(|v| v.max(0.0)).collect())
}

fn map_cells(u: &[f64], f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    if u.len() >= PARALLEL_CELLS {
        u.par_iter().map(|&v| f(v)).collect()
    } else {
        u.iter().map(|&v| f(v)).collect()
    }
}

/// `(S, E, V)` with Φ taken from the operator's cell-centre values.
pub fn entropy_energy_on(op: &FvOperator, u: &DensityField) -> Result<(f64, f64, f64)> {
    let vals = clamp_nonnegative(u)?;
    let vol = u.grid().cell_volume();
    let eta = map_cells(&vals, |v| op.cs.eta(v))?;
    let s = -eta.iter().sum::<f64>() * vol;
    let e = vals.iter().zip(op.phi()).map(|(v, p)| v * p).sum::<f64>() * vol;
    Ok((s, e, e - s))
}

pub fn entropy_energy(cs: &CoefficientSet, u: &DensityField) -> Result<(f64, f64, f64)> {
    entropy_energy_on(&FvOperator::new(cs.clone(), u.grid().clone(), FluxScheme::default())?, u)
}

fn face_production(op: &FvOperator, f: &Face, ul: f64, ur: f64, gradient: f64) -> f64 {
    if ul <= VACUUM && ur <= VACUUM {
        return 0.0;
    }
    let ubar = 0.5 * (ul + ur);
    let t = gradient - op.face_drift(f) * (ubar * op.cs.b(ubar)).sqrt();
    t * t * f.area * f.dx
}

/// Ψ in the form `Σ_faces |(j(u_R) - j(u_L))/Δx - D_f sqrt(ū b(ū))|² · face volume`.
pub fn entropy_production_on(op: &FvOperator, u: &DensityField) -> Result<f64> {
    let vals = clamp_nonnegative(u)?;
    let j = map_cells(&vals, |v| op.cs.j(v))?;
    Ok(op
        .grid
        .faces()
        .iter()
        .map(|f| face_production(op, f, vals[f.left], vals[f.right], (j[f.right] - j[f.left]) / f.dx))
        .sum())
}

pub fn entropy_production(cs: &CoefficientSet, u: &DensityField) -> Result<f64> {
    entropy_production_on(&FvOperator::new(cs.clone(), u.grid().clone(), FluxScheme::default())?, u)
}

/// Ψ with the diffusive velocity written as `β'(ū)∇u/sqrt(ū b(ū))`.
pub fn entropy_production_beta_form(op: &FvOperator, u: &DensityField) -> Result<f64> {
    let vals = clamp_nonnegative(u)?;
    Ok(op
        .grid
        .faces()
        .iter()
        .map(|f| {
            let (ul, ur) = (vals[f.left], vals[f.right]);
            let ubar = 0.5 * (ul + ur);
            let w = (ubar * op.cs.b(ubar)).sqrt();
            let grad = if w > 0.0 { op.cs.beta_prime(ubar) * (ur - ul) / f.dx / w } else { 0.0 };
            face_production(op, f, ul, ur, grad)
        })
        .sum())
}

/// `C_α = sup_{0<r<1} r^{1-α}|log r| = 1/(e(1-α))`.
pub fn c_alpha(alpha: f64) -> f64 {
    1.0 / (E * (1.0 - alpha))
}

/// `α = m/(m+1)`.
pub fn tail_exponent(cs: &CoefficientSet) -> f64 {
    let m = cs.constants.m;
    m / (m + 1.0)
}

/// Both sides of `∫_{Φ≥R}|min(u log u, 0)| ≤ C_α (∫_{Φ≥R} Φ^{-m})^{1-α} ‖u‖^α`.
pub fn tail_entropy_sides(op: &FvOperator, u: &DensityField, r: f64) -> Result<(f64, f64)> {
    let vals = clamp_nonnegative(u)?;
    let vol = u.grid().cell_volume();
    let m = op.cs.constants.m;
    let alpha = tail_exponent(&op.cs);
    let (mut lhs, mut z, mut norm) = (0.0, 0.0, 0.0);
    for (&v, &p) in vals.iter().zip(op.phi()) {
        if p >= r {
            if v > 0.0 {
                lhs += (v * v.ln()).min(0.0).abs() * vol;
            }
            z += p.powf(-m) * vol;
        }
        norm += p * v * vol;
    }
    Ok((lhs, c_alpha(alpha) * z.powf(1.0 - alpha) * norm.powf(alpha)))
}

/// Lower bound `‖u‖ - κ₁|u|₁ - κ₁ C_α Z^{1-α} ‖u‖^α` on V, with `κ₁ = γ₁/b₀`
/// and `Z = Σ Φ^{-m}·vol`.
pub fn v_lower_bound(op: &FvOperator, u: &DensityField) -> Result<f64> {
    let vals = clamp_nonnegative(u)?;
    let vol = u.grid().cell_volume();
    let c = op.cs.constants;
    let kappa1 = c.gamma1 / c.b0;
    let alpha = tail_exponent(&op.cs);
    let z: f64 = op.phi().iter().map(|p| p.powf(-c.m)).sum::<f64>() * vol;
    let l1: f64 = vals.iter().sum::<f64>() * vol;
    let norm: f64 = vals.iter().zip(op.phi()).map(|(v, p)| v * p).sum::<f64>() * vol;
    Ok(norm - kappa1 * l1 - kappa1 * c_alpha(alpha) * z.powf(1.0 - alpha) * norm.powf(alpha))
}

/// `γ₁(m+1)|ΔΦ|_∞ + |b|_∞(1+m)²|D|²_∞` over the cell centres.
pub fn rho_on_grid(op: &FvOperator) -> f64 {
    let c = op.cs.constants;
    let d = op.grid.dimension();
    let mut grad = vec![0.0; d];
    let mut x = vec![0.0; d];
    let (mut lap, mut drift2): (f64, f64) = (0.0, 0.0);
    for cell in 0..op.grid.n_cells() {
        op.grid.center(cell, &mut x);
        lap = lap.max(op.cs.laplacian_phi(&x).abs());
        op.cs.potential.gradient(&x, &mut grad);
        drift2 = drift2.max(grad.iter().map(|g| g * g).sum());
    }
    c.gamma1 * (c.m + 1.0) * lap + c.b_sup * (1.0 + c.m).powi(2) * drift2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HTheoremOptions {
    /// The balance condition was certified for this coefficient set.
    pub balance_certified: bool,
    /// Finite ρ on the computational box, if known.
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub t: Vec<f64>,
    pub entropy: Vec<f64>,
    pub energy: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    /// Per-step tolerance `1e-8·(1+|V(t₀)|)`.
    pub tolerance: f64,
    /// `(k, V(t_k) - V(t_{k-1}) - tol)` for every increase beyond tolerance.
    pub monotonicity_violations: Vec<(usize, f64)>,
    /// `V(t₀) - V(t_k) - h Σ_{j=1..k} Ψ(u_j)`; the inequality holds when every entry is `>= -tolerance`.
    pub slack: Vec<f64>,
    /// The same with the dissipation sum taken over `j = 0..k-1`.
    pub slack_left: Vec<f64>,
    /// Whether the inequalities are asserted (ρ finite or balance certified) or only reported.
    pub asserted: bool,
}

impl LyapunovReport {
    pub fn monotone(&self) -> bool {
        self.monotonicity_violations.is_empty()
    }

    pub fn energy_inequality_holds(&self) -> bool {
        self.slack.iter().all(|&s| s >= -self.tolerance)
    }

    pub fn passed(&self) -> bool {
        !self.asserted || (self.monotone() && self.energy_inequality_holds())
    }
}

/// Evaluates the monotonicity of V and the discrete energy inequality along a
/// trajectory recorded with full diagnostics.
pub fn check_h_theorem(traj: &Trajectory, opts: &HTheoremOptions) -> Result<LyapunovReport> {
    let d = &traj.diagnostics;
    if d.iter().any(|s| s.v.is_nan() || s.psi.is_nan()) {
        return Err(Error::Config("trajectory was recorded without entropy diagnostics".into()));
    }
    let h = traj.step_size;
    let v0 = d[0].v;
    let tol = 1e-8 * (1.0 + v0.abs());
    let mut violations = Vec::new();
    let mut slack = Vec::with_capacity(d.len());
    let mut slack_left = Vec::with_capacity(d.len());
    let (mut diss, mut diss_left) = (0.0, 0.0);
    for (k, s) in d.iter().enumerate() {
        if k > 0 {
            let inc = s.v - d[k - 1].v;
            if inc > tol {
                violations.push((k, inc - tol));
            }
            diss += h * s.psi;
            diss_left += h * d[k - 1].psi;
        }
        slack.push(v0 - s.v - diss);
        slack_left.push(v0 - s.v - diss_left);
    }
    Ok(LyapunovReport {
        t: d.iter().map(|s| s.t).collect(),
        entropy: d.iter().map(|s| s.entropy).collect(),
        energy: d.iter().map(|s| s.energy).collect(),
        v: d.iter().map(|s| s.v).collect(),
        psi: d.iter().map(|s| s.psi).collect(),
        tolerance: tol,
        monotonicity_violations: violations,
        slack,
        slack_left,
        asserted: opts.balance_certified || opts.rho.is_some_and(f64::is_finite),
    })
}
