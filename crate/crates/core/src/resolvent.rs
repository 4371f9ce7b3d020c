//! Resolvent `J_λ f = (I + λA_h)⁻¹ f` by damped Newton, and the implicit
//! Euler scheme `u^{k+1} + h A_h u^{k+1} = u^k` built on it.

use crate::error::{Error, Result};
use crate::grid::{l1_norm, mass, weighted_norm, DensityField};
use crate::lyapunov;
use crate::operator::FvOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged when `‖R‖_∞ ≤ tol·max(1, ‖f‖_∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Raise a positivity error when `f ≥ 0` but the solution dips below `-10·tol·scale`.
    pub check_positivity: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 30,
            check_positivity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSolveReport {
    pub solution: DensityField,
    pub iterations: usize,
    pub picard_steps: usize,
    pub residual: f64,
    pub mass_drift: f64,
    pub min_value: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `u + λA_h u = f`, starting from `f`.
pub fn resolvent_solve(op: &FvOperator, lambda: f64, f: &DensityField, opts: &SolverOptions) -> Result<ResolventSolveReport> {
    resolvent_solve_from(op, lambda, f, &f.values, opts)
}

/// As [`resolvent_solve`] with an explicit initial guess.
pub fn resolvent_solve_from(op: &FvOperator, lambda: f64, f: &DensityField, guess: &[f64], opts: &SolverOptions) -> Result<ResolventSolveReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("resolvent parameter must be positive, got {lambda}")));
    }
    if **f.grid() != *op.grid {
        return Err(Error::GridMismatch("right-hand side and operator live on different grids".into()));
    }
    let rhs = &f.values;
    let scale = inf_norm(rhs).max(1.0);
    let target = opts.tol * scale;
    let mut u = guess.to_vec();
    let mut r = op.resolvent_residual(&u, lambda, rhs)?;
    let mut rn = inf_norm(&r);
    let mut history = vec![rn];
    let mut stalls = 0;
    let mut picard_steps = 0;
    let mut iterations = 0;

    while rn > target {
        if iterations >= opts.max_iter {
            return Err(Error::SolverStagnation {
                iterations,
                last_residual: rn,
                history,
            });
        }
        iterations += 1;
        let mut accepted = false;
        if stalls < 2 {
            let jac = op.resolvent_matrix(&u, lambda, false);
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            if let Ok(delta) = jac.solve(&neg) {
                let mut t = 1.0;
                for _ in 0..=opts.max_halvings {
                    let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
                    if let Ok(rt) = op.resolvent_residual(&trial, lambda, rhs) {
                        let n = inf_norm(&rt);
                        if n <= (1.0 - 1e-4 * t) * rn {
                            u = trial;
                            r = rt;
                            rn = n;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            if !accepted {
                stalls += 1;
            }
        }
        if !accepted {
            // frozen-coefficient step: (I + λ L(u)) u_new = f
            let jac = op.resolvent_matrix(&u, lambda, true);
            let next = jac.solve(rhs)?;
            let rt = op.resolvent_residual(&next, lambda, rhs)?;
            u = next;
            r = rt;
            rn = inf_norm(&r);
            picard_steps += 1;
        }
        history.push(rn);
    }

    let solution = f.with_values(u)?;
    let (min_value, cell) = solution.min();
    if opts.check_positivity && rhs.iter().all(|&v| v >= 0.0) && min_value < -10.0 * target {
        return Err(Error::PositivityViolation { min_value, cell, lambda });
    }
    let mass_drift = mass(&solution) - mass(f);
    Ok(ResolventSolveReport {
        solution,
        iterations,
        picard_steps,
        residual: rn,
        mass_drift,
        min_value,
    })
}

/// Which per-step quantities [`evolve`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagnostics {
    /// Mass, norms and solver statistics.
    Basic,
    /// Additionally entropy, energy, V and Ψ.
    #[default]
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub solver: SolverOptions,
    pub diagnostics: Diagnostics,
    /// Keep every `snapshot_stride`-th field (the last one is always kept).
    pub snapshot_stride: usize,
    /// How many times a step may be split in half after a positivity violation.
    pub max_step_splits: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            diagnostics: Diagnostics::Full,
            snapshot_stride: 1,
            max_step_splits: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub l1: f64,
    pub weighted_norm: f64,
    pub entropy: f64,
    pub energy: f64,
    pub v: f64,
    pub psi: f64,
    pub min_u: f64,
    pub newton_iterations: usize,
    pub residual: f64,
    /// Smallest resolvent parameter used within this step.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step_size: f64,
    /// Diagnostics for steps `0..=n` (entry 0 is the initial datum).
    pub diagnostics: Vec<StepDiagnostics>,
    /// `(step, field)` pairs.
    pub snapshots: Vec<(usize, DensityField)>,
    pub last: DensityField,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.t).collect()
    }

    pub fn initial(&self) -> &DensityField {
        &self.snapshots[0].1
    }
}

fn diagnose(op: &FvOperator, step: usize, t: f64, u: &DensityField, level: Diagnostics, iters: usize, residual: f64, lambda: f64) -> Result<StepDiagnostics> {
    let (entropy, energy, v, psi) = match level {
        Diagnostics::Basic => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        Diagnostics::Full => {
            let (s, e, v) = lyapunov::entropy_energy_on(op, u)?;
            (s, e, v, lyapunov::entropy_production_on(op, u)?)
        }
    };
    Ok(StepDiagnostics {
        step,
        t,
        mass: mass(u),
        l1: l1_norm(u),
        weighted_norm: weighted_norm(u, op.phi())?,
        entropy,
        energy,
        v,
        psi,
        min_u: u.min().0,
        newton_iterations: iters,
        residual,
        lambda,
    })
}

/// Advances one implicit step of size `h`, halving on positivity violations.
fn advance(op: &FvOperator, h: f64, u: &DensityField, opts: &EvolveOptions, splits_left: usize) -> Result<(DensityField, usize, f64, f64)> {
    match resolvent_solve(op, h, u, &opts.solver) {
        Ok(rep) => Ok((rep.solution, rep.iterations, rep.residual, h)),
        Err(Error::PositivityViolation { .. }) if splits_left > 0 => {
            let (mid, i1, _, l1) = advance(op, 0.5 * h, u, opts, splits_left - 1)?;
            let (end, i2, r2, l2) = advance(op, 0.5 * h, &mid, opts, splits_left - 1)?;
            Ok((end, i1 + i2, r2, l1.min(l2)))
        }
        Err(e) => Err(e),
    }
}

/// `n_steps` implicit Euler steps of size `T/n_steps`.
pub fn evolve(op: &FvOperator, u0: &DensityField, t_final: f64, n_steps: usize, opts: &EvolveOptions) -> Result<Trajectory> {
    evolve_with(op, u0, t_final, n_steps, opts, |_, _| {})
}

/// As [`evolve`], calling `observer(diagnostics, field)` after every step (including step 0).
pub fn evolve_with<F>(op: &FvOperator, u0: &DensityField, t_final: f64, n_steps: usize, opts: &EvolveOptions, mut observer: F) -> Result<Trajectory>
where
    F: FnMut(&StepDiagnostics, &DensityField),
{
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Config(format!("final time must be positive, got {t_final}")));
    }
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be >= 1".into()));
    }
    if **u0.grid() != *op.grid {
        return Err(Error::GridMismatch("initial datum and operator live on different grids".into()));
    }
    let h = t_final / n_steps as f64;
    let stride = opts.snapshot_stride.max(1);
    let d0 = diagnose(op, 0, 0.0, u0, opts.diagnostics, 0, 0.0, h)?;
    observer(&d0, u0);
    let mut traj = Trajectory {
        step_size: h,
        diagnostics: vec![d0],
        snapshots: vec![(0, u0.clone())],
        last: u0.clone(),
    };
    let mut u = u0.clone();
    for k in 1..=n_steps {
        let step = advance(op, h, &u, opts, opts.max_step_splits).and_then(|(next, iters, res, lam)| {
            let d = diagnose(op, k, k as f64 * h, &next, opts.diagnostics, iters, res, lam)?;
            Ok((next, d))
        });
        let (next, d) = match step {
            Ok(v) => v,
            Err(e) => {
                traj.last = u;
                return Err(Error::Evolve {
                    step: k,
                    partial: Box::new(traj),
                    source: Box::new(e),
                });
            }
        };
        observer(&d, &next);
        traj.diagnostics.push(d);
        if k % stride == 0 || k == n_steps {
            traj.snapshots.push((k, next.clone()));
        }
        u = next;
    }
    traj.last = u;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBoundReport {
    /// True when the balance condition was certified and the contraction bound was checked.
    pub contraction_mode: bool,
    pub rho: f64,
    pub initial_norm: f64,
    /// `bound_k - ‖u(t_k)‖` per step; negative entries are violations.
    pub slack: Vec<f64>,
    pub passed: bool,
}

/// Checks `‖u(t_k)‖ ≤ ‖u_0‖ + k·tol` (when the balance condition is certified)
/// or `‖u(t_k)‖ ≤ ‖u_0‖ + ρ t_k |u_0|_1 + k·tol` otherwise.
pub fn check_weighted_bound(traj: &Trajectory, balance_certified: bool, rho: Option<f64>, solver_tol: f64) -> Result<WeightedBoundReport> {
    let d0 = traj.diagnostics[0];
    let rho = match (balance_certified, rho) {
        (true, _) => 0.0,
        (false, Some(r)) if r.is_finite() => r,
        _ => return Err(Error::Config("weighted bound needs either the balance condition or a finite rho".into())),
    };
    let slack: Vec<f64> = traj
        .diagnostics
        .iter()
        .map(|d| {
            let bound = if balance_certified {
                d0.weighted_norm * (1.0 + 1e-9) + d.step as f64 * solver_tol
            } else {
                d0.weighted_norm + rho * d.t * d0.l1 + d.step as f64 * solver_tol
            };
            bound - d.weighted_norm
        })
        .collect();
    let passed = slack.iter().all(|&s| s >= 0.0);
    Ok(WeightedBoundReport {
        contraction_mode: balance_certified,
        rho,
        initial_norm: d0.weighted_norm,
        slack,
        passed,
    })
}
