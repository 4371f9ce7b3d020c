//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nfpe::appendix::{verify_balance_condition, AppendixPotential};
use nfpe::coefficients::{CoefficientSet, QuadraticPotential};
use nfpe::equilibrium::{convergence_to_equilibrium, solve_mu, stationarity_residual};
use nfpe::grid::{l1_distance, mass, DensityField, Grid};
use nfpe::lyapunov::{check_h_theorem, HTheoremOptions};
use nfpe::operator::{bernoulli, FluxScheme, FvOperator};
use nfpe::particles::{estimate_density, sample_from_density, simulate, Bandwidth, ParticleOptions};
use nfpe::resolvent::{evolve, evolve_with, resolvent_solve, Diagnostics, EvolveOptions, SolverOptions};
use nfpe::weak::{weak_residual, BumpTest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HALF_WIDTH: f64 = 20.0;
const CELLS: usize = 512;
const T_REF: f64 = 20.0;
const STEPS_REF: usize = 2000;

struct Outcome {
    passed: bool,
    detail: String,
}

fn placeholder() -> Arc<QuadraticPotential> {
    Arc::new(QuadraticPotential { dimension: 1, scale: 1.0, offset: 1.0 })
}

/// Nonlinear preset with its confining potential in dimension `d`.
fn nonlinear_cs(d: usize) -> CoefficientSet {
    let base = CoefficientSet::smooth_nonlinear(Arc::new(QuadraticPotential { dimension: d, scale: 1.0, offset: 1.0 }), 1.0, 2.0, 1.0, 2.0, 2.0).unwrap();
    let pot = AppendixPotential::for_coefficients(&base, 1.0).unwrap();
    base.with_potential(Arc::new(pot))
}

fn linear_cs() -> CoefficientSet {
    let base = CoefficientSet::linear(placeholder());
    let pot = AppendixPotential::for_coefficients(&base, 1.0).unwrap();
    base.with_potential(Arc::new(pot))
}

fn grid(half: f64, n: usize) -> Arc<Grid> {
    Arc::new(Grid::uniform_1d(-half, half, n).unwrap())
}

fn reference_op() -> FvOperator {
    FvOperator::new(nonlinear_cs(1), grid(HALF_WIDTH, CELLS), FluxScheme::default()).unwrap()
}

fn gaussian(g: &Arc<Grid>, center: f64, sigma: f64) -> DensityField {
    DensityField::from_fn(g.clone(), |x| (-(x[0] - center).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())).unwrap()
}

fn normalised(u: DensityField) -> DensityField {
    let m = mass(&u);
    u.scaled(1.0 / m)
}

/// Nonnegative field: a random mixture of bumps plus rough cell noise.
fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> DensityField {
    let bumps: Vec<(f64, f64, f64)> = (0..3).map(|_| (rng.random_range(-6.0..6.0), rng.random_range(0.5..2.0), rng.random_range(0.1..1.0))).collect();
    let mut u = DensityField::from_fn(g.clone(), |x| bumps.iter().map(|(c, s, w)| w * (-(x[0] - c).powi(2) / (2.0 * s * s)).exp()).sum()).unwrap();
    for v in u.values.iter_mut() {
        *v *= rng.random_range(0.5..1.5);
    }
    u
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn reference_run() -> (nfpe::resolvent::Trajectory, f64) {
    let op = reference_op();
    let u0 = gaussian(&op.grid, 0.0, 1.0);
    let start = Instant::now();
    let traj = evolve(&op, &u0, T_REF, STEPS_REF, &EvolveOptions::default()).unwrap();
    (traj, start.elapsed().as_secs_f64())
}

fn mass_conservation(traj: &nfpe::resolvent::Trajectory, secs: f64) -> Outcome {
    let m0 = traj.diagnostics[0].mass;
    let worst = traj.diagnostics.iter().map(|d| (d.mass - m0).abs() / m0).fold(0.0, f64::max);
    Outcome {
        passed: worst <= 1e-11 && secs <= 60.0,
        detail: format!("max relative drift {worst:.3e} (tol 1e-11), runtime {secs:.1} s (limit 60 s)"),
    }
}

fn positivity(traj: &nfpe::resolvent::Trajectory) -> Outcome {
    let min = traj.diagnostics.iter().map(|d| d.min_u).fold(f64::INFINITY, f64::min);
    Outcome {
        passed: min >= -1e-9,
        detail: format!("smallest cell value {min:.3e} (tol -1e-9)"),
    }
}

fn l1_contraction() -> Outcome {
    let op = reference_op();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let opts = EvolveOptions {
        diagnostics: Diagnostics::Basic,
        ..Default::default()
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let u0 = random_field(&op.grid, &mut rng);
        let v0 = random_field(&op.grid, &mut rng);
        let d0 = l1_distance(&u0, &v0).unwrap();
        let mut us = Vec::new();
        evolve_with(&op, &u0, 2.0, 100, &opts, |_, u| us.push(u.clone())).unwrap();
        let mut k = 0;
        evolve_with(&op, &v0, 2.0, 100, &opts, |_, v| {
            let ratio = l1_distance(&us[k], v).unwrap() / d0 - 1.0;
            worst = worst.max(ratio);
            k += 1;
        })
        .unwrap();
    }
    Outcome {
        passed: worst <= 1e-9,
        detail: format!("max over 20 pairs and all steps of d(t)/d(0) - 1 = {worst:.3e} (tol 1e-9)"),
    }
}

fn resolvent_identity() -> Outcome {
    let op = reference_op();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SolverOptions { tol: 1e-13, ..Default::default() };
    let h = 0.25;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f = random_field(&op.grid, &mut rng);
        // J_{2h} f = J_h(½ f + ½ J_{2h} f)
        let lhs = resolvent_solve(&op, 2.0 * h, &f, &opts).unwrap().solution;
        let mid: Vec<f64> = f.values.iter().zip(&lhs.values).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        let rhs = resolvent_solve(&op, h, &f.with_values(mid).unwrap(), &opts).unwrap().solution;
        worst = worst.max(l1_distance(&lhs, &rhs).unwrap());
    }
    Outcome {
        passed: worst <= 1e-8,
        detail: format!("max L1 gap {worst:.3e} over 5 fields (tol 1e-8)"),
    }
}

fn h_theorem(traj: &nfpe::resolvent::Trajectory) -> Outcome {
    let rep = check_h_theorem(traj, &HTheoremOptions { balance_certified: false, rho: None }).unwrap();
    let min_slack = rep.slack.iter().copied().fold(f64::INFINITY, f64::min);
    let worst_inc = rep.v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        passed: rep.monotone() && rep.energy_inequality_holds(),
        detail: format!(
            "largest V increase {worst_inc:.3e}, smallest energy slack {min_slack:.3e} (tol {:.3e})",
            rep.tolerance
        ),
    }
}

fn equilibrium_correctness() -> Outcome {
    let cs = linear_cs();
    let op = FvOperator::new(cs.clone(), grid(25.0, 640), FluxScheme::default()).unwrap();
    let eq = solve_mu(&op, 1.0).unwrap();
    let z: f64 = op.phi().iter().map(|p| (-p).exp()).sum::<f64>() * op.grid.cell_volume();
    let mu_gap = (eq.mu + z.ln()).abs();

    let nl = FvOperator::new(nonlinear_cs(1), grid(HALF_WIDTH, CELLS), FluxScheme::default()).unwrap();
    let sup_ok = [(&op, 1.0), (&nl, 1.0), (&nl, 5.0)].iter().all(|(o, m)| {
        let e = solve_mu(o, *m).unwrap();
        e.field.max() <= e.sup_bound
    });

    let residuals: Vec<f64> = [256, 512, 1024]
        .iter()
        .map(|&n| {
            let up = FvOperator::new(cs.clone(), grid(25.0, n), FluxScheme::Upwind).unwrap();
            stationarity_residual(&up, &solve_mu(&up, 1.0).unwrap()).unwrap()
        })
        .collect();
    let ratios: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let ratio_ok = ratios.iter().all(|r| (1.7..=2.3).contains(r));
    let sg = stationarity_residual(&op, &eq).unwrap();
    Outcome {
        passed: mu_gap <= 1e-10 && sup_ok && ratio_ok,
        detail: format!(
            "|mu + log Z| = {mu_gap:.3e}, sup bound {}, upwind residual ratios {:.3?}, exponential-fitting residual {sg:.1e}",
            if sup_ok { "holds" } else { "violated" },
            ratios
        ),
    }
}

fn convergence() -> Outcome {
    let op = reference_op();
    let opts = EvolveOptions {
        diagnostics: Diagnostics::Basic,
        ..Default::default()
    };
    let u0 = gaussian(&op.grid, 0.0, 1.0);
    let twin = normalised(DensityField::from_fn(op.grid.clone(), |x| (-(x[0].abs() - 3.0).powi(2)).exp()).unwrap());
    let a = convergence_to_equilibrium(&op, &u0, T_REF, STEPS_REF, &opts, 1e-3, false).unwrap();
    let b = convergence_to_equilibrium(&op, &twin, T_REF, STEPS_REF, &opts, 1e-3, false).unwrap();
    let gap = l1_distance(&a.final_field, &b.final_field).unwrap();
    Outcome {
        passed: a.passed && gap <= 2e-3,
        detail: format!(
            "distance to equilibrium at T=20: {:.3e} (tol 1e-3, eventually decreasing: {}); second datum {:.3e}; gap between them {gap:.3e} (tol 2e-3)",
            a.final_distance, a.eventually_decreasing, b.final_distance
        ),
    }
}

fn appendix_certification() -> Outcome {
    let mut ode_worst: f64 = 0.0;
    let mut balance = Vec::new();
    let mut cont_worst: f64 = 0.0;
    for d in 1..=3 {
        let cs = nonlinear_cs(d);
        let base = CoefficientSet::smooth_nonlinear(placeholder_d(d), 1.0, 2.0, 1.0, 2.0, 2.0).unwrap();
        let pot = AppendixPotential::for_coefficients(&base, 1.0).unwrap();
        let (a, delta) = (pot.alpha(), pot.delta());
        for i in 0..100 {
            let r = delta * 1.01 * (100.0 / (1.01 * delta)).powf(i as f64 / 99.0);
            let e = 1e-5 * r;
            let fd = (pot.h_closed_form(r + e).unwrap() - pot.h_closed_form(r - e).unwrap()) / (2.0 * e);
            let h = pot.h_closed_form(r).unwrap();
            ode_worst = ode_worst.max((fd - (a * h * h - (d as f64 - 1.0) * h / r)).abs());
        }
        let rep = verify_balance_condition(&pot, &cs, 10_000).unwrap();
        balance.push(rep.max_value);
        let above = f64::from_bits(delta.to_bits() + 1);
        cont_worst = cont_worst
            .max((pot.radial_value(above) - pot.radial_value(delta)).abs())
            .max((pot.radial_derivative(above) - pot.radial_derivative(delta)).abs());
    }
    let balance_max = balance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        passed: ode_worst <= 1e-6 && balance_max <= 1e-10 && cont_worst <= 1e-10,
        detail: format!(
            "ODE residual {ode_worst:.3e} (tol 1e-6); max of gamma1*Lap(Phi) - b0*|grad Phi|^2 for d=1,2,3: {:.3e} (tol 1e-10); jump at delta {cont_worst:.3e} (tol 1e-10)",
            balance_max
        ),
    }
}

fn placeholder_d(d: usize) -> Arc<QuadraticPotential> {
    Arc::new(QuadraticPotential { dimension: d, scale: 1.0, offset: 1.0 })
}

/// Thomas algorithm on the hand-assembled linear system.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn linear_solver_oracle() -> Outcome {
    let n = 512;
    let op = FvOperator::new(linear_cs(), grid(HALF_WIDTH, n), FluxScheme::default()).unwrap();
    let up = FvOperator::new(linear_cs(), grid(HALF_WIDTH, n), FluxScheme::Upwind).unwrap();
    let lambda = 0.3;
    let dx = op.grid.dx()[0];
    let phi = op.phi().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_field(&op.grid, &mut rng);
    let mut worst: f64 = 0.0;
    for (o, fitted) in [(&op, true), (&up, false)] {
        // face i+½ flux: p u_i - q u_{i+1}
        let (mut lower, mut diag, mut upper) = (vec![0.0; n], vec![1.0; n], vec![0.0; n]);
        for i in 0..n - 1 {
            let dphi = phi[i + 1] - phi[i];
            let (p, q) = if fitted {
                (bernoulli(dphi) / dx, bernoulli(-dphi) / dx)
            } else {
                let drift = -dphi / dx;
                (1.0 / dx + drift.max(0.0), 1.0 / dx - drift.min(0.0))
            };
            let s = lambda / dx;
            diag[i] += s * p;
            upper[i] -= s * q;
            lower[i + 1] -= s * p;
            diag[i + 1] += s * q;
        }
        let direct = thomas(&lower, &diag, &upper, &f.values);
        let newton = resolvent_solve(o, lambda, &f, &SolverOptions::default()).unwrap().solution;
        worst = worst.max(direct.iter().zip(&newton.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Outcome {
        passed: worst <= 1e-10,
        detail: format!("max-norm gap {worst:.3e} on {n} cells, both flux schemes (tol 1e-10)"),
    }
}

fn particle_consistency() -> Outcome {
    let start = Instant::now();
    let cs = linear_cs();
    let dx = 2.0 * HALF_WIDTH / CELLS as f64;
    let half = 25.0;
    let g = grid(half, (2.0 * half / dx).round() as usize);
    let op = FvOperator::new(cs.clone(), g.clone(), FluxScheme::default()).unwrap();
    let u0 = gaussian(&g, 1.5, 1.0);
    let pde = evolve(&op, &u0, 2.0, 200, &EvolveOptions { diagnostics: Diagnostics::Basic, ..Default::default() }).unwrap().last;
    let eq = solve_mu(&op, 1.0).unwrap().field;
    let n = 100_000;
    let opts = ParticleOptions {
        snapshot_every: 10,
        ..Default::default()
    };
    let mut forward = Vec::new();
    let mut invariance = Vec::new();
    for seed in 0..5u64 {
        let ens = sample_from_density(&u0, n, 100 + seed).unwrap();
        let out = simulate(&cs, &g, &ens, 2.0, 0.01, &opts).unwrap();
        forward.push(l1_distance(&out.kde_history.last().unwrap().1.field, &pde).unwrap());

        let ens = sample_from_density(&eq, n, 200 + seed).unwrap();
        let initial = l1_distance(&estimate_density(&g, &ens, Bandwidth::Silverman).unwrap().field, &eq).unwrap();
        let out = simulate(&cs, &g, &ens, 1.0, 0.01, &opts).unwrap();
        let worst = out.kde_history.iter().map(|(_, k)| l1_distance(&k.field, &eq).unwrap()).fold(0.0, f64::max);
        invariance.push(worst / initial);
    }
    let (f, i) = (median(forward), median(invariance));
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: f <= 0.05 && i <= 1.5 && secs <= 300.0,
        detail: format!("median L1(KDE, PDE) at T=2: {f:.4} (tol 0.05); median max-ratio L1(KDE, u_inf)/initial: {i:.3} (tol 1.5); runtime {secs:.0} s"),
    }
}

fn weak_form_order() -> Outcome {
    let tests = [BumpTest::new(vec![-1.0], 1.5).unwrap(), BumpTest::new(vec![0.5], 2.0).unwrap(), BumpTest::new(vec![2.0], 1.5).unwrap()];
    let opts = EvolveOptions {
        diagnostics: Diagnostics::Basic,
        ..Default::default()
    };
    let levels: Vec<Vec<f64>> = [(64, 20), (128, 40), (256, 80)]
        .iter()
        .map(|&(n, steps)| {
            let op = FvOperator::new(nonlinear_cs(1), grid(8.0, n), FluxScheme::default()).unwrap();
            let u0 = gaussian(&op.grid, 1.0, 0.8);
            let traj = evolve(&op, &u0, 1.0, steps, &opts).unwrap();
            weak_residual(&op, &traj, &tests).unwrap()
        })
        .collect();
    let orders: Vec<f64> = (0..tests.len()).map(|j| (levels[1][j] / levels[2][j]).log2()).collect();
    Outcome {
        passed: orders.iter().all(|p| (0.8..=1.3).contains(p)),
        detail: format!("observed orders {orders:.3?} (range 0.8..1.3); largest finest residual {:.2e}", levels[2].iter().cloned().fold(0.0, f64::max)),
    }
}

fn main() {
    let (traj, secs) = reference_run();
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("mass conservation", Box::new(|| mass_conservation(&traj, secs))),
        ("positivity", Box::new(|| positivity(&traj))),
        ("L1 contraction", Box::new(l1_contraction)),
        ("resolvent identity", Box::new(resolvent_identity)),
        ("H-theorem", Box::new(|| h_theorem(&traj))),
        ("equilibrium correctness", Box::new(equilibrium_correctness)),
        ("convergence to equilibrium", Box::new(convergence)),
        ("confining potential certification", Box::new(appendix_certification)),
        ("linear solver oracle", Box::new(linear_solver_oracle)),
        ("particle/PDE consistency", Box::new(particle_consistency)),
        ("weak-form consistency", Box::new(weak_form_order)),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let o = check();
        if !o.passed {
            failures += 1;
        }
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} criteria, {failures} failed", 11);
    if failures > 0 {
        std::process::exit(1);
    }
}
