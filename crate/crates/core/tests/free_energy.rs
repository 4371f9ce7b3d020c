use std::sync::Arc;

use nfpe::coefficients::QuadraticPotential;
use nfpe::lyapunov::{entropy_production_on, rho_on_grid, v_lower_bound, HTheoremOptions};
use nfpe::{check_h_theorem, evolve, solve_mu, AppendixPotential, CoefficientSet, DensityField, EvolveOptions, FluxScheme, FvOperator, Grid};
use proptest::prelude::*;

fn quad_op(n: usize) -> FvOperator {
    let pot = Arc::new(QuadraticPotential { dimension: 1, scale: 0.5, offset: 1.0 });
    let cs = CoefficientSet::smooth_nonlinear(pot, 1.0, 2.0, 1.0, 2.0, 2.0).unwrap();
    FvOperator::new(cs, Arc::new(Grid::uniform_1d(-8.0, 8.0, n).unwrap()), FluxScheme::ExponentialFitting).unwrap()
}

fn appendix_linear_op(n: usize) -> FvOperator {
    let base = CoefficientSet::linear(Arc::new(AppendixPotential::new(1, 1.0, 1.0, 1.0).unwrap()));
    let cs = base.with_potential(Arc::new(AppendixPotential::for_coefficients(&base, 1.0).unwrap()));
    FvOperator::new(cs, Arc::new(Grid::uniform_1d(-15.0, 15.0, n).unwrap()), FluxScheme::ExponentialFitting).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dissipation_is_nonnegative(v in prop::collection::vec(0.0..4.0f64, 64)) {
        let op = quad_op(64);
        let u = DensityField::new(op.grid.clone(), v).unwrap();
        prop_assert!(entropy_production_on(&op, &u).unwrap() >= 0.0);
    }
}

#[test]
// Ψ squares an O(Δx²) face residual, so it falls like Δx⁴.
fn dissipation_at_equilibrium_vanishes_under_refinement() {
    let psi: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let op = quad_op(n);
            entropy_production_on(&op, &solve_mu(&op, 1.0).unwrap().field).unwrap()
        })
        .collect();
    for w in psi.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..20.0).contains(&ratio), "{psi:?}");
    }
}

#[test]
fn linear_gaussian_free_energy_strictly_decreases() {
    let op = appendix_linear_op(300);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| (-(x[0] - 2.0).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
    let traj = evolve(&op, &u0, 2.0, 40, &EvolveOptions::default()).unwrap();
    for w in traj.diagnostics.windows(2) {
        assert!(w[1].v < w[0].v, "V rose at step {}", w[1].step);
    }
    let rep = check_h_theorem(&traj, &HTheoremOptions { balance_certified: false, rho: Some(rho_on_grid(&op)) }).unwrap();
    assert!(rep.asserted && rep.passed(), "{:?}", rep.slack);
}

#[test]
fn free_energy_respects_its_lower_bound() {
    let op = quad_op(160);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| 2.0 * (-(x[0] + 3.0).powi(2) * 3.0).exp()).unwrap();
    let traj = evolve(&op, &u0, 3.0, 30, &EvolveOptions { snapshot_stride: 5, ..Default::default() }).unwrap();
    for (step, u) in &traj.snapshots {
        let lb = v_lower_bound(&op, u).unwrap();
        assert!(traj.diagnostics[*step].v >= lb, "step {step}: V {} < {lb}", traj.diagnostics[*step].v);
    }
}

#[test]
fn equilibrium_start_keeps_free_energy_flat() {
    let op = quad_op(128);
    let eq = solve_mu(&op, 2.0).unwrap();
    let traj = evolve(&op, &eq.field, 1.0, 20, &EvolveOptions::default()).unwrap();
    let rep = check_h_theorem(&traj, &HTheoremOptions { balance_certified: false, rho: Some(rho_on_grid(&op)) }).unwrap();
    let v0 = rep.v[0];
    assert!(rep.v.iter().all(|v| (v - v0).abs() <= 1e-10 * (1.0 + v0.abs())));
    // only the O(Δx²) residual dissipation of the discrete equilibrium shows up
    let psi = entropy_production_on(&op, &eq.field).unwrap();
    for (k, s) in rep.slack.iter().enumerate() {
        assert!((s + rep.t[k] * psi).abs() <= 1e-9, "k={k}: {s}");
    }
}

#[test]
fn report_without_finite_rho_is_not_asserted() {
    let op = quad_op(64);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| (-x[0] * x[0]).exp()).unwrap();
    let traj = evolve(&op, &u0, 0.5, 5, &EvolveOptions::default()).unwrap();
    let rep = check_h_theorem(&traj, &HTheoremOptions { balance_certified: false, rho: None }).unwrap();
    assert!(!rep.asserted && rep.passed());
    assert_eq!(rep.slack.len(), 6);
}
