use std::sync::Arc;

use nfpe::coefficients::QuadraticPotential;
use nfpe::lyapunov::rho_on_grid;
use nfpe::resolvent::{check_weighted_bound, Diagnostics};
use nfpe::{evolve, l1_distance, mass, resolvent_solve, solve_mu, CoefficientSet, DensityField, EvolveOptions, FluxScheme, FvOperator, Grid, SolverOptions};
use proptest::prelude::*;

const N: usize = 48;

fn op(scheme: FluxScheme, n: usize) -> FvOperator {
    let pot = Arc::new(QuadraticPotential { dimension: 1, scale: 0.5, offset: 1.0 });
    let cs = CoefficientSet::smooth_nonlinear(pot, 1.0, 2.0, 1.0, 2.0, 2.0).unwrap();
    FvOperator::new(cs, Arc::new(Grid::uniform_1d(-6.0, 6.0, n).unwrap()), scheme).unwrap()
}

fn field(op: &FvOperator, v: Vec<f64>) -> DensityField {
    DensityField::new(op.grid.clone(), v).unwrap()
}

fn strict() -> SolverOptions {
    SolverOptions { tol: 1e-13, ..Default::default() }
}

fn scheme() -> impl Strategy<Value = FluxScheme> {
    prop_oneof![Just(FluxScheme::ExponentialFitting), Just(FluxScheme::Upwind)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolvent_conserves_mass(s in scheme(), f in prop::collection::vec(0.0..3.0f64, N), lambda in 0.01..2.0f64) {
        let op = op(s, N);
        let f = field(&op, f);
        let u = resolvent_solve(&op, lambda, &f, &strict()).unwrap().solution;
        let m = mass(&f);
        prop_assert!((mass(&u) - m).abs() <= 1e-12 * m.max(1.0));
    }

    #[test]
    fn resolvent_contracts_in_l1(s in scheme(), f in prop::collection::vec(0.0..3.0f64, N), g in prop::collection::vec(0.0..3.0f64, N), lambda in 0.01..2.0f64) {
        let op = op(s, N);
        let (f, g) = (field(&op, f), field(&op, g));
        let jf = resolvent_solve(&op, lambda, &f, &strict()).unwrap().solution;
        let jg = resolvent_solve(&op, lambda, &g, &strict()).unwrap().solution;
        let before = l1_distance(&f, &g).unwrap();
        prop_assert!(l1_distance(&jf, &jg).unwrap() <= before * (1.0 + 1e-10) + 1e-11);
    }

    #[test]
    fn resolvent_preserves_order(s in scheme(), f in prop::collection::vec(0.0..3.0f64, N), bump in prop::collection::vec(0.0..1.0f64, N), lambda in 0.01..2.0f64) {
        let op = op(s, N);
        let g: Vec<f64> = f.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (f, g) = (field(&op, f), field(&op, g));
        let jf = resolvent_solve(&op, lambda, &f, &strict()).unwrap().solution;
        let jg = resolvent_solve(&op, lambda, &g, &strict()).unwrap().solution;
        for (a, b) in jf.values.iter().zip(&jg.values) {
            prop_assert!(a <= &(b + 1e-10), "{a} > {b}");
        }
    }

    #[test]
    fn resolvent_keeps_nonnegative_data_nonnegative(s in scheme(), f in prop::collection::vec(0.0..3.0f64, N), lambda in 0.01..5.0f64) {
        let op = op(s, N);
        let u = resolvent_solve(&op, lambda, &field(&op, f), &strict()).unwrap().solution;
        prop_assert!(u.min().0 >= -1e-12);
    }
}

#[test]
fn evolution_is_a_semigroup() {
    let op = op(FluxScheme::ExponentialFitting, 96);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| (-(x[0] - 1.0).powi(2)).exp()).unwrap();
    let opts = EvolveOptions { diagnostics: Diagnostics::Basic, ..Default::default() };
    let whole = evolve(&op, &u0, 2.0, 40, &opts).unwrap();
    let first = evolve(&op, &u0, 1.0, 20, &opts).unwrap();
    let second = evolve(&op, &first.last, 1.0, 20, &opts).unwrap();
    assert_eq!(whole.last.values, second.last.values);
}

#[test]
fn mass_is_conserved_at_every_step() {
    let op = op(FluxScheme::ExponentialFitting, 128);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| (-(x[0] + 2.0).powi(2) * 4.0).exp()).unwrap();
    let traj = evolve(&op, &u0, 3.0, 60, &EvolveOptions::default()).unwrap();
    let m0 = traj.diagnostics[0].mass;
    for d in &traj.diagnostics {
        assert!((d.mass - m0).abs() <= 1e-12 * m0, "step {}: {}", d.step, d.mass - m0);
        assert!(d.min_u >= -1e-12);
    }
}

#[test]
fn equilibrium_start_is_stationary_for_fitted_flux() {
    let op = op(FluxScheme::ExponentialFitting, 128);
    let eq = solve_mu(&op, 1.5).unwrap();
    let opts = EvolveOptions { diagnostics: Diagnostics::Basic, ..Default::default() };
    let traj = evolve(&op, &eq.field, 5.0, 50, &opts).unwrap();
    assert!(l1_distance(&traj.last, &eq.field).unwrap() < 1e-9);
}

#[test]
fn equilibrium_start_drifts_by_order_dx_for_upwind() {
    let dist = |n: usize| {
        let op = op(FluxScheme::Upwind, n);
        let eq = solve_mu(&op, 1.0).unwrap();
        let opts = EvolveOptions { diagnostics: Diagnostics::Basic, ..Default::default() };
        let traj = evolve(&op, &eq.field, 10.0, 100, &opts).unwrap();
        l1_distance(&traj.last, &eq.field).unwrap()
    };
    let (coarse, fine) = (dist(128), dist(256));
    let dx = 12.0 / 128.0;
    assert!(coarse < 2.0 * dx, "{coarse}");
    assert!(coarse / fine > 1.5, "{coarse} / {fine}");
}

#[test]
fn weighted_norm_stays_below_growth_bound() {
    let op = op(FluxScheme::ExponentialFitting, 128);
    let u0 = DensityField::from_fn(op.grid.clone(), |x| (-(x[0] - 3.0).powi(2)).exp()).unwrap();
    let traj = evolve(&op, &u0, 2.0, 40, &EvolveOptions::default()).unwrap();
    let rep = check_weighted_bound(&traj, false, Some(rho_on_grid(&op)), 1e-10).unwrap();
    assert!(rep.passed, "{:?}", rep.slack);
    assert!(check_weighted_bound(&traj, false, None, 1e-10).is_err());
}
