//! Finite-volume and particle solvers for the nonlinear Fokker-Planck equation
//!
//! ```text
//! u_t - Δβ(u) + div(D b(u) u) = 0,    D = -∇Φ,
//! ```
//!
//! with tools to check the structural hypotheses on `(β, b, Φ)`, follow the
//! free energy along implicit-Euler trajectories, construct stationary states
//! and compare with the associated McKean-Vlasov particle system.

pub mod appendix;
pub mod coefficients;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod hypotheses;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod lyapunov;
pub mod operator;
pub mod particles;
pub mod quadrature;
pub mod resolvent;
pub mod roots;
pub mod weak;

pub use appendix::{choose_parameters, verify_balance_condition, AppendixPotential, BalanceReport};
pub use coefficients::{CoefficientSet, Constants, Linear, Nonlinearity, Potential, SmoothNonlinear, Tabulated};
pub use equilibrium::{convergence_to_equilibrium, solve_mu, stationarity_residual, EquilibriumState};
pub use error::{Error, Result};
pub use grid::{l1_distance, l1_norm, mass, weighted_norm, DensityField, Grid};
pub use hypotheses::{check_hypotheses, HypothesisReport};
pub use lyapunov::{check_h_theorem, entropy_energy, entropy_production, LyapunovReport};
pub use operator::{apply_operator, FluxScheme, FvOperator};
pub use particles::{sample_from_density, simulate, ParticleEnsemble};
pub use resolvent::{evolve, resolvent_solve, EvolveOptions, SolverOptions, Trajectory};
