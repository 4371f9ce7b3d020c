//! Conservative finite-volume discretisation of `A u = -Δβ(u) + div(D b(u) u)`
//! with zero-flux boundaries.
//!
//! Two face fluxes are available. Both are written for the flux `F` from the
//! left cell to the right cell across a face, so that
//! `(A_h u)_i = Σ_faces ±F·area / vol`.
//!
//! * [`FluxScheme::ExponentialFitting`] (default): a nonlinear Scharfetter-Gummel flux
//!   `F = (b_f κ_f/Δx)[B(x) u_L - B(-x) u_R]`, `x = (Φ_R - Φ_L)/κ_f`, `B(x) = x/(eˣ-1)`,
//!   where `κ_f` is the mean of `κ = β'/b` along the geometric path from `u_L` to
//!   `u_R`. It vanishes exactly when `g(u_L) + Φ_L = g(u_R) + Φ_R`, so the
//!   discrete equilibrium is `g⁻¹(μ - Φ)` cell by cell.
//! * [`FluxScheme::Upwind`]: `F = -(β(u_R) - β(u_L))/Δx + D_f b(u_up) u_up`, with
//!   `D_f = -(Φ_R - Φ_L)/Δx` and the upwind value chosen by the sign of `D_f`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{DensityField, Face, Grid};
use crate::linalg::{CsrMatrix, SystemMatrix, Tridiagonal};
use crate::quadrature::GAUSS_LEGENDRE_6;

/// Densities below this are treated as this value inside `κ_f` only.
pub const DENSITY_FLOOR: f64 = 1e-300;
const PARALLEL_FACES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    #[default]
    ExponentialFitting,
    Upwind,
}

/// `B(x) = x/(eˣ - 1)`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// `B'(x) = B(x)(1 - B(x) - x)/x`.
pub fn bernoulli_prime(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        -0.5 + x / 6.0 - x * x * x / 180.0
    } else {
        let b = bernoulli(x);
        b * (1.0 - b - x) / x
    }
}

/// Per-cell `A_h u` together with the flux through each interior face
/// (in the order of [`Grid::faces`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperatorOutput {
    pub values: Vec<f64>,
    pub fluxes: Vec<f64>,
}

/// The discrete operator for one coefficient set on one grid.
#[derive(Debug, Clone)]
pub struct FvOperator {
    pub cs: CoefficientSet,
    pub grid: Arc<Grid>,
    pub scheme: FluxScheme,
    phi: Vec<f64>,
}

struct FaceDerivs {
    d_left: f64,
    d_right: f64,
}

impl FvOperator {
    pub fn new(cs: CoefficientSet, grid: Arc<Grid>, scheme: FluxScheme) -> Result<Self> {
        let phi = grid.potential_at_centers(cs.potential.as_ref())?;
        Ok(Self { cs, grid, scheme, phi })
    }

    /// Φ at the cell centres.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// `D_f = -(Φ_R - Φ_L)/Δx`.
    pub fn face_drift(&self, f: &Face) -> f64 {
        -(self.phi[f.right] - self.phi[f.left]) / f.dx
    }

    /// Log-path mean of κ between two densities, with its partial derivatives.
    fn kappa_face(&self, ul: f64, ur: f64, with_derivs: bool) -> (f64, f64, f64) {
        let (al, ar) = (ul.max(DENSITY_FLOOR), ur.max(DENSITY_FLOOR));
        if al == ar {
            let k = self.cs.kappa(al);
            if !with_derivs {
                return (k, 0.0, 0.0);
            }
            let kp = 0.5 * self.cs.kappa_prime(al);
            return (k, if ul > DENSITY_FLOOR { kp } else { 0.0 }, if ur > DENSITY_FLOOR { kp } else { 0.0 });
        }
        let (ll, lr) = (al.ln(), ar.ln());
        let mut k = 0.0;
        let (mut dl, mut dr) = (0.0, 0.0);
        for &(t, w) in GAUSS_LEGENDRE_6.iter() {
            let s = ((1.0 - t) * ll + t * lr).exp();
            k += w * self.cs.kappa(s);
            if with_derivs {
                let kp = w * self.cs.kappa_prime(s) * s;
                dl += kp * (1.0 - t);
                dr += kp * t;
            }
        }
        if ul <= DENSITY_FLOOR {
            dl = 0.0;
        } else {
            dl /= al;
        }
        if ur <= DENSITY_FLOOR {
            dr = 0.0;
        } else {
            dr /= ar;
        }
        (k, dl, dr)
    }

    fn face_flux(&self, f: &Face, ul: f64, ur: f64) -> f64 {
        match self.scheme {
            FluxScheme::ExponentialFitting => {
                let (k, _, _) = self.kappa_face(ul, ur, false);
                let bf = 0.5 * (self.cs.b(ul) + self.cs.b(ur));
                let x = (self.phi[f.right] - self.phi[f.left]) / k;
                bf * k / f.dx * (bernoulli(x) * ul - bernoulli(-x) * ur)
            }
            FluxScheme::Upwind => {
                let d = self.face_drift(f);
                let up = if d > 0.0 { ul } else { ur };
                -(self.cs.beta(ur) - self.cs.beta(ul)) / f.dx + d * self.cs.b(up) * up
            }
        }
    }

    /// Derivatives of the flux in `u_L`, `u_R`. With `frozen`, the nonlinear
    /// coefficients are held fixed and only the linear dependence is kept.
    fn face_derivs(&self, f: &Face, ul: f64, ur: f64, frozen: bool) -> FaceDerivs {
        match self.scheme {
            FluxScheme::ExponentialFitting => {
                let (k, dkl, dkr) = self.kappa_face(ul, ur, !frozen);
                let (bl, br) = (self.cs.b(ul), self.cs.b(ur));
                let bf = 0.5 * (bl + br);
                let dphi = self.phi[f.right] - self.phi[f.left];
                let x = dphi / k;
                let (bp, bm) = (bernoulli(x), bernoulli(-x));
                let p = bf * k / f.dx;
                let bracket = bp * ul - bm * ur;
                let mut d_left = p * bp;
                let mut d_right = -p * bm;
                if !frozen {
                    let dbracket_dx = bernoulli_prime(x) * ul + bernoulli_prime(-x) * ur;
                    let (dbl, dbr) = (0.5 * self.cs.b_prime(ul), 0.5 * self.cs.b_prime(ur));
                    // ∂x/∂u = -x/κ ∂κ/∂u
                    d_left += (dbl * k + bf * dkl) / f.dx * bracket + p * dbracket_dx * (-x / k * dkl);
                    d_right += (dbr * k + bf * dkr) / f.dx * bracket + p * dbracket_dx * (-x / k * dkr);
                }
                FaceDerivs { d_left, d_right }
            }
            FluxScheme::Upwind => {
                let d = self.face_drift(f);
                let (diff_l, diff_r) = if frozen {
                    // secant of β on [u_L, u_R]
                    let s = if (ur - ul).abs() > 1e-14 * (1.0 + ul.abs()) {
                        (self.cs.beta(ur) - self.cs.beta(ul)) / (ur - ul)
                    } else {
                        self.cs.beta_prime(0.5 * (ul + ur))
                    };
                    (s, s)
                } else {
                    (self.cs.beta_prime(ul), self.cs.beta_prime(ur))
                };
                let mut d_left = diff_l / f.dx;
                let mut d_right = -diff_r / f.dx;
                let up = if d > 0.0 { ul } else { ur };
                let drift_coef = if frozen {
                    d * self.cs.b(up)
                } else {
                    d * (self.cs.b(up) + self.cs.b_prime(up) * up)
                };
                if d > 0.0 {
                    d_left += drift_coef;
                } else {
                    d_right += drift_coef;
                }
                FaceDerivs { d_left, d_right }
            }
        }
    }

    fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.n_cells() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", u.len(), self.grid.n_cells())));
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("density", format!("cell {i}"), u[i]));
        }
        Ok(())
    }

    pub fn fluxes(&self, u: &[f64]) -> Vec<f64> {
        let faces = self.grid.faces();
        if faces.len() >= PARALLEL_FACES {
            faces.par_iter().map(|f| self.face_flux(f, u[f.left], u[f.right])).collect()
        } else {
            faces.iter().map(|f| self.face_flux(f, u[f.left], u[f.right])).collect()
        }
    }

    /// `A_h u` and the face fluxes.
    pub fn apply(&self, u: &[f64]) -> Result<DiscreteOperatorOutput> {
        self.check_input(u)?;
        let fluxes = self.fluxes(u);
        let vol = self.grid.cell_volume();
        let mut values = vec![0.0; u.len()];
        for (f, &flux) in self.grid.faces().iter().zip(&fluxes) {
            let q = flux * f.area / vol;
            values[f.left] += q;
            values[f.right] -= q;
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("A_h u", format!("cell {i}"), values[i]));
        }
        Ok(DiscreteOperatorOutput { values, fluxes })
    }

    /// `R(u) = u + λ A_h u - f`.
    pub fn resolvent_residual(&self, u: &[f64], lambda: f64, f: &[f64]) -> Result<Vec<f64>> {
        let au = self.apply(u)?.values;
        Ok(u.iter().zip(&au).zip(f).map(|((ui, ai), fi)| ui + lambda * ai - fi).collect())
    }

    /// `I + λ ∂(A_h u)/∂u`, exact (Newton) or with frozen coefficients (Picard).
    pub fn resolvent_matrix(&self, u: &[f64], lambda: f64, frozen: bool) -> SystemMatrix {
        let vol = self.grid.cell_volume();
        let faces = self.grid.faces();
        let derivs: Vec<FaceDerivs> = if faces.len() >= PARALLEL_FACES {
            faces.par_iter().map(|f| self.face_derivs(f, u[f.left], u[f.right], frozen)).collect()
        } else {
            faces.iter().map(|f| self.face_derivs(f, u[f.left], u[f.right], frozen)).collect()
        };
        let n = u.len();
        if self.grid.dimension() == 1 {
            let mut t = Tridiagonal::zeros(n);
            for d in &mut t.diag {
                *d = 1.0;
            }
            for (f, fd) in faces.iter().zip(&derivs) {
                let s = lambda * f.area / vol;
                t.add(f.left, f.left, s * fd.d_left);
                t.add(f.left, f.right, s * fd.d_right);
                t.add(f.right, f.left, -s * fd.d_left);
                t.add(f.right, f.right, -s * fd.d_right);
            }
            SystemMatrix::Tridiagonal(t)
        } else {
            let mut trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
            for (f, fd) in faces.iter().zip(&derivs) {
                let s = lambda * f.area / vol;
                trip.push((f.left, f.left, s * fd.d_left));
                trip.push((f.left, f.right, s * fd.d_right));
                trip.push((f.right, f.left, -s * fd.d_left));
                trip.push((f.right, f.right, -s * fd.d_right));
            }
            SystemMatrix::Sparse(CsrMatrix::from_triplets(n, trip))
        }
    }
}

/// One-shot application of the default scheme.
pub fn apply_operator(cs: &CoefficientSet, u: &DensityField) -> Result<DiscreteOperatorOutput> {
    FvOperator::new(cs.clone(), u.grid().clone(), FluxScheme::default())?.apply(&u.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ConstantPotential, Potential, QuadraticPotential};
    use proptest::prelude::*;

    fn smooth(pot: Arc<dyn Potential>) -> CoefficientSet {
        CoefficientSet::smooth_nonlinear(pot, 1.0, 2.0, 1.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn bernoulli_identities() {
        for x in [-800.0, -30.0, -1.0, -1e-6, 0.0, 1e-7, 0.3, 5.0, 800.0] {
            let lhs = bernoulli(-x);
            let rhs = bernoulli(x) + x;
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "x={x}");
        }
        for x in [-3.0, -1e-3, 2e-4, 0.5, 4.0] {
            let h = 1e-6;
            let fd = (bernoulli(x + h) - bernoulli(x - h)) / (2.0 * h);
            assert!((bernoulli_prime(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn constants_are_annihilated_without_drift() {
        let g = Arc::new(Grid::uniform_1d(-1.0, 1.0, 16).unwrap());
        let cs = smooth(Arc::new(ConstantPotential { dimension: 1, value: 1.0 }));
        for scheme in [FluxScheme::ExponentialFitting, FluxScheme::Upwind] {
            let op = FvOperator::new(cs.clone(), g.clone(), scheme).unwrap();
            let out = op.apply(&vec![0.7; 16]).unwrap();
            assert!(out.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn equilibrium_profile_has_zero_flux() {
        let g = Arc::new(Grid::uniform_1d(-4.0, 4.0, 64).unwrap());
        let cs = smooth(Arc::new(QuadraticPotential { dimension: 1, scale: 0.5, offset: 1.0 }));
        let op = FvOperator::new(cs.clone(), g, FluxScheme::ExponentialFitting).unwrap();
        let u: Vec<f64> = op.phi().iter().map(|p| cs.g_inverse(1.3 - p).unwrap()).collect();
        let out = op.apply(&u).unwrap();
        let scale = u.iter().copied().fold(0.0, f64::max);
        assert!(out.values.iter().all(|v| v.abs() < 1e-8 * scale), "{:?}", out.values);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = Arc::new(Grid::uniform_1d(-2.0, 2.0, 8).unwrap());
        let cs = smooth(Arc::new(QuadraticPotential { dimension: 1, scale: 0.8, offset: 1.0 }));
        let u: Vec<f64> = (0..8).map(|i| 0.2 + 0.3 * (i as f64 * 0.9).sin().abs()).collect();
        for scheme in [FluxScheme::ExponentialFitting, FluxScheme::Upwind] {
            let op = FvOperator::new(cs.clone(), g.clone(), scheme).unwrap();
            let lambda = 0.3;
            let SystemMatrix::Tridiagonal(t) = op.resolvent_matrix(&u, lambda, false) else {
                panic!("1D uses a tridiagonal matrix")
            };
            let zero = vec![0.0; 8];
            for j in 0..8 {
                let mut e = vec![0.0; 8];
                e[j] = 1.0;
                let col = t.matvec(&e);
                let h = 1e-6;
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[j] += h;
                dn[j] -= h;
                let rp = op.resolvent_residual(&up, lambda, &zero).unwrap();
                let rm = op.resolvent_residual(&dn, lambda, &zero).unwrap();
                for i in 0..8 {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!((col[i] - fd).abs() < 1e-6, "{scheme:?} ({i},{j}): {} vs {fd}", col[i]);
                }
            }
        }
    }

    #[test]
    fn upwind_refinement_is_first_order_on_gaussian() {
        // β = id, b = 1, D = -x: the Gaussian is stationary; upwind leaves an O(Δx) residual.
        let cs = CoefficientSet::linear(Arc::new(QuadraticPotential { dimension: 1, scale: 0.5, offset: 1.0 }));
        let mut prev = None;
        for n in [100, 200, 400, 800] {
            let g = Arc::new(Grid::uniform_1d(-8.0, 8.0, n).unwrap());
            let u = DensityField::from_fn(g.clone(), |x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
            let op = FvOperator::new(cs.clone(), g.clone(), FluxScheme::Upwind).unwrap();
            let r: f64 = op.apply(&u.values).unwrap().values.iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume();
            if let Some(p) = prev {
                let ratio: f64 = p / r;
                assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
            }
            prev = Some(r);
        }
    }

    #[test]
    fn two_dimensional_conservation() {
        let g = Arc::new(Grid::new(vec![-2.0, -1.0], vec![2.0, 1.5], vec![9, 7]).unwrap());
        let cs = smooth(Arc::new(QuadraticPotential { dimension: 2, scale: 0.5, offset: 1.0 }));
        let op = FvOperator::new(cs, g.clone(), FluxScheme::ExponentialFitting).unwrap();
        let u: Vec<f64> = (0..63).map(|i| ((i * 7919) % 13) as f64 * 0.1).collect();
        let out = op.apply(&u).unwrap();
        let total: f64 = out.values.iter().sum::<f64>() * g.cell_volume();
        let l1: f64 = u.iter().sum::<f64>() * g.cell_volume();
        assert!(total.abs() <= 1e-13 * l1);
    }

    proptest! {
        #[test]
        fn conservation_and_antisymmetry(vals in proptest::collection::vec(0.0f64..3.0, 24), upwind in any::<bool>()) {
            let g = Arc::new(Grid::uniform_1d(-3.0, 3.0, 24).unwrap());
            let cs = smooth(Arc::new(QuadraticPotential { dimension: 1, scale: 1.0, offset: 1.0 }));
            let scheme = if upwind { FluxScheme::Upwind } else { FluxScheme::ExponentialFitting };
            let op = FvOperator::new(cs, g.clone(), scheme).unwrap();
            let out = op.apply(&vals).unwrap();
            let total: f64 = out.values.iter().sum::<f64>() * g.cell_volume();
            let l1: f64 = vals.iter().sum::<f64>() * g.cell_volume();
            prop_assert!(total.abs() <= 1e-13 * l1.max(1e-300));
            // rebuild each cell's budget from the single stored flux per face
            let mut budget = vec![0.0; 24];
            for (f, &fl) in g.faces().iter().zip(&out.fluxes) {
                budget[f.left] += fl / g.cell_volume();
                budget[f.right] -= fl / g.cell_volume();
            }
            prop_assert_eq!(budget, out.values);
        }
    }
}
