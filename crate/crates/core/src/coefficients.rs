//! Problem data for `u_t - Δβ(u) + div(D b(u) u) = 0` with `D = -∇Φ`, and the
//! scalar functions derived from it.
//!
//! All derived functions are written in terms of the ratio `κ(r) = β'(r)/b(r)`:
//!
//! * `g(r) = ∫_1^r κ(s)/s ds`, evaluated in the log variable so the integrand is smooth;
//! * `η(r) = ∫_0^r g = r g(r) - ∫_0^r κ`, obtained by parts, which removes the
//!   `1/s` singularity of the nested integral;
//! * `j(r) = ∫_0^r β'(s)/sqrt(s b(s)) ds`, evaluated after `s = t²`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::quadrature::{integrate, Tolerance};
use crate::roots::{expand_bracket, newton_bracketed};

/// The density nonlinearities β and b.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn beta(&self, r: f64) -> f64;
    fn beta_prime(&self, r: f64) -> f64;
    fn beta_second(&self, r: f64) -> f64;
    fn b(&self, r: f64) -> f64;
    fn b_prime(&self, r: f64) -> f64;
}

/// A confining potential Φ on ℝᵈ; the drift is `D = -∇Φ`.
pub trait Potential: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn laplacian(&self, x: &[f64]) -> f64;
}

/// β = id, b ≡ 1: the classical Smoluchowski equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

impl Nonlinearity for Linear {
    fn beta(&self, r: f64) -> f64 {
        r
    }
    fn beta_prime(&self, _r: f64) -> f64 {
        1.0
    }
    fn beta_second(&self, _r: f64) -> f64 {
        0.0
    }
    fn b(&self, _r: f64) -> f64 {
        1.0
    }
    fn b_prime(&self, _r: f64) -> f64 {
        0.0
    }
}

/// Bounded-derivative family:
/// `β(r) = γ r + (γ₁-γ) sgn(r) (|r| - ln(1+|r|))`, `b(r) = b₀ + (b_sup-b₀)/(1+r²)`.
#[derive(Debug, Clone, Copy)]
pub struct SmoothNonlinear {
    pub gamma: f64,
    pub gamma1: f64,
    pub b0: f64,
    pub b_sup: f64,
}

impl Nonlinearity for SmoothNonlinear {
    fn beta(&self, r: f64) -> f64 {
        let a = r.abs();
        self.gamma * r + (self.gamma1 - self.gamma) * r.signum() * (a - a.ln_1p())
    }
    fn beta_prime(&self, r: f64) -> f64 {
        let a = r.abs();
        self.gamma + (self.gamma1 - self.gamma) * a / (1.0 + a)
    }
    fn beta_second(&self, r: f64) -> f64 {
        let a = r.abs();
        (self.gamma1 - self.gamma) * r.signum() / ((1.0 + a) * (1.0 + a))
    }
    fn b(&self, r: f64) -> f64 {
        self.b0 + (self.b_sup - self.b0) / (1.0 + r * r)
    }
    fn b_prime(&self, r: f64) -> f64 {
        let q = 1.0 + r * r;
        -2.0 * r * (self.b_sup - self.b0) / (q * q)
    }
}

/// β and b given by samples on `r >= 0`, interpolated by monotone cubics.
/// β is extended to negative arguments as an odd function, b as an even one.
/// Beyond the last sample β continues linearly and b is frozen.
#[derive(Debug, Clone)]
pub struct Tabulated {
    beta: MonotoneCubic,
    b: MonotoneCubic,
}

impl Tabulated {
    pub fn new(r: Vec<f64>, beta: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if r.first() != Some(&0.0) {
            return Err(Error::Domain("tabulated coefficients must start at r = 0".into()));
        }
        if beta[0] != 0.0 {
            return Err(Error::Domain(format!("tabulated beta(0) must be 0, got {}", beta[0])));
        }
        Ok(Self {
            beta: MonotoneCubic::new(r.clone(), beta)?,
            b: MonotoneCubic::new(r, b)?,
        })
    }
}

impl Nonlinearity for Tabulated {
    fn beta(&self, r: f64) -> f64 {
        r.signum() * self.beta.eval(r.abs())
    }
    fn beta_prime(&self, r: f64) -> f64 {
        self.beta.eval_all(r.abs()).1
    }
    fn beta_second(&self, r: f64) -> f64 {
        r.signum() * self.beta.eval_all(r.abs()).2
    }
    // b is held constant beyond the last sample so it stays bounded.
    fn b(&self, r: f64) -> f64 {
        self.b.eval(r.abs().min(self.b.x_max()))
    }
    fn b_prime(&self, r: f64) -> f64 {
        if r.abs() >= self.b.x_max() {
            return 0.0;
        }
        r.signum() * self.b.eval_all(r.abs()).1
    }
}

/// Φ ≡ c, so D ≡ 0.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPotential {
    pub dimension: usize,
    pub value: f64,
}

impl Potential for ConstantPotential {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

/// Φ(x) = offset + scale·|x|². `scale = 1/2` gives D = -x.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticPotential {
    pub dimension: usize,
    pub scale: f64,
    pub offset: f64,
}

impl Potential for QuadraticPotential {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.scale * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * self.scale * v;
        }
    }
    fn laplacian(&self, _x: &[f64]) -> f64 {
        2.0 * self.scale * self.dimension as f64
    }
}

/// Φ + c for an existing potential.
#[derive(Debug, Clone)]
pub struct ShiftedPotential {
    pub inner: Arc<dyn Potential>,
    pub shift: f64,
}

impl Potential for ShiftedPotential {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.shift
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.inner.laplacian(x)
    }
}

/// Structural constants of the problem: `γ ≤ β' ≤ γ₁`, `b₀ ≤ b ≤ |b|_∞`, weight exponent `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub gamma: f64,
    pub gamma1: f64,
    pub b0: f64,
    pub b_sup: f64,
    pub m: f64,
}

#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub potential: Arc<dyn Potential>,
    pub constants: Constants,
}

impl CoefficientSet {
    pub fn new(nonlinearity: Arc<dyn Nonlinearity>, potential: Arc<dyn Potential>, constants: Constants) -> Result<Self> {
        let Constants { gamma, gamma1, b0, b_sup, m } = constants;
        if !(gamma > 0.0 && gamma <= gamma1 && gamma1.is_finite()) {
            return Err(Error::Config(format!("need 0 < gamma <= gamma1 < inf, got gamma={gamma}, gamma1={gamma1}")));
        }
        if !(b0 > 0.0 && b0 <= b_sup && b_sup.is_finite()) {
            return Err(Error::Config(format!("need 0 < b0 <= b_sup < inf, got b0={b0}, b_sup={b_sup}")));
        }
        if !(m >= 2.0 && m.is_finite()) {
            return Err(Error::Config(format!("weight exponent m must be >= 2, got {m}")));
        }
        if potential.dimension() == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        let beta0 = nonlinearity.beta(0.0);
        if beta0 != 0.0 {
            return Err(Error::Config(format!("beta(0) must vanish, got {beta0}")));
        }
        Ok(Self {
            nonlinearity,
            potential,
            constants,
        })
    }

    /// β = id, b ≡ 1 with the given potential (γ = γ₁ = b₀ = |b|_∞ = 1).
    pub fn linear(potential: Arc<dyn Potential>) -> Self {
        Self::new(
            Arc::new(Linear),
            potential,
            Constants {
                gamma: 1.0,
                gamma1: 1.0,
                b0: 1.0,
                b_sup: 1.0,
                m: 2.0,
            },
        )
        .expect("linear preset constants are admissible")
    }

    pub fn smooth_nonlinear(potential: Arc<dyn Potential>, gamma: f64, gamma1: f64, b0: f64, b_sup: f64, m: f64) -> Result<Self> {
        Self::new(
            Arc::new(SmoothNonlinear { gamma, gamma1, b0, b_sup }),
            potential,
            Constants { gamma, gamma1, b0, b_sup, m },
        )
    }

    pub fn with_potential(&self, potential: Arc<dyn Potential>) -> Self {
        Self {
            nonlinearity: self.nonlinearity.clone(),
            potential,
            constants: self.constants,
        }
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn beta(&self, r: f64) -> f64 {
        self.nonlinearity.beta(r)
    }
    pub fn beta_prime(&self, r: f64) -> f64 {
        self.nonlinearity.beta_prime(r)
    }
    pub fn b(&self, r: f64) -> f64 {
        self.nonlinearity.b(r)
    }
    pub fn b_prime(&self, r: f64) -> f64 {
        self.nonlinearity.b_prime(r)
    }
    pub fn phi(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }
    pub fn laplacian_phi(&self, x: &[f64]) -> f64 {
        self.potential.laplacian(x)
    }

    /// Drift `D(x) = -∇Φ(x)`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.potential.gradient(x, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }

    /// `κ(r) = β'(r)/b(r)`, the effective diffusivity per unit mobility.
    pub fn kappa(&self, r: f64) -> f64 {
        self.beta_prime(r) / self.b(r)
    }

    pub fn kappa_prime(&self, r: f64) -> f64 {
        let b = self.b(r);
        (self.nonlinearity.beta_second(r) * b - self.beta_prime(r) * self.b_prime(r)) / (b * b)
    }

    /// `g(r) = ∫_1^r β'(s)/(s b(s)) ds` for r > 0.
    pub fn g(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("g(r) requires 0 < r < inf, got {r}")));
        }
        self.g_log(r.ln())
    }

    /// `g(e^t) = ∫_0^t κ(e^s) ds`.
    fn g_log(&self, t: f64) -> Result<f64> {
        let v = integrate(|s: f64| self.kappa(s.exp()), 0.0, t, Tolerance::default())?.value;
        if !v.is_finite() {
            return Err(Error::non_finite("g", format!("r = e^{t}"), v));
        }
        Ok(v)
    }

    /// Inverse of `g`: the unique `r > 0` with `g(r) = y`.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::Domain(format!("g_inverse requires a finite argument, got {y}")));
        }
        if y == 0.0 {
            return Ok(1.0);
        }
        let f = |t: f64| self.g_log(t).map(|v| v - y);
        let guess = y / self.kappa(1.0);
        let (lo, hi, _, _) = expand_bracket(&f, guess - 1.0, guess + 1.0, 60)?;
        let t = newton_bracketed(
            |t| Ok((f(t)?, self.kappa(t.exp()))),
            lo,
            hi,
            1e-15,
            200,
        )?;
        Ok(t.exp())
    }

    /// `η(r) = -∫_0^r dτ ∫_τ^1 β'(s)/(s b(s)) ds`, r ≥ 0.
    pub fn eta(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("eta(r) requires r >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let k = integrate(|s| self.kappa(s), 0.0, r, Tolerance::default())?.value;
        Ok(r * self.g(r)? - k)
    }

    /// `η'(r) = g(r)`, the chemical potential of the entropy part.
    pub fn eta_prime(&self, r: f64) -> Result<f64> {
        self.g(r)
    }

    /// `j(r) = ∫_0^r β'(s)/sqrt(s b(s)) ds`, r ≥ 0.
    pub fn j(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("j(r) requires r >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let v = integrate(
            |t: f64| {
                let s = t * t;
                2.0 * self.beta_prime(s) / self.b(s).sqrt()
            },
            0.0,
            r.sqrt(),
            Tolerance::default(),
        )?
        .value;
        Ok(v)
    }

    /// Upper bound `2γ₁/sqrt(b₀)·sqrt(r)` on `j(r)`.
    pub fn j_upper_bound(&self, r: f64) -> f64 {
        2.0 * self.constants.gamma1 / self.constants.b0.sqrt() * r.sqrt()
    }

    /// Two-sided envelope of η from `γ/(r|b|_∞) ≤ β'/(r b) ≤ γ₁/(r b₀)`.
    pub fn eta_envelope(&self, r: f64) -> (f64, f64) {
        let c = &self.constants;
        let base = if r == 0.0 { 0.0 } else { r * (r.ln() - 1.0) };
        let (steep, flat) = (c.gamma1 / c.b0, c.gamma / c.b_sup);
        if r <= 1.0 {
            (steep * base, flat * base)
        } else {
            (flat * base, steep * base)
        }
    }

    pub fn regularize(&self, epsilon: f64) -> Result<RegularizedCoefficients> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Domain(format!("regularization epsilon must be positive, got {epsilon}")));
        }
        Ok(RegularizedCoefficients {
            base: self.clone(),
            epsilon,
        })
    }
}

/// ε-regularized coefficients. The mollification of b is the identity
/// because b is already C¹ and bounded.
#[derive(Debug, Clone)]
pub struct RegularizedCoefficients {
    pub base: CoefficientSet,
    pub epsilon: f64,
}

impl RegularizedCoefficients {
    pub fn b_eps(&self, r: f64) -> f64 {
        self.base.b(r)
    }

    /// `b*_ε(r) = b_ε(r) r / (1 + ε|r|)`.
    pub fn b_star_eps(&self, r: f64) -> f64 {
        self.b_eps(r) * r / (1.0 + self.epsilon * r.abs())
    }

    /// `Φ_ε = Φ / (1 + εΦ)^m`.
    pub fn phi_eps(&self, x: &[f64]) -> f64 {
        let p = self.base.phi(x);
        p / (1.0 + self.epsilon * p).powf(self.base.constants.m)
    }

    /// `D_ε = D (1+εΦ)^{-m} - m ε Φ D (1+εΦ)^{-(m+1)}`.
    pub fn d_eps(&self, x: &[f64], out: &mut [f64]) {
        let m = self.base.constants.m;
        let p = self.base.phi(x);
        let q = 1.0 + self.epsilon * p;
        let factor = q.powf(-m) - m * self.epsilon * p * q.powf(-(m + 1.0));
        self.base.drift(x, out);
        for v in out.iter_mut() {
            *v *= factor;
        }
    }
}
