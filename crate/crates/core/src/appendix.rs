//! Explicit radial confining potential built from the Riccati profile
//! `h' + (d-1)h/r - αh² = 0` on `[δ, ∞)`.
//!
//! ```text
//! Φ(x) = |x|² log|x| + μ          |x| ≤ δ
//! Φ(x) = φ(|x|) + η|x| + μ        |x| > δ,    φ(r) = δ² log δ - ηδ + ∫_δ^r h
//! ```
//!
//! with `α = b₀/γ₁` and `δ = exp(-(d+2)/(2d))`, so that the inner Laplacian
//! `2d log r + d + 2` vanishes exactly at `r = δ`. The Riccati equation is
//! linearised by `h = -1/(α w)`, which gives closed forms for both `h` and `∫h`
//! in every dimension.

use crate::coefficients::{CoefficientSet, Potential};
use crate::error::{Error, Result};
use crate::roots::newton_bracketed;

/// Radii of the certification lattice used by [`choose_parameters`].
pub const LATTICE_RADII: usize = 10_000;
/// Outer radius of the certification lattice, in units of δ.
pub const LATTICE_SPAN: f64 = 1e6;
/// Default outer radius of [`verify_balance_condition`].
pub const DEFAULT_BALANCE_RMAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixPotential {
    dimension: usize,
    alpha: f64,
    delta: f64,
    eta: f64,
    mu: f64,
    // A = 1/(δ(2δ/d + η)), so that h(δ) = -1/(δA).
    a: f64,
}

/// `δ = exp(-(d+2)/(2d))`.
pub fn delta_for(d: usize) -> f64 {
    let d = d as f64;
    (-(d + 2.0) / (2.0 * d)).exp()
}

impl AppendixPotential {
    pub fn new(dimension: usize, alpha: f64, eta: f64, mu: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = b0/gamma1 must be positive, got {alpha}")));
        }
        if !(eta > 0.0 && eta.is_finite()) || !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("eta and mu must be positive, got eta={eta}, mu={mu}")));
        }
        let delta = delta_for(dimension);
        let a = 1.0 / (delta * (2.0 * delta / dimension as f64 + eta));
        Ok(Self {
            dimension,
            alpha,
            delta,
            eta,
            mu,
            a,
        })
    }

    /// Builds the potential with parameters from [`choose_parameters`].
    pub fn for_coefficients(cs: &CoefficientSet, safety: f64) -> Result<Self> {
        let c = cs.constants;
        let (_, eta, mu) = choose_parameters(cs.dimension(), c.b0, c.gamma1, safety)?;
        Self::new(cs.dimension(), c.b0 / c.gamma1, eta, mu)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `h(δ) = δ(2 log δ + 1) - η = -(2δ/d + η)`.
    pub fn h_delta(&self) -> f64 {
        self.delta * (2.0 * self.delta.ln() + 1.0) - self.eta
    }

    // w(r) with h = -1/(r w): w = (A + c)(r/δ)^{d-2} - c, c = α/(d-2); w = A + α log(r/δ) for d = 2.
    fn w(&self, r: f64) -> f64 {
        let d = self.dimension as i32;
        if d == 2 {
            self.a + self.alpha * (r / self.delta).ln()
        } else {
            let c = self.alpha / (d - 2) as f64;
            (self.a + c) * (r / self.delta).powi(d - 2) - c
        }
    }

    fn h_unchecked(&self, r: f64) -> f64 {
        -1.0 / (r * self.w(r))
    }

    /// Closed-form Riccati profile on `[δ, ∞)`.
    pub fn h_closed_form(&self, r: f64) -> Result<f64> {
        if !(r >= self.delta) {
            return Err(Error::Domain(format!("h is defined for r >= delta = {}, got {r}", self.delta)));
        }
        Ok(self.h_unchecked(r))
    }

    /// `h'(r) = α h² - (d-1) h / r`.
    pub fn h_prime(&self, r: f64) -> Result<f64> {
        let h = self.h_closed_form(r)?;
        Ok(self.alpha * h * h - (self.dimension as f64 - 1.0) * h / r)
    }

    /// `∫_δ^r h(s) ds` in closed form, r ≥ δ.
    pub fn h_integral(&self, r: f64) -> f64 {
        let d = self.dimension as i32;
        let arg = if d == 2 {
            self.alpha / self.a * (r / self.delta).ln()
        } else {
            let c = self.alpha / (d - 2) as f64;
            c / self.a * (1.0 - (self.delta / r).powi(d - 2))
        };
        -arg.ln_1p() / self.alpha
    }

    /// Φ as a function of the radius, before the vertical shift μ.
    pub fn radial_unshifted(&self, r: f64) -> f64 {
        if r <= self.delta {
            if r == 0.0 {
                0.0
            } else {
                r * r * r.ln()
            }
        } else {
            let d = self.delta;
            d * d * d.ln() - self.eta * d + self.h_integral(r) + self.eta * r
        }
    }

    pub fn radial_value(&self, r: f64) -> f64 {
        self.radial_unshifted(r) + self.mu
    }

    /// `∂Φ/∂r`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        if r <= self.delta {
            if r == 0.0 {
                0.0
            } else {
                r * (2.0 * r.ln() + 1.0)
            }
        } else {
            self.h_unchecked(r) + self.eta
        }
    }

    /// ΔΦ as a function of the radius. The inner branch diverges
    /// logarithmically at the origin; there it is evaluated at the smallest
    /// positive double instead.
    pub fn radial_laplacian(&self, r: f64) -> f64 {
        let d = self.dimension as f64;
        if r <= self.delta {
            let r = r.max(f64::MIN_POSITIVE);
            2.0 * d * r.ln() + d + 2.0
        } else {
            let h = self.h_unchecked(r);
            let hp = self.alpha * h * h - (d - 1.0) * h / r;
            hp + (d - 1.0) * (h + self.eta) / r
        }
    }

    /// Largest lower slope: `min over r > δ` of `(Φ(r) - 1)/r` on the given radii.
    pub fn linear_growth_floor(&self, radii: &[f64]) -> f64 {
        radii
            .iter()
            .filter(|&&r| r > self.delta)
            .map(|&r| (self.radial_value(r) - 1.0) / r)
            .fold(f64::INFINITY, f64::min)
    }

    /// `(r, Φ(r))` on `n` equispaced radii in `[0, r_max]`.
    pub fn radial_table(&self, n: usize, r_max: f64) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let r = r_max * i as f64 / (n - 1) as f64;
                (r, self.radial_value(r))
            })
            .collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Potential for AppendixPotential {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.radial_value(norm(x))
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        if r == 0.0 {
            out.fill(0.0);
            return;
        }
        let s = self.radial_derivative(r) / r;
        for (o, v) in out.iter_mut().zip(x) {
            *o = s * v;
        }
    }
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.radial_laplacian(norm(x))
    }
}

/// Log-spaced radii `δ·LATTICE_SPAN^{i/(n-1)}`.
pub fn certification_radii(delta: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| delta * LATTICE_SPAN.powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Selects `(δ, η, μ)` for dimension `d`.
///
/// η is the first value of `safety·{1, 2, 4, ...}` for which
/// `η((d-1)/r - α(2h(r) - η)) ≥ 0` holds on the certification lattice.
/// μ is the smallest shift ≥ 1 giving `Φ(x) ≥ 1 + η|x|/2`, so both the floor
/// `Φ ≥ 1` and a strictly positive linear growth rate hold.
pub fn choose_parameters(d: usize, b0: f64, gamma1: f64, safety: f64) -> Result<(f64, f64, f64)> {
    if !(b0 > 0.0 && gamma1 > 0.0) {
        return Err(Error::Config(format!("need b0, gamma1 > 0, got b0={b0}, gamma1={gamma1}")));
    }
    if !(safety >= 1.0 && safety.is_finite()) {
        return Err(Error::Config(format!("safety factor must be >= 1, got {safety}")));
    }
    let alpha = b0 / gamma1;
    let delta = delta_for(d);
    let radii = certification_radii(delta, LATTICE_RADII);
    let mut eta = safety;
    let mut worst = f64::NAN;
    while eta <= (1u64 << 20) as f64 * safety {
        let pot = AppendixPotential::new(d, alpha, eta, 1.0)?;
        worst = radii
            .iter()
            .map(|&r| eta * ((d as f64 - 1.0) / r - alpha * (2.0 * pot.h_unchecked(r) - eta)))
            .fold(f64::INFINITY, f64::min);
        if worst >= 0.0 {
            let mu = 1.0 - growth_deficit(&pot)?.min(0.0);
            return Ok((delta, eta, mu));
        }
        eta *= 2.0;
    }
    Err(Error::Config(format!(
        "no eta <= 2^20 * {safety} satisfies the certification inequality (last worst value {worst:.3e})"
    )))
}

/// `min_r (Φ₀(r) - ηr/2)` where Φ₀ is the unshifted profile.
///
/// On `[0, δ]` the map is decreasing. Beyond δ its derivative `h + η/2` is
/// increasing (h' > 0), so the minimum sits at the root of `h(r) = -η/2`.
fn growth_deficit(pot: &AppendixPotential) -> Result<f64> {
    let f = |r: f64| pot.radial_unshifted(r) - 0.5 * pot.eta * r;
    let target = -0.5 * pot.eta;
    if pot.h_unchecked(pot.delta) >= target {
        return Ok(f(pot.delta));
    }
    let mut hi = 2.0 * pot.delta;
    while pot.h_unchecked(hi) < target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numerical("growth minimiser bracket diverged".into()));
        }
    }
    let r_star = newton_bracketed(
        |t: f64| {
            let r = t.exp();
            let h = pot.h_unchecked(r);
            let hp = pot.alpha * h * h - (pot.dimension as f64 - 1.0) * h / r;
            Ok((h - target, hp * r))
        },
        pot.delta.ln(),
        hi.ln(),
        1e-15,
        200,
    )?
    .exp();
    Ok(f(r_star).min(f(pot.delta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// Maximum of `γ₁ΔΦ - b₀|∇Φ|²` over the radii.
    pub max_value: f64,
    pub argmax_radius: f64,
    pub n_radii: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub passes: bool,
}

/// Evaluates `γ₁ΔΦ - b₀|∇Φ|²` on log-spaced radii in `(0, DEFAULT_BALANCE_RMAX]`.
pub fn verify_balance_condition(pot: &AppendixPotential, cs: &CoefficientSet, n_radii: usize) -> Result<BalanceReport> {
    verify_balance_condition_on(pot, cs, n_radii, DEFAULT_BALANCE_RMAX)
}

pub fn verify_balance_condition_on(pot: &AppendixPotential, cs: &CoefficientSet, n_radii: usize, r_max: f64) -> Result<BalanceReport> {
    let c = cs.constants;
    if (c.b0 / c.gamma1 - pot.alpha).abs() > 1e-14 * pot.alpha || cs.dimension() != pot.dimension {
        return Err(Error::Config(format!(
            "potential (d={}, alpha={}) is inconsistent with coefficients (d={}, b0/gamma1={})",
            pot.dimension,
            pot.alpha,
            cs.dimension(),
            c.b0 / c.gamma1
        )));
    }
    if n_radii < 2 || !(r_max > 0.0) {
        return Err(Error::Domain("need at least two radii and r_max > 0".into()));
    }
    let r_min = pot.delta * 1e-6;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..n_radii {
        let r = r_min * (r_max / r_min).powf(i as f64 / (n_radii - 1) as f64);
        let g = pot.radial_derivative(r);
        let v = c.gamma1 * pot.radial_laplacian(r) - c.b0 * g * g;
        if !v.is_finite() {
            return Err(Error::non_finite("balance expression", format!("r = {r}"), v));
        }
        if v > best.0 {
            best = (v, r);
        }
    }
    Ok(BalanceReport {
        max_value: best.0,
        argmax_radius: best.1,
        n_radii,
        r_min,
        r_max,
        passes: best.0 <= 1e-10,
    })
}
