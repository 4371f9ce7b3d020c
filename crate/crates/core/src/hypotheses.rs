//! Sample-based certification of the structural hypotheses on β, b and Φ.
//!
//! Nothing here is a proof: every predicate is evaluated on a finite lattice
//! and the report records that lattice.

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};

/// Tolerance below which a sampled violation is treated as roundoff.
pub const CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisOptions {
    /// Density values are sampled on `[-r_max, r_max]`.
    pub r_max: f64,
    pub density_samples: usize,
    /// If set, the linear growth floor `min (Φ(x)-1)/|x|` over `|x| > radius` is reported.
    pub growth_radius: Option<f64>,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        Self {
            r_max: 10.0,
            density_samples: 2001,
            growth_radius: None,
        }
    }
}

/// One predicate evaluated on samples. `violation` is the largest amount by which
/// it failed (0 when it held everywhere) and `location` where that happened.
#[derive(Debug, Clone, PartialEq)]
pub struct PredicateCheck {
    pub name: &'static str,
    pub passed: bool,
    pub violation: f64,
    pub location: Vec<f64>,
    pub samples: usize,
    /// True for conditions that involve integrability or limits and are only estimated.
    pub sampled_not_proven: bool,
}

impl PredicateCheck {
    fn new(name: &'static str, sampled_not_proven: bool) -> Self {
        Self {
            name,
            passed: true,
            violation: 0.0,
            location: Vec::new(),
            samples: 0,
            sampled_not_proven,
        }
    }

    /// Records a sample whose signed excess over the admissible region is `excess`.
    fn record(&mut self, excess: f64, at: &[f64]) {
        self.samples += 1;
        if excess > self.violation || (self.location.is_empty() && excess >= self.violation) {
            self.violation = excess.max(0.0);
            self.location = at.to_vec();
        }
        if excess > CHECK_TOL {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub sample_box: Vec<(f64, f64)>,
    pub points_per_axis: usize,
    pub r_max: f64,
    pub beta_bounds: PredicateCheck,
    pub b_bounded: PredicateCheck,
    pub drift_regularity: PredicateCheck,
    pub potential_floor: PredicateCheck,
    pub potential_growth: PredicateCheck,
    pub mobility_floor: PredicateCheck,
    pub balance: PredicateCheck,
    /// Lattice quadrature of `∫_box Φ^{-m}`.
    pub phi_minus_m_integral: f64,
    pub sup_drift: f64,
    pub sup_laplacian: f64,
    /// `γ₁(m+1)|ΔΦ|_∞ + |b|_∞(1+m)²|D|²_∞` over the box.
    pub rho: Option<f64>,
    pub growth_floor: Option<f64>,
}

impl HypothesisReport {
    pub fn checks(&self) -> [&PredicateCheck; 7] {
        [
            &self.beta_bounds,
            &self.b_bounded,
            &self.drift_regularity,
            &self.potential_floor,
            &self.potential_growth,
            &self.mobility_floor,
            &self.balance,
        ]
    }

    pub fn passes(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }

    /// (i)-(v) without the balance condition.
    pub fn passes_basic(&self) -> bool {
        self.checks().iter().filter(|c| c.name != self.balance.name).all(|c| c.passed)
    }
}

impl std::fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "# sample box {:?}, {} points per axis, density range [-{}, {}]", self.sample_box, self.points_per_axis, self.r_max, self.r_max)?;
        for c in self.checks() {
            writeln!(
                f,
                "{:<34} {}  violation={:.16e} at {:?} samples={}{}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.violation,
                c.location,
                c.samples,
                if c.sampled_not_proven { "  (sampled, not proven)" } else { "" }
            )?;
        }
        writeln!(f, "phi_minus_m_integral {:.16e}  (sampled, not proven)", self.phi_minus_m_integral)?;
        writeln!(f, "sup_drift {:.16e}", self.sup_drift)?;
        writeln!(f, "sup_laplacian {:.16e}", self.sup_laplacian)?;
        match self.rho {
            Some(r) => writeln!(f, "rho {r:.16e}")?,
            None => writeln!(f, "rho unavailable")?,
        }
        if let Some(g) = self.growth_floor {
            writeln!(f, "linear_growth_floor {g:.16e}")?;
        }
        writeln!(f, "overall {}", if self.passes() { "PASS" } else { "FAIL" })
    }
}

fn finite(what: &'static str, at: &[f64], v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(what, format!("{at:?}"), v))
    }
}

/// Evaluates the hypotheses on an `n_samples^d` lattice covering `sample_box`
/// (endpoints included) and on `density_samples` density values.
pub fn check_hypotheses(cs: &CoefficientSet, sample_box: &[(f64, f64)], n_samples: usize, opts: &HypothesisOptions) -> Result<HypothesisReport> {
    let d = cs.dimension();
    if sample_box.len() != d {
        return Err(Error::Domain(format!("sample box has {} axes, potential has dimension {d}", sample_box.len())));
    }
    if n_samples < 2 || opts.density_samples < 2 {
        return Err(Error::Domain("need at least 2 samples per axis".into()));
    }
    if sample_box.iter().any(|&(lo, hi)| !(hi > lo)) {
        return Err(Error::Domain(format!("degenerate sample box {sample_box:?}")));
    }
    let c = cs.constants;

    let mut beta_bounds = PredicateCheck::new("(i) gamma <= beta' <= gamma1", false);
    let mut b_bounded = PredicateCheck::new("(ii) |b| <= b_sup, b' finite", true);
    let mut mobility_floor = PredicateCheck::new("(v) b >= b0 on [0, r_max]", false);
    beta_bounds.record(cs.beta(0.0).abs(), &[0.0]);
    for k in 0..opts.density_samples {
        let r = -opts.r_max + 2.0 * opts.r_max * k as f64 / (opts.density_samples - 1) as f64;
        let bp = finite("beta'", &[r], cs.beta_prime(r))?;
        let b = finite("b", &[r], cs.b(r))?;
        finite("b'", &[r], cs.b_prime(r))?;
        beta_bounds.record((c.gamma - bp).max(bp - c.gamma1), &[r]);
        b_bounded.record(b.abs() - c.b_sup, &[r]);
        if r >= 0.0 {
            mobility_floor.record(c.b0 - b, &[r]);
        }
    }

    let mut drift_regularity = PredicateCheck::new("(iii) D, div D bounded on box", true);
    let mut potential_floor = PredicateCheck::new("(iv) Phi >= 1", false);
    let mut potential_growth = PredicateCheck::new("(iv) Phi grows towards box boundary", true);
    let mut balance = PredicateCheck::new("(vi) gamma1 lap Phi - b0 |grad Phi|^2 <= 0", false);

    let steps: Vec<f64> = sample_box.iter().map(|&(lo, hi)| (hi - lo) / (n_samples - 1) as f64).collect();
    let cell_volume: f64 = steps.iter().product();
    let total = n_samples.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut phi_integral = 0.0;
    let mut sup_drift: f64 = 0.0;
    let mut sup_lap: f64 = 0.0;
    let mut boundary_min = f64::INFINITY;
    let mut interior_at_center = f64::NAN;
    let mut center_dist = f64::INFINITY;
    let center: Vec<f64> = sample_box.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut growth_floor: Option<f64> = None;

    for flat in 0..total {
        let mut rem = flat;
        let mut on_boundary = false;
        for a in 0..d {
            let i = rem % n_samples;
            rem /= n_samples;
            x[a] = sample_box[a].0 + steps[a] * i as f64;
            on_boundary |= i == 0 || i == n_samples - 1;
        }
        let phi = finite("Phi", &x, cs.phi(&x))?;
        let lap = finite("Laplacian Phi", &x, cs.laplacian_phi(&x))?;
        cs.potential.gradient(&x, &mut grad);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        finite("grad Phi", &x, g2)?;

        potential_floor.record(1.0 - phi, &x);
        balance.record(c.gamma1 * lap - c.b0 * g2, &x);
        drift_regularity.record(0.0, &x);
        sup_drift = sup_drift.max(g2.sqrt());
        sup_lap = sup_lap.max(lap.abs());

        // trapezoid weights
        let mut w = cell_volume;
        let mut rem = flat;
        for _ in 0..d {
            let i = rem % n_samples;
            rem /= n_samples;
            if i == 0 || i == n_samples - 1 {
                w *= 0.5;
            }
        }
        phi_integral += w * phi.max(f64::MIN_POSITIVE).powf(-c.m);

        if on_boundary {
            boundary_min = boundary_min.min(phi);
        }
        let dc: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if dc < center_dist {
            center_dist = dc;
            interior_at_center = phi;
        }
        if let Some(r0) = opts.growth_radius {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > r0 {
                let s = (phi - 1.0) / r;
                growth_floor = Some(growth_floor.map_or(s, |g: f64| g.min(s)));
            }
        }
    }
    // strict: a flat potential does not confine
    potential_growth.record(interior_at_center - boundary_min, &center);
    potential_growth.passed &= boundary_min > interior_at_center;

    let rho = if sup_lap.is_finite() && sup_drift.is_finite() {
        Some(c.gamma1 * (c.m + 1.0) * sup_lap + c.b_sup * (1.0 + c.m).powi(2) * sup_drift * sup_drift)
    } else {
        None
    };

    Ok(HypothesisReport {
        sample_box: sample_box.to_vec(),
        points_per_axis: n_samples,
        r_max: opts.r_max,
        beta_bounds,
        b_bounded,
        drift_regularity,
        potential_floor,
        potential_growth,
        mobility_floor,
        balance,
        phi_minus_m_integral: phi_integral,
        sup_drift,
        sup_laplacian: sup_lap,
        rho,
        growth_floor,
    })
}
