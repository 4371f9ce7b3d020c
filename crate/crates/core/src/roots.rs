//! Bracketed root finding for monotone scalar maps.

use crate::error::{Error, Result};

/// Expands `[lo, hi]` geometrically around its midpoint until `f(lo) <= 0 <= f(hi)`
/// for an increasing `f`. Returns the bracket together with the endpoint values.
pub fn expand_bracket<F>(f: &F, mut lo: f64, mut hi: f64, max_doublings: usize) -> Result<(f64, f64, f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    assert!(lo < hi, "bracket must be ordered");
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    for _ in 0..=max_doublings {
        if flo <= 0.0 && fhi >= 0.0 {
            return Ok((lo, hi, flo, fhi));
        }
        let width = hi - lo;
        if flo > 0.0 {
            hi = lo;
            fhi = flo;
            lo -= 2.0 * width;
            flo = f(lo)?;
        } else {
            lo = hi;
            flo = fhi;
            hi += 2.0 * width;
            fhi = f(hi)?;
        }
        if !flo.is_finite() || !fhi.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value while bracketing on [{lo}, {hi}]"
            )));
        }
    }
    Err(Error::Config(format!(
        "no sign change found after {max_doublings} bracket doublings (last bracket [{lo}, {hi}])"
    )))
}

/// Safeguarded Newton iteration for an increasing function on a valid bracket.
///
/// `f` returns `(value, derivative)`. Newton steps that leave the bracket, or
/// fail to halve it, are replaced by bisection.
pub fn newton_bracketed<F>(f: F, mut lo: f64, mut hi: f64, x_tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let mut x = 0.5 * (lo + hi);
    let mut last_width = hi - lo;
    for _ in 0..max_iter {
        let (fx, dfx) = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let width = hi - lo;
        let next = if dfx > 0.0 && newton > lo && newton < hi && width < 0.75 * last_width {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_width = width.max(f64::MIN_POSITIVE);
        let step = (next - x).abs();
        x = next;
        if step <= x_tol * (1.0 + x.abs()) || width <= x_tol * (1.0 + x.abs()) {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!(
        "bracketed Newton did not converge on [{lo}, {hi}] within {max_iter} iterations"
    )))
}
