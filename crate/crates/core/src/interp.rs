//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson slopes).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Domain(format!(
                "monotone cubic needs >= 2 matching samples, got {} abscissae and {} values",
                n,
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("interpolation abscissae must be strictly increasing".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Domain("interpolation samples must be finite".into()));
        }
        let secants: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if secants[i - 1] * secants[i] <= 0.0 {
                0.0
            } else {
                0.5 * (secants[i - 1] + secants[i])
            };
        }
        for i in 0..n - 1 {
            if secants[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            let a = slopes[i] / secants[i];
            let b = slopes[i + 1] / secants[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[i] = tau * a * secants[i];
                slopes[i + 1] = tau * b * secants[i];
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k => (k - 1).min(self.xs.len() - 2),
        }
    }

    /// Value, first and second derivative. Outside the table the end cubic is
    /// replaced by its tangent line.
    pub fn eval_all(&self, x: f64) -> (f64, f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (self.ys[0] + self.slopes[0] * (x - self.xs[0]), self.slopes[0], 0.0);
        }
        if x >= self.xs[n - 1] {
            return (
                self.ys[n - 1] + self.slopes[n - 1] * (x - self.xs[n - 1]),
                self.slopes[n - 1],
                0.0,
            );
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1, m0, m1) = (self.ys[i], self.ys[i + 1], self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let dv = (6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1;
        let ddv = (12.0 * t - 6.0) * y0 + (6.0 * t - 4.0) * m0 + (-12.0 * t + 6.0) * y1 + (6.0 * t - 2.0) * m1;
        (v, dv / h, ddv / (h * h))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_all(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let c = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 3.0, 5.0, 9.0]).unwrap();
        for (x, y) in [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (4.0, 9.0), (3.0, 7.0), (5.0, 11.0)] {
            assert!((c.eval(x) - y).abs() < 1e-14, "x={x}");
        }
        assert!((c.eval_all(2.5).1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(incs in proptest::collection::vec(0.0f64..5.0, 3..12), probes in proptest::collection::vec(0.0f64..1.0, 20)) {
            let n = incs.len();
            let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.7).collect();
            let mut ys = Vec::with_capacity(n);
            let mut acc = 0.0;
            for inc in &incs { acc += inc; ys.push(acc); }
            let c = MonotoneCubic::new(xs.clone(), ys).unwrap();
            let mut ps: Vec<f64> = probes.iter().map(|p| p * xs[n-1]).collect();
            ps.sort_by(f64::total_cmp);
            for w in ps.windows(2) {
                prop_assert!(c.eval(w[1]) >= c.eval(w[0]) - 1e-12);
            }
        }
    }
}
