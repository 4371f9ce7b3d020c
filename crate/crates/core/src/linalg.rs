//! Sparse linear solvers for the Newton systems: tridiagonal LU with partial
//! pivoting in one dimension, Jacobi-preconditioned BiCGSTAB otherwise.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    /// Sub-diagonal, `lower[i]` couples row `i+1` to column `i`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// Super-diagonal, `upper[i]` couples row `i` to column `i+1`.
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        if row == col {
            self.diag[row] += v;
        } else if col + 1 == row {
            self.lower[col] += v;
        } else if row + 1 == col {
            self.upper[row] += v;
        } else {
            panic!("entry ({row}, {col}) outside the tridiagonal band");
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting; fill-in limited to a second super-diagonal.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        assert_eq!(rhs.len(), n);
        let mut dl = self.lower.clone();
        let mut d = self.diag.clone();
        let mut du = self.upper.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::Numerical(format!("singular tridiagonal matrix at row {i}")));
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                b[i + 1] -= f * b[i];
                if i + 2 < n {
                    dl[i] = 0.0;
                }
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let t = d[i + 1];
                d[i + 1] = du[i] - f * t;
                du[i] = t;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du2[i];
                }
                b.swap(i, i + 1);
                b[i + 1] -= f * b[i];
            }
        }
        if n > 0 && d[n - 1] == 0.0 {
            return Err(Error::Numerical(format!("singular tridiagonal matrix at row {}", n - 1)));
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= du[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * x[i + 2];
            }
            x[i] = s / d[i];
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("tridiagonal solve produced a non-finite value at row {i}")));
        }
        Ok(x)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.col_idx[k] == i)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB with a Jacobi preconditioner.
/// Stops when `‖b - Ax‖₂ ≤ rel_tol·‖b‖₂`.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv_diag[i] * p[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        let mut s = r.clone();
        for i in 0..n {
            x[i] += alpha * y[i];
            s[i] -= alpha * v[i];
        }
        if norm2(&s) <= rel_tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = inv_diag[i] * s[i];
        }
        a.matvec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= rel_tol * bnorm {
            return Ok(x);
        }
        if !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    let res: f64 = norm2(&ax.iter().zip(b).map(|(p, q)| q - p).collect::<Vec<_>>());
    if res <= rel_tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Numerical(format!("BiCGSTAB did not converge: relative residual {:.3e} after {max_iter} iterations", res / bnorm)))
    }
}

/// Newton matrix in whichever storage suits the grid.
#[derive(Debug, Clone)]
pub enum SystemMatrix {
    Tridiagonal(Tridiagonal),
    Sparse(CsrMatrix),
}

impl SystemMatrix {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            SystemMatrix::Tridiagonal(t) => t.solve(rhs),
            SystemMatrix::Sparse(a) => bicgstab(a, rhs, 1e-14, 20 * a.n + 100),
        }
    }
}
