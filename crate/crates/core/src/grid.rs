//! Tensor grids on a truncated box (d = 1 or 2) and cell-centred density fields.

use std::sync::Arc;

use crate::coefficients::Potential;
use crate::error::{Error, Result};

/// An interior face between cells `left` and `right = left + stride(axis)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub left: usize,
    pub right: usize,
    pub axis: usize,
    /// Distance between the two cell centres.
    pub dx: f64,
    /// Measure of the face, 1 in one dimension.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    dx: Vec<f64>,
    faces: Vec<Face>,
}

impl Grid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let d = lo.len();
        if !(d == 1 || d == 2) || hi.len() != d || cells.len() != d {
            return Err(Error::Config(format!("grids must be 1- or 2-dimensional with matching axes, got lo={lo:?} hi={hi:?} cells={cells:?}")));
        }
        for a in 0..d {
            if !(lo[a].is_finite() && hi[a].is_finite() && hi[a] > lo[a]) {
                return Err(Error::Config(format!("axis {a}: need lo < hi, got [{}, {}]", lo[a], hi[a])));
            }
            if cells[a] < 4 {
                return Err(Error::Config(format!("axis {a}: need at least 4 cells, got {}", cells[a])));
            }
        }
        let dx: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / cells[a] as f64).collect();
        let mut faces = Vec::new();
        let stride = [1, cells[0]];
        let n: usize = cells.iter().product();
        for axis in 0..d {
            let area: f64 = (0..d).filter(|&b| b != axis).map(|b| dx[b]).product();
            for cell in 0..n {
                let idx = if axis == 0 { cell % cells[0] } else { cell / cells[0] };
                if idx + 1 < cells[axis] {
                    faces.push(Face {
                        left: cell,
                        right: cell + stride[axis],
                        axis,
                        dx: dx[axis],
                        area,
                    });
                }
            }
        }
        Ok(Self { lo, hi, cells, dx, faces })
    }

    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![lo], vec![hi], vec![n])
    }

    /// Symmetric box `[-half_width, half_width]^d` with `n` cells per axis.
    pub fn symmetric(dimension: usize, half_width: f64, n: usize) -> Result<Self> {
        Self::new(vec![-half_width; dimension], vec![half_width; dimension], vec![n; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn dx(&self) -> &[f64] {
        &self.dx
    }
    pub fn faces(&self) -> &[Face] {
        &self.faces
    }
    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }
    pub fn cell_volume(&self) -> f64 {
        self.dx.iter().product()
    }

    /// Multi-index of a flat cell index (x fastest).
    pub fn index(&self, cell: usize) -> [usize; 2] {
        [cell % self.cells[0], cell / self.cells[0]]
    }

    pub fn center(&self, cell: usize, out: &mut [f64]) {
        let idx = self.index(cell);
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.lo[a] + (idx[a] as f64 + 0.5) * self.dx[a];
        }
    }

    pub fn center_vec(&self, cell: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension()];
        self.center(cell, &mut x);
        x
    }

    /// Flat index of the cell containing `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        let mut stride = 1;
        for a in 0..self.dimension() {
            let s = (x[a] - self.lo[a]) / self.dx[a];
            if !(s >= 0.0) || s > self.cells[a] as f64 {
                return None;
            }
            let i = (s as usize).min(self.cells[a] - 1);
            flat += i * stride;
            stride *= self.cells[a];
        }
        Some(flat)
    }

    /// Evaluates a function of position at every cell centre.
    pub fn map_centers(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dimension()];
        (0..self.n_cells())
            .map(|c| {
                self.center(c, &mut x);
                f(&x)
            })
            .collect()
    }

    pub fn potential_at_centers(&self, pot: &dyn Potential) -> Result<Vec<f64>> {
        if pot.dimension() != self.dimension() {
            return Err(Error::GridMismatch(format!("potential has dimension {}, grid {}", pot.dimension(), self.dimension())));
        }
        let v = self.map_centers(|x| pot.value(x));
        if let Some(i) = v.iter().position(|p| !p.is_finite()) {
            return Err(Error::non_finite("Phi", format!("cell {i}"), v[i]));
        }
        Ok(v)
    }
}

/// Per-cell density values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.n_cells())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("density", format!("cell {i}"), values[i]));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n_cells();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = grid.map_centers(f);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values)
    }

    pub fn min(&self) -> (f64, usize) {
        self.values
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |acc, (i, &v)| if v < acc.0 { (v, i) } else { acc })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

pub fn same_grid(u: &DensityField, v: &DensityField) -> Result<()> {
    if Arc::ptr_eq(&u.grid, &v.grid) || u.grid == v.grid {
        Ok(())
    } else {
        Err(Error::GridMismatch("fields live on different grids".into()))
    }
}

pub fn mass(u: &DensityField) -> f64 {
    u.values.iter().sum::<f64>() * u.grid.cell_volume()
}

pub fn l1_norm(u: &DensityField) -> f64 {
    u.values.iter().map(|v| v.abs()).sum::<f64>() * u.grid.cell_volume()
}

/// `‖u‖ = Σ Φ(x_i)|u_i| vol`, with Φ supplied at cell centres.
pub fn weighted_norm(u: &DensityField, phi: &[f64]) -> Result<f64> {
    if phi.len() != u.values.len() {
        return Err(Error::GridMismatch(format!("{} weights for {} cells", phi.len(), u.values.len())));
    }
    Ok(u.values.iter().zip(phi).map(|(v, p)| p * v.abs()).sum::<f64>() * u.grid.cell_volume())
}

pub fn l1_distance(u: &DensityField, v: &DensityField) -> Result<f64> {
    same_grid(u, v)?;
    Ok(u.values.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * u.grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn faces_cover_interior_only() {
        let g = Grid::uniform_1d(0.0, 1.0, 8).unwrap();
        assert_eq!(g.faces().len(), 7);
        let g2 = Grid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![4, 5]).unwrap();
        assert_eq!(g2.faces().len(), 3 * 5 + 4 * 4);
        for f in g2.faces() {
            let (a, b) = (g2.index(f.left), g2.index(f.right));
            assert_eq!(b[f.axis], a[f.axis] + 1);
            assert_eq!(a[1 - f.axis], b[1 - f.axis]);
        }
        assert!(Grid::uniform_1d(0.0, 1.0, 3).is_err());
        assert!(Grid::uniform_1d(1.0, 1.0, 8).is_err());
    }

    #[test]
    fn trivial_norms() {
        let g = Arc::new(Grid::uniform_1d(-1.0, 1.0, 10).unwrap());
        let z = DensityField::zeros(g.clone());
        assert_eq!(mass(&z), 0.0);
        let u = DensityField::from_fn(g.clone(), |x| x[0].sin()).unwrap();
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        let other = Arc::new(Grid::uniform_1d(-1.0, 1.0, 12).unwrap());
        assert!(matches!(l1_distance(&u, &DensityField::zeros(other)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn locate_roundtrip() {
        let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 3.0], vec![7, 9]).unwrap();
        for c in 0..g.n_cells() {
            assert_eq!(g.locate(&g.center_vec(c)), Some(c));
        }
        assert_eq!(g.locate(&[2.0, 1.0]), None);
    }

    proptest! {
        #[test]
        fn weighted_norm_dominates_l1(vals in proptest::collection::vec(-5.0f64..5.0, 16), w in proptest::collection::vec(1.0f64..10.0, 16)) {
            let g = Arc::new(Grid::uniform_1d(0.0, 2.0, 16).unwrap());
            let u = DensityField::new(g, vals).unwrap();
            prop_assert!(weighted_norm(&u, &w).unwrap() >= l1_norm(&u) * (1.0 - 1e-15));
        }
    }
}
