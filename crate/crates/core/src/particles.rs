//! McKean-Vlasov particle system for the nonlinear distorted Brownian motion
//!
//! ```text
//! dX = D(X) b(u(t,X)) dt + sqrt(2β(u)/u)(t,X) dW,     u(t) = law density of X(t),
//! ```
//!
//! whose forward equation is `u_t = Δβ(u) - div(D b(u) u)`. The law is
//! replaced by a binned Gaussian kernel density estimate refreshed every step.
//!
//! Reproducibility: each particle carries a ChaCha stream id; the normals for
//! step `s` are drawn from word position `s << WORD_SHIFT` of that stream. The
//! density estimate accumulates fixed-point integer weights, so it does not
//! depend on particle order or thread count.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid};

/// Oversampling of the density-estimate bins relative to the output grid.
pub const OVERSAMPLE: usize = 4;
/// Gaussian kernels are cut off at this many bandwidths.
pub const KERNEL_CUTOFF: f64 = 5.0;
const WORD_SHIFT: u32 = 16;
const FIXED_ONE: f64 = (1u64 << 40) as f64;
const CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dimension: usize,
    /// Flat `N×d` coordinates.
    pub positions: Vec<f64>,
    pub stream_ids: Vec<u64>,
    pub seed: u64,
    /// Number of dynamics steps taken so far.
    pub step: u64,
    pub t: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.stream_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream_ids.is_empty()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dimension..(k + 1) * self.dimension]
    }

    /// Reorders particles (with their streams) by `perm`: new `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.dimension;
        let mut positions = Vec::with_capacity(self.positions.len());
        for &p in perm {
            positions.extend_from_slice(&self.positions[p * d..(p + 1) * d]);
        }
        Self {
            positions,
            stream_ids: perm.iter().map(|&p| self.stream_ids[p]).collect(),
            ..self.clone()
        }
    }
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn stream_rng(base: &ChaCha8Rng, stream: u64, block: u64) -> ChaCha8Rng {
    let mut r = base.clone();
    r.set_stream(stream);
    r.set_word_pos((block as u128) << WORD_SHIFT);
    r
}

/// Draws `n` particles with law `u dx / mass(u)`: the cell is chosen from the
/// cumulative cell masses and the position is uniform inside the cell.
pub fn sample_from_density(u: &DensityField, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let (min, cell) = u.min();
    if min < 0.0 {
        return Err(Error::Domain(format!("sampling density is negative ({min:.3e}) in cell {cell}")));
    }
    let total: f64 = u.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("cannot sample from a zero-mass density".into()));
    }
    let grid = u.grid();
    let d = grid.dimension();
    let mut cdf = Vec::with_capacity(u.values.len());
    let mut acc = 0.0;
    for v in &u.values {
        acc += v / total;
        cdf.push(acc);
    }
    let last_positive = u.values.iter().rposition(|&v| v > 0.0).unwrap();
    let base = base_rng(seed);
    let positions: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = stream_rng(&base, k as u64, 0);
            let p: f64 = rng.random::<f64>();
            let c = cdf.partition_point(|&x| x <= p).min(last_positive);
            let mut x = grid.center_vec(c);
            for (a, xa) in x.iter_mut().enumerate() {
                let v: f64 = rng.random::<f64>();
                *xa += (v - 0.5) * grid.dx()[a];
            }
            x
        })
        .collect();
    Ok(ParticleEnsemble {
        dimension: d,
        positions,
        stream_ids: (0..n as u64).collect(),
        seed,
        step: 0,
        t: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.06 σ̂ N^{-1/(d+4)}`, with σ̂ the mean per-axis sample standard deviation,
    /// but never below the width of one estimation bin.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    pub bandwidth: f64,
    /// Cell averages on the output grid.
    pub field: DensityField,
}

/// Binned Gaussian density estimate on an `OVERSAMPLE`-times finer copy of a grid.
struct BinnedKde {
    grid: Arc<Grid>,
    fine_cells: [usize; 2],
    fine_dx: [f64; 2],
    bandwidth: f64,
    /// Density on the fine bins (x fastest).
    density: Vec<f64>,
}

// Coordinates are sorted before summing so the result does not depend on particle order.
fn silverman(ens: &ParticleEnsemble) -> f64 {
    let d = ens.dimension;
    let n = ens.len() as f64;
    let mut sigma = 0.0;
    for a in 0..d {
        let mut xs: Vec<f64> = (0..ens.len()).map(|k| ens.positions[k * d + a]).collect();
        xs.par_sort_unstable_by(f64::total_cmp);
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        sigma += var.sqrt();
    }
    1.06 * (sigma / d as f64) * n.powf(-1.0 / (d as f64 + 4.0))
}

/// Silverman's rule, floored at one fine bin so a point cloud still gets a kernel.
fn silverman_on(grid: &Grid, ens: &ParticleEnsemble) -> f64 {
    let bin = grid.dx().iter().fold(f64::INFINITY, |m, &h| m.min(h)) / OVERSAMPLE as f64;
    silverman(ens).max(bin)
}

fn reflect_index(j: isize, m: usize) -> usize {
    let m = m as isize;
    let mut j = j;
    loop {
        if j < 0 {
            j = -1 - j;
        } else if j >= m {
            j = 2 * m - 1 - j;
        } else {
            return j as usize;
        }
    }
}

impl BinnedKde {
    fn build(grid: &Arc<Grid>, ens: &ParticleEnsemble, bandwidth: f64) -> Result<Self> {
        let d = grid.dimension();
        if ens.dimension != d {
            return Err(Error::GridMismatch(format!("particles in dimension {}, grid {d}", ens.dimension)));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let mut fine_cells = [1usize; 2];
        let mut fine_dx = [1.0f64; 2];
        for a in 0..d {
            fine_cells[a] = grid.cells()[a] * OVERSAMPLE;
            fine_dx[a] = grid.dx()[a] / OVERSAMPLE as f64;
        }
        let nbins = fine_cells[0] * fine_cells[1];
        let lo = grid.lo().to_vec();

        // linear binning with fixed-point weights, summed per chunk then across chunks
        let chunks: Vec<Vec<i128>> = ens
            .positions
            .par_chunks(CHUNK * d)
            .map(|chunk| {
                let mut h = vec![0i128; nbins];
                for p in chunk.chunks(d) {
                    let mut idx = [[0usize; 2]; 2];
                    let mut w = [[0i128; 2]; 2];
                    for a in 0..2 {
                        if a >= d {
                            idx[a] = [0, 0];
                            w[a] = [FIXED_ONE as i128, 0];
                            continue;
                        }
                        let s = (p[a] - lo[a]) / fine_dx[a] - 0.5;
                        let i = s.floor();
                        let frac = ((s - i) * FIXED_ONE).round() as i128;
                        let i = i as isize;
                        idx[a] = [reflect_index(i, fine_cells[a]), reflect_index(i + 1, fine_cells[a])];
                        w[a] = [FIXED_ONE as i128 - frac, frac];
                    }
                    for (ix, wx) in idx[0].iter().zip(w[0]) {
                        for (iy, wy) in idx[1].iter().zip(w[1]) {
                            h[ix + fine_cells[0] * iy] += wx * wy;
                        }
                    }
                }
                h
            })
            .collect();
        let mut counts = vec![0i128; nbins];
        for h in &chunks {
            for (c, v) in counts.iter_mut().zip(h) {
                *c += v;
            }
        }
        let norm = FIXED_ONE * FIXED_ONE * ens.len() as f64;
        let mut density: Vec<f64> = counts.iter().map(|&c| c as f64 / norm).collect();

        // separable convolution with a truncated, normalised Gaussian; reflection at the walls
        for a in 0..d {
            let half = (KERNEL_CUTOFF * bandwidth / fine_dx[a]).ceil() as isize;
            let mut kernel: Vec<f64> = (-half..=half)
                .map(|k| {
                    let z = k as f64 * fine_dx[a] / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .collect();
            let ks: f64 = kernel.iter().sum();
            kernel.iter_mut().for_each(|v| *v /= ks);
            let m = fine_cells[a];
            let other = nbins / m;
            let stride = if a == 0 { 1 } else { fine_cells[0] };
            let mut out = vec![0.0; nbins];
            for o in 0..other {
                let base = if a == 0 { o * fine_cells[0] } else { o };
                for i in 0..m {
                    let v = density[base + i * stride];
                    if v == 0.0 {
                        continue;
                    }
                    for (kk, &kw) in kernel.iter().enumerate() {
                        let j = reflect_index(i as isize + kk as isize - half, m);
                        out[base + j * stride] += v * kw;
                    }
                }
            }
            density = out;
        }
        let bin_volume: f64 = fine_dx[..d].iter().product();
        density.iter_mut().for_each(|v| *v /= bin_volume);
        Ok(Self {
            grid: grid.clone(),
            fine_cells,
            fine_dx,
            bandwidth,
            density,
        })
    }

    /// Multilinear interpolation between fine-bin centres, constant beyond the outer centres.
    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.grid.dimension();
        let mut idx = [[0usize; 2]; 2];
        let mut w = [[1.0f64, 0.0]; 2];
        for a in 0..d {
            let m = self.fine_cells[a];
            let s = ((x[a] - self.grid.lo()[a]) / self.fine_dx[a] - 0.5).clamp(0.0, (m - 1) as f64);
            let i = (s.floor() as usize).min(m.saturating_sub(2));
            let f = s - i as f64;
            idx[a] = [i, (i + 1).min(m - 1)];
            w[a] = [1.0 - f, f];
        }
        let mut v = 0.0;
        for (ix, wx) in idx[0].iter().zip(w[0]) {
            for (iy, wy) in idx[1].iter().zip(w[1]) {
                if wx * wy != 0.0 {
                    v += wx * wy * self.density[ix + self.fine_cells[0] * iy];
                }
            }
        }
        v
    }

    /// Averages the fine bins over each output cell.
    fn coarse(&self) -> Result<KdeEstimate> {
        let d = self.grid.dimension();
        let mut values = vec![0.0; self.grid.n_cells()];
        let per = (OVERSAMPLE as f64).powi(d as i32);
        for iy in 0..self.fine_cells[1] {
            for ix in 0..self.fine_cells[0] {
                let cx = ix / OVERSAMPLE;
                let cy = if d == 2 { iy / OVERSAMPLE } else { 0 };
                values[cx + self.grid.cells()[0] * cy] += self.density[ix + self.fine_cells[0] * iy] / per;
            }
        }
        Ok(KdeEstimate {
            bandwidth: self.bandwidth,
            field: DensityField::new(self.grid.clone(), values)?,
        })
    }
}

/// Density estimate of the ensemble, reported as cell averages on `grid`.
pub fn estimate_density(grid: &Arc<Grid>, ens: &ParticleEnsemble, bandwidth: Bandwidth) -> Result<KdeEstimate> {
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_on(grid, ens),
        Bandwidth::Fixed(h) => h,
    };
    BinnedKde::build(grid, ens, h)?.coarse()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleOptions {
    pub bandwidth: Bandwidth,
    /// Record the density estimate every this many steps (and at the end); 0 records only the end.
    pub snapshot_every: usize,
    /// Multiplies `sqrt(2β(u)/u)`. 1 matches the forward equation; 0.5 gives
    /// the `(β(u)/2u)^{1/2}` convention, whose law solves `u_t = ¼Δβ(u) - div(Dbu)`.
    pub noise_scale: f64,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            snapshot_every: 0,
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub ensemble: ParticleEnsemble,
    /// `(t, estimate)` pairs; the first entry is the initial law.
    pub kde_history: Vec<(f64, KdeEstimate)>,
}

/// Noise amplitude `sqrt(2β(u)/u)`, with the limit `sqrt(2β'(0))` at `u = 0`.
pub fn noise_amplitude(cs: &CoefficientSet, u: f64) -> f64 {
    if u > 1e-12 {
        (2.0 * cs.beta(u) / u).sqrt()
    } else {
        (2.0 * cs.beta_prime(0.0)).sqrt()
    }
}

/// Euler-Maruyama with reflection at the walls of `grid`, which also carries
/// the density estimate.
pub fn simulate(cs: &CoefficientSet, grid: &Arc<Grid>, ensemble: &ParticleEnsemble, t_final: f64, dt: f64, opts: &ParticleOptions) -> Result<SimulationOutput> {
    if !(opts.noise_scale >= 0.0 && opts.noise_scale.is_finite()) {
        return Err(Error::Config(format!("noise_scale must be finite and nonnegative, got {}", opts.noise_scale)));
    }
    if !(dt > 0.0 && dt.is_finite()) || !(t_final >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt={dt}, T={t_final}")));
    }
    let d = grid.dimension();
    if cs.dimension() != d || ensemble.dimension != d {
        return Err(Error::GridMismatch("coefficients, grid and particles must share a dimension".into()));
    }
    if ensemble.is_empty() {
        return Err(Error::Domain("empty ensemble".into()));
    }
    let n_steps = (t_final / dt).round() as usize;
    let mut ens = ensemble.clone();
    let base = base_rng(ens.seed);
    let sqdt = dt.sqrt();
    let lo = grid.lo().to_vec();
    let hi = grid.hi().to_vec();
    let cell = grid.dx().to_vec();

    let bandwidth_of = |e: &ParticleEnsemble| match opts.bandwidth {
        Bandwidth::Silverman => silverman_on(grid, e),
        Bandwidth::Fixed(h) => h,
    };
    let mut kde = BinnedKde::build(grid, &ens, bandwidth_of(&ens))?;
    let mut history = vec![(ens.t, kde.coarse()?)];

    for s in 1..=n_steps {
        let block = ens.step + 1;
        let failure: Option<(usize, f64)> = ens
            .positions
            .par_chunks_mut(d)
            .zip(ens.stream_ids.par_iter())
            .enumerate()
            .map(|(k, (x, &stream))| {
                let u = kde.eval(x).max(0.0);
                let mob = cs.b(u);
                let sig = opts.noise_scale * noise_amplitude(cs, u) * sqdt;
                let mut drift = [0.0; 2];
                cs.drift(x, &mut drift[..d]);
                let mut rng = stream_rng(&base, stream, block);
                let mut worst: Option<(usize, f64)> = None;
                for a in 0..d {
                    let xi: f64 = rng.sample(StandardNormal);
                    let mut y = x[a] + drift[a] * mob * dt + sig * xi;
                    let over = (lo[a] - y).max(y - hi[a]);
                    if over > cell[a] {
                        worst = Some((k, over));
                    }
                    if y < lo[a] {
                        y = 2.0 * lo[a] - y;
                    } else if y > hi[a] {
                        y = 2.0 * hi[a] - y;
                    }
                    x[a] = y.clamp(lo[a], hi[a]);
                }
                worst
            })
            .reduce(|| None, |a, b| match (a, b) {
                (Some(p), Some(q)) => Some(if p.0 <= q.0 { p } else { q }),
                (p, None) => p,
                (None, q) => q,
            });
        if let Some((particle, overshoot)) = failure {
            return Err(Error::StepSize { particle, overshoot });
        }
        ens.step += 1;
        ens.t = s as f64 * dt + ensemble.t;
        kde = BinnedKde::build(grid, &ens, bandwidth_of(&ens))?;
        if (opts.snapshot_every > 0 && s % opts.snapshot_every == 0) || s == n_steps {
            history.push((ens.t, kde.coarse()?));
        }
    }
    Ok(SimulationOutput { ensemble: ens, kde_history: history })
}
