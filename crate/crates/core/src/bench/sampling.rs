//! Exact draws of GP sample paths on regular grids.
//!
//! Small grids use a Cholesky factor of the grid covariance. Larger grids use
//! circulant embedding: the stationary covariance on a regular grid embeds in
//! a (block-)circulant matrix diagonalized by the FFT, and the embedding is
//! enlarged until its spectrum is nonnegative.

use super::BenchError;
use crate::kernels::{MultiOutputKernel, OutputStructure, ScalarKernel};
use crate::partition::DesignSpace;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Grids with at most this many points are sampled through Cholesky.
pub const CHOLESKY_LIMIT: usize = 2048;

/// Largest embedding, in points, tried before giving up.
const EMBEDDING_LIMIT: usize = 1 << 24;

/// Spectrum entries below `-NEGATIVE_TOLERANCE · max λ` force a larger embedding.
const NEGATIVE_TOLERANCE: f64 = 1e-10;

/// Regular grid over a box; the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(space: &DesignSpace, counts: Vec<usize>) -> Result<Self, BenchError> {
        if counts.len() != space.dimension() {
            return Err(BenchError::Grid(format!(
                "grid has {} dimensions, space has {}",
                counts.len(),
                space.dimension()
            )));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(BenchError::Grid("every grid dimension needs at least 2 points".into()));
        }
        Ok(Self {
            lower: space.lower().to_vec(),
            upper: space.upper().to_vec(),
            counts,
        })
    }

    /// `2^k + 1` points per dimension with the smallest `k` giving at least
    /// `10^4` points in total.
    pub fn default_counts(dimension: usize) -> Vec<usize> {
        let mut k = 1;
        while ((1usize << k) + 1).pow(dimension as u32) < 10_000 {
            k += 1;
        }
        vec![(1 << k) + 1; dimension]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(&self.counts)
            .map(|((lo, hi), n)| (hi - lo) / (*n as f64 - 1.0))
            .collect()
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.counts.len()];
        for d in (0..self.counts.len()).rev() {
            idx[d] = flat % self.counts[d];
            flat /= self.counts[d];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(d, &i)| {
                if i + 1 == self.counts[d] {
                    self.upper[d]
                } else {
                    self.lower[d] + i as f64 * h[d]
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// A tabulated objective with multilinear interpolation between grid points.
#[derive(Debug, Clone)]
pub struct SampledObjective {
    grid: Grid,
    values: Vec<Vec<f64>>,
    seed: u64,
}

impl SampledObjective {
    pub fn from_values(grid: Grid, values: Vec<Vec<f64>>, seed: u64) -> Result<Self, BenchError> {
        if values.len() != grid.len() {
            return Err(BenchError::Grid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values, seed })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn objectives(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Noise-free value at `x`, interpolated between grid points.
    pub fn value_at(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let h = g.spacing();
        let dims = g.counts.len();
        let mut base = vec![0usize; dims];
        let mut frac = vec![0.0; dims];
        for d in 0..dims {
            let t = ((x[d] - g.lower[d]) / h[d]).clamp(0.0, (g.counts[d] - 1) as f64);
            let i = (t.floor() as usize).min(g.counts[d] - 2);
            base[d] = i;
            frac[d] = (t - i as f64).clamp(0.0, 1.0);
        }
        let m = self.objectives();
        let mut out = vec![0.0; m];
        let mut corner = vec![0usize; dims];
        for mask in 0..(1usize << dims) {
            let mut w = 1.0;
            for d in 0..dims {
                let up = (mask >> d) & 1 == 1;
                corner[d] = base[d] + up as usize;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[g.flatten(&corner)];
            for j in 0..m {
                out[j] += w * v[j];
            }
        }
        out
    }
}

/// Joint draw of all outputs of `kernel` on `grid`.
pub fn sample_gp_function(kernel: &MultiOutputKernel, grid: &Grid, seed: u64) -> Result<SampledObjective, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Vec<f64>> = kernel
        .bases()
        .iter()
        .map(|b| sample_field(b, grid, &mut rng))
        .collect::<Result<_, _>>()?;
    let m = kernel.outputs();
    let values = (0..grid.len())
        .map(|i| match kernel.structure() {
            OutputStructure::Independent => fields.iter().map(|f| f[i]).collect(),
            OutputStructure::LinearMixing(a) => (0..m)
                .map(|j| (0..m).map(|l| a[(j, l)] * fields[l][i]).sum())
                .collect(),
        })
        .collect();
    SampledObjective::from_values(grid.clone(), values, seed)
}

/// One scalar field on the grid.
pub fn sample_field(kernel: &ScalarKernel, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, BenchError> {
    if grid.len() <= CHOLESKY_LIMIT {
        sample_cholesky(kernel, grid, rng)
    } else {
        sample_circulant(kernel, grid, rng)
    }
}

fn sample_cholesky(kernel: &ScalarKernel, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, BenchError> {
    let pts = grid.points();
    let n = pts.len();
    let cov = DMatrix::from_fn(n, n, |i, j| kernel.eval(&pts[i], &pts[j]));
    let mut last = 0.0;
    for &jitter in &crate::gp::JITTER_LADDER {
        last = jitter;
        let shifted = &cov + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = shifted.cholesky() {
            let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            return Ok((chol.l() * xi).iter().copied().collect());
        }
    }
    Err(BenchError::Factorization { jitter: last })
}

/// Spectrum of the circulant embedding, padded until nonnegative.
pub fn circulant_spectrum(kernel: &ScalarKernel, grid: &Grid) -> Result<(Vec<usize>, Vec<f64>), BenchError> {
    let h = grid.spacing();
    let mut sizes: Vec<usize> = grid.counts.iter().map(|&n| (2 * (n - 1)).next_power_of_two()).collect();
    loop {
        let total: usize = sizes.iter().product();
        if total > EMBEDDING_LIMIT {
            return Err(BenchError::Embedding { points: total });
        }
        let mut c: Vec<Complex<f64>> = (0..total)
            .map(|flat| {
                let mut rem = flat;
                let mut r2 = 0.0;
                for d in (0..sizes.len()).rev() {
                    let k = rem % sizes[d];
                    rem /= sizes[d];
                    let lag = k.min(sizes[d] - k) as f64 * h[d];
                    r2 += lag * lag;
                }
                Complex::new(kernel.eval_distance(r2.sqrt()), 0.0)
            })
            .collect();
        fft_nd(&mut c, &sizes);
        let lambda: Vec<f64> = c.iter().map(|z| z.re).collect();
        let max = lambda.iter().copied().fold(0.0, f64::max);
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= -NEGATIVE_TOLERANCE * max {
            return Ok((sizes, lambda.into_iter().map(|l| l.max(0.0)).collect()));
        }
        for s in &mut sizes {
            *s *= 2;
        }
    }
}

fn sample_circulant(kernel: &ScalarKernel, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, BenchError> {
    let (sizes, lambda) = circulant_spectrum(kernel, grid)?;
    let total = lambda.len() as f64;
    let mut w: Vec<Complex<f64>> = lambda
        .iter()
        .map(|l| {
            let s = (l / total).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(s * re, s * im)
        })
        .collect();
    fft_nd(&mut w, &sizes);
    Ok((0..grid.len())
        .map(|flat| {
            let idx = grid.unflatten(flat);
            let pos = idx.iter().zip(&sizes).fold(0, |acc, (i, n)| acc * n + i);
            w[pos].re
        })
        .collect())
}

/// In-place forward FFT over every axis of a row-major array.
fn fft_nd(data: &mut [Complex<f64>], sizes: &[usize]) {
    let mut planner = FftPlanner::new();
    let total = data.len();
    let mut stride = 1;
    for d in (0..sizes.len()).rev() {
        let n = sizes[d];
        let fft = planner.plan_fft_forward(n);
        let mut line = vec![Complex::new(0.0, 0.0); n];
        let block = n * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                for k in 0..n {
                    line[k] = data[outer + inner + k * stride];
                }
                fft.process(&mut line);
                for k in 0..n {
                    data[outer + inner + k * stride] = line[k];
                }
            }
        }
        stride *= n;
    }
}
