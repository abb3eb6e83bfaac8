//! Exact multi-output GP posterior under isotropic Gaussian noise.
//!
//! The posterior keeps a lower-triangular factor of `K + σ²I` that grows by
//! one block per observation. With independent outputs there is one `τ × τ`
//! factor per output; otherwise a single `mτ × mτ` factor with rows ordered
//! observation-major.
//!
//! [`TrackedPoint`] caches `L⁻¹ k(x)` for a fixed query point. Because rows
//! are only ever appended, bringing the cache up to date after new
//! observations costs `O(τ)` per observation instead of a full solve.

mod factor;

pub use factor::JITTER_LADDER;

use crate::kernels::{euclidean, MultiOutputKernel};
use factor::GrowingCholesky;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("noise variance must be positive and finite, got {0}")]
    NoiseVariance(f64),
    #[error("observation has non-finite entries")]
    NonFinite,
    #[error("expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("covariance factorization failed after adding jitter {jitter}")]
    Factorization { jitter: f64 },
    #[error("information gain needs at least one observation")]
    EmptyTrajectory,
}

/// Posterior mean and per-output standard deviation at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Prediction {
    pub fn stddev_norm(&self) -> f64 {
        self.stddev.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
enum Factorization {
    Independent {
        factors: Vec<GrowingCholesky>,
        z: Vec<Vec<f64>>,
    },
    Dense {
        factor: GrowingCholesky,
        z: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: MultiOutputKernel,
    noise_var: f64,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    factorization: Factorization,
    step_cov: Vec<DMatrix<f64>>,
}

impl GpPosterior {
    /// Prior posterior; uses per-output factors when outputs are independent.
    pub fn new(kernel: MultiOutputKernel, noise_var: f64) -> Result<Self, GpError> {
        let dense = !kernel.is_independent();
        Self::build(kernel, noise_var, dense)
    }

    /// Prior posterior that always uses the joint `mτ × mτ` factor.
    pub fn new_dense(kernel: MultiOutputKernel, noise_var: f64) -> Result<Self, GpError> {
        Self::build(kernel, noise_var, true)
    }

    fn build(kernel: MultiOutputKernel, noise_var: f64, dense: bool) -> Result<Self, GpError> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(GpError::NoiseVariance(noise_var));
        }
        let m = kernel.outputs();
        let factorization = if dense {
            Factorization::Dense {
                factor: GrowingCholesky::default(),
                z: Vec::new(),
            }
        } else {
            Factorization::Independent {
                factors: vec![GrowingCholesky::default(); m],
                z: vec![Vec::new(); m],
            }
        };
        Ok(Self {
            kernel,
            noise_var,
            inputs: Vec::new(),
            outputs: Vec::new(),
            factorization,
            step_cov: Vec::new(),
        })
    }

    pub fn kernel(&self) -> &MultiOutputKernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_var
    }

    pub fn outputs_dim(&self) -> usize {
        self.kernel.outputs()
    }

    /// Number of observations `τ`.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.factorization, Factorization::Dense { .. })
    }

    /// Largest diagonal jitter used so far.
    pub fn max_jitter(&self) -> f64 {
        let fold = |f: &GrowingCholesky| f.jitter().iter().copied().fold(0.0, f64::max);
        match &self.factorization {
            Factorization::Independent { factors, .. } => factors.iter().map(fold).fold(0.0, f64::max),
            Factorization::Dense { factor, .. } => fold(factor),
        }
    }

    /// Posterior covariance blocks `k_{τ-1}(x̃_τ, x̃_τ)` recorded at each update.
    pub fn step_covariances(&self) -> &[DMatrix<f64>] {
        &self.step_cov
    }

    /// Adds the observation `y` at `x`.
    pub fn update(&mut self, x: &[f64], y: &[f64]) -> Result<(), GpError> {
        let m = self.outputs_dim();
        if y.len() != m {
            return Err(GpError::Dimension { expected: m, got: y.len() });
        }
        if let Some(first) = self.inputs.first() {
            if x.len() != first.len() {
                return Err(GpError::Dimension {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        if !y.iter().chain(x).all(|v| v.is_finite()) {
            return Err(GpError::NonFinite);
        }

        let (_, cov) = self.predict_cov(x);
        let prior = self.kernel.eval_matrix(x, x);
        let cross: Vec<DMatrix<f64>> = self.inputs.iter().map(|s| self.kernel.eval_matrix(s, x)).collect();
        let tau = self.len();
        let noise = self.noise_var;

        match &mut self.factorization {
            Factorization::Independent { factors, z } => {
                for j in 0..m {
                    let off: Vec<f64> = cross.iter().map(|b| b[(j, j)]).collect();
                    if let Err(jitter) = factors[j].append(&off, prior[(j, j)] + noise) {
                        for f in &mut factors[..j] {
                            f.truncate(tau);
                        }
                        for v in &mut z[..j] {
                            v.truncate(tau);
                        }
                        return Err(GpError::Factorization { jitter });
                    }
                    factors[j].extend_solution(&mut z[j], &y[j..=j]);
                }
            }
            Factorization::Dense { factor, z } => {
                for i in 0..m {
                    let mut off: Vec<f64> = Vec::with_capacity(tau * m + i);
                    for b in &cross {
                        off.extend((0..m).map(|l| b[(l, i)]));
                    }
                    off.extend((0..i).map(|l| prior[(l, i)]));
                    if let Err(jitter) = factor.append(&off, prior[(i, i)] + noise) {
                        factor.truncate(tau * m);
                        z.truncate(tau * m);
                        return Err(GpError::Factorization { jitter });
                    }
                    factor.extend_solution(z, &y[i..=i]);
                }
            }
        }
        self.inputs.push(x.to_vec());
        self.outputs.push(y.to_vec());
        self.step_cov.push(cov);
        Ok(())
    }

    /// Starts a prediction cache for `x`, synced to the current data.
    pub fn track(&self, x: &[f64]) -> TrackedPoint {
        let m = self.outputs_dim();
        let mut t = TrackedPoint {
            x: x.to_vec(),
            prior: self.kernel.eval_matrix(x, x),
            cols: vec![Vec::new(); m],
            synced: 0,
        };
        t.sync(self);
        t
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        self.track(x).prediction(self)
    }

    /// Posterior mean and full `m × m` covariance at `x`.
    pub fn predict_cov(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        self.track(x).covariance(self)
    }

    /// Chain-rule sum `Σ ½ log|I + σ⁻² k_{τ-1}(x̃_τ, x̃_τ)|`.
    pub fn information_gain(&self) -> Result<f64, GpError> {
        if self.step_cov.is_empty() {
            return Err(GpError::EmptyTrajectory);
        }
        let m = self.outputs_dim();
        Ok(self
            .step_cov
            .iter()
            .map(|c| 0.5 * log_det_spd(&(DMatrix::identity(m, m) + c / self.noise_var)))
            .sum())
    }

    /// `(1/2m) Σ_τ Σ_j log(1 + σ⁻² (σ^j_{τ-1})²)`, a lower bound on the gain.
    pub fn information_gain_lower_bound(&self) -> Result<f64, GpError> {
        if self.step_cov.is_empty() {
            return Err(GpError::EmptyTrajectory);
        }
        let m = self.outputs_dim();
        let total: f64 = self
            .step_cov
            .iter()
            .flat_map(|c| (0..m).map(move |j| c[(j, j)].max(0.0)))
            .map(|v| (1.0 + v / self.noise_var).ln())
            .sum();
        Ok(total / (2.0 * m as f64))
    }
}

/// `log det` of a symmetric positive definite matrix.
pub(crate) fn log_det_spd(a: &DMatrix<f64>) -> f64 {
    match a.clone().cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => a.clone().lu().determinant().ln(),
    }
}

/// Cached `L⁻¹ k(x)` for a fixed query point.
#[derive(Debug, Clone)]
pub struct TrackedPoint {
    x: Vec<f64>,
    prior: DMatrix<f64>,
    cols: Vec<Vec<f64>>,
    synced: usize,
}

impl TrackedPoint {
    pub fn point(&self) -> &[f64] {
        &self.x
    }

    /// Number of observations folded into the cache.
    pub fn synced(&self) -> usize {
        self.synced
    }

    /// Folds in observations added since the last sync.
    pub fn sync(&mut self, gp: &GpPosterior) {
        let m = gp.outputs_dim();
        for s in self.synced..gp.len() {
            let r = euclidean(&gp.inputs[s], &self.x);
            let diag: Vec<f64> = gp.kernel.bases().iter().map(|b| b.eval_distance(r)).collect();
            match &gp.factorization {
                Factorization::Independent { factors, .. } => {
                    for j in 0..m {
                        factors[j].extend_solution(&mut self.cols[j], &diag[j..=j]);
                    }
                }
                Factorization::Dense { factor, .. } => {
                    let block = gp.kernel.mix(&diag);
                    for j in 0..m {
                        let tail: Vec<f64> = (0..m).map(|i| block[(i, j)]).collect();
                        factor.extend_solution(&mut self.cols[j], &tail);
                    }
                }
            }
        }
        self.synced = gp.len();
    }

    /// Syncs and returns the prediction.
    pub fn refresh(&mut self, gp: &GpPosterior) -> Prediction {
        self.sync(gp);
        self.prediction(gp)
    }

    /// Prediction from the cache; the cache must be synced with `gp`.
    pub fn prediction(&self, gp: &GpPosterior) -> Prediction {
        debug_assert_eq!(self.synced, gp.len());
        let m = gp.outputs_dim();
        let mut mean = Vec::with_capacity(m);
        let mut stddev = Vec::with_capacity(m);
        for j in 0..m {
            let v = &self.cols[j];
            let z = match &gp.factorization {
                Factorization::Independent { z, .. } => &z[j],
                Factorization::Dense { z, .. } => z,
            };
            mean.push(dot(v, z));
            stddev.push((self.prior[(j, j)] - dot(v, v)).max(0.0).sqrt());
        }
        Prediction { mean, stddev }
    }

    /// Mean and full covariance from the cache.
    pub fn covariance(&self, gp: &GpPosterior) -> (Vec<f64>, DMatrix<f64>) {
        debug_assert_eq!(self.synced, gp.len());
        let m = gp.outputs_dim();
        let mean = self.prediction(gp).mean;
        let cov = match &gp.factorization {
            Factorization::Independent { .. } => DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    self.prior[(i, i)] - dot(&self.cols[i], &self.cols[i])
                } else {
                    0.0
                }
            }),
            Factorization::Dense { .. } => {
                DMatrix::from_fn(m, m, |i, j| self.prior[(i, j)] - dot(&self.cols[i], &self.cols[j]))
            }
        };
        (mean, cov)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ScalarKernel;

    fn se(nu: f64, l: f64) -> ScalarKernel {
        ScalarKernel::squared_exponential(nu, l).unwrap()
    }

    #[test]
    fn prior_prediction() {
        let k = MultiOutputKernel::independent(vec![se(0.5, 0.1), se(0.1, 0.06)]).unwrap();
        let gp = GpPosterior::new(k, 1e-4).unwrap();
        let p = gp.predict(&[0.3]);
        assert_eq!(p.mean, vec![0.0, 0.0]);
        assert!((p.stddev[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((p.stddev[1] - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        let k = MultiOutputKernel::independent(vec![se(1.0, 0.5)]).unwrap();
        let mut gp = GpPosterior::new(k, 1.0).unwrap();
        gp.update(&[0.2], &[2.0]).unwrap();
        let p = gp.predict(&[0.2]);
        assert!((p.mean[0] - 1.0).abs() < 1e-14);
        assert!((p.stddev[0] * p.stddev[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn single_block_mean() {
        let s = 0.5f64.sqrt();
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, s, s]);
        let k = MultiOutputKernel::linear_mixing(vec![se(0.7, 0.3), se(0.4, 0.2)], a).unwrap();
        let noise = 0.05;
        let mut gp = GpPosterior::new(k.clone(), noise).unwrap();
        let x = [0.4];
        let y = [0.3, -0.8];
        gp.update(&x, &y).unwrap();
        let kxx = k.eval_matrix(&x, &x);
        let sys = &kxx + DMatrix::identity(2, 2) * noise;
        let expected = &kxx * sys.lu().solve(&nalgebra::DVector::from_row_slice(&y)).unwrap();
        let p = gp.predict(&x);
        for j in 0..2 {
            assert!((p.mean[j] - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_observation_shrinks_variance() {
        let k = MultiOutputKernel::independent(vec![se(1.0, 0.2), se(0.5, 0.2)]).unwrap();
        let mut gp = GpPosterior::new(k, 0.1).unwrap();
        gp.update(&[0.5], &[1.0, 0.0]).unwrap();
        let once = gp.predict(&[0.5]);
        gp.update(&[0.5], &[1.0, 0.0]).unwrap();
        let twice = gp.predict(&[0.5]);
        for j in 0..2 {
            assert!(twice.stddev[j] < once.stddev[j]);
        }
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let k = MultiOutputKernel::independent(vec![se(0.5, 0.05), se(0.1, 0.05)]).unwrap();
        let mut gp = GpPosterior::new(k, 1e-3).unwrap();
        gp.update(&[0.0], &[1.0, 1.0]).unwrap();
        let p = gp.predict(&[10.0]);
        assert!(p.mean.iter().all(|m| m.abs() < 1e-6));
        assert!((p.stddev[0] - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn information_gain_single_design() {
        let k = MultiOutputKernel::independent(vec![se(1.0, 1.0), se(1.0, 1.0)]).unwrap();
        let mut gp = GpPosterior::new(k.clone(), 1.0).unwrap();
        assert_eq!(gp.information_gain(), Err(GpError::EmptyTrajectory));
        gp.update(&[0.0], &[0.0, 0.0]).unwrap();
        assert!((gp.information_gain().unwrap() - 2f64.ln()).abs() < 1e-14);

        let mut noisy = GpPosterior::new(k, 1e12).unwrap();
        noisy.update(&[0.0], &[0.0, 0.0]).unwrap();
        assert!(noisy.information_gain().unwrap() < 1e-11);
    }

    #[test]
    fn tracked_point_matches_fresh_prediction() {
        let k = MultiOutputKernel::independent(vec![se(0.5, 0.1), se(0.1, 0.06)]).unwrap();
        let mut gp = GpPosterior::new(k, 1e-3).unwrap();
        let mut t = gp.track(&[0.37]);
        for (i, x) in [0.1, 0.35, 0.4, 0.9].iter().enumerate() {
            gp.update(&[*x], &[i as f64 * 0.1, -0.2]).unwrap();
            assert_eq!(t.refresh(&gp), gp.predict(&[0.37]));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let k = MultiOutputKernel::independent(vec![se(1.0, 1.0)]).unwrap();
        assert_eq!(GpPosterior::new(k.clone(), 0.0).err(), Some(GpError::NoiseVariance(0.0)));
        let mut gp = GpPosterior::new(k, 1.0).unwrap();
        assert_eq!(gp.update(&[0.0], &[f64::NAN]), Err(GpError::NonFinite));
        assert_eq!(
            gp.update(&[0.0], &[1.0, 2.0]),
            Err(GpError::Dimension { expected: 1, got: 2 })
        );
        assert!(gp.is_empty());
    }
}
