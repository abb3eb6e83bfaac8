//! Scalar and multi-output covariance functions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("kernel variance must be positive and finite, got {0}")]
    Variance(f64),
    #[error("kernel lengthscale must be positive and finite, got {0}")]
    Lengthscale(f64),
    #[error("a multi-output kernel needs at least one output")]
    NoOutputs,
    #[error("mixing matrix must be {m}x{m}, got {rows}x{cols}")]
    MixingShape { m: usize, rows: usize, cols: usize },
    #[error("mixing matrix row {row} has norm {norm}, expected 1")]
    MixingRowNorm { row: usize, norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

/// Stationary kernel `k(r)` with variance `ν` and lengthscale `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarKernel {
    pub family: KernelFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

/// Constants with `l(x, y) ≤ C_K d(x, y)^α` for the induced metric `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub c_k: f64,
    pub alpha: f64,
}

impl ScalarKernel {
    pub fn new(family: KernelFamily, variance: f64, lengthscale: f64) -> Result<Self, KernelError> {
        let k = Self {
            family,
            variance,
            lengthscale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::SquaredExponential, variance, lengthscale)
    }

    pub fn matern52(variance: f64, lengthscale: f64) -> Result<Self, KernelError> {
        Self::new(KernelFamily::Matern52, variance, lengthscale)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(KernelError::Variance(self.variance));
        }
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(KernelError::Lengthscale(self.lengthscale));
        }
        Ok(())
    }

    /// Covariance as a function of the Euclidean distance `r`.
    pub fn eval_distance(&self, r: f64) -> f64 {
        let nu = self.variance;
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => nu * (-(r * r) / (l * l)).exp(),
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * r / l;
                nu * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_distance(euclidean(x, y))
    }

    /// SE: `C_K = √(2ν)/L`; Matérn-5/2: `C_K = √(5ν/3)/L`; `α = 1` for both.
    pub fn smoothness_constants(&self) -> SmoothnessConstants {
        let c_k = match self.family {
            KernelFamily::SquaredExponential => (2.0 * self.variance).sqrt() / self.lengthscale,
            KernelFamily::Matern52 => (5.0 * self.variance / 3.0).sqrt() / self.lengthscale,
        };
        SmoothnessConstants { c_k, alpha: 1.0 }
    }

    /// Induced metric `√(k(x,x) + k(y,y) − 2k(x,y))` at distance `r`.
    pub fn induced_metric(&self, r: f64) -> f64 {
        (2.0 * (self.variance - self.eval_distance(r))).max(0.0).sqrt()
    }
}

pub(crate) fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// How the outputs of a multi-output kernel are coupled.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputStructure {
    /// `k(x, y) = diag(k_j(x, y))`.
    Independent,
    /// `k(x, y) = A diag(k_j(x, y)) Aᵀ` with unit-norm rows of `A`.
    LinearMixing(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutputKernel {
    bases: Vec<ScalarKernel>,
    structure: OutputStructure,
}

impl MultiOutputKernel {
    pub fn independent(bases: Vec<ScalarKernel>) -> Result<Self, KernelError> {
        if bases.is_empty() {
            return Err(KernelError::NoOutputs);
        }
        for b in &bases {
            b.validate()?;
        }
        Ok(Self {
            bases,
            structure: OutputStructure::Independent,
        })
    }

    pub fn linear_mixing(bases: Vec<ScalarKernel>, mixing: DMatrix<f64>) -> Result<Self, KernelError> {
        let mut k = Self::independent(bases)?;
        let m = k.bases.len();
        if mixing.nrows() != m || mixing.ncols() != m {
            return Err(KernelError::MixingShape {
                m,
                rows: mixing.nrows(),
                cols: mixing.ncols(),
            });
        }
        for (row, r) in mixing.row_iter().enumerate() {
            let norm = r.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(KernelError::MixingRowNorm { row, norm });
            }
        }
        k.structure = OutputStructure::LinearMixing(mixing);
        Ok(k)
    }

    pub fn outputs(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[ScalarKernel] {
        &self.bases
    }

    pub fn structure(&self) -> &OutputStructure {
        &self.structure
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.structure, OutputStructure::Independent)
    }

    /// The `m × m` covariance between outputs at `x` and at `y`.
    pub fn eval_matrix(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let r = euclidean(x, y);
        let diag: Vec<f64> = self.bases.iter().map(|b| b.eval_distance(r)).collect();
        self.mix(&diag)
    }

    /// `A diag(d) Aᵀ`, or `diag(d)` for independent outputs.
    pub(crate) fn mix(&self, diag: &[f64]) -> DMatrix<f64> {
        let m = diag.len();
        match &self.structure {
            OutputStructure::Independent => DMatrix::from_fn(m, m, |i, j| if i == j { diag[i] } else { 0.0 }),
            OutputStructure::LinearMixing(a) => {
                DMatrix::from_fn(m, m, |i, j| (0..m).map(|l| a[(i, l)] * diag[l] * a[(j, l)]).sum())
            }
        }
    }

    /// Prior variances `k^{jj}(x, x)`.
    pub fn prior_variances(&self) -> Vec<f64> {
        let diag: Vec<f64> = self.bases.iter().map(|b| b.variance).collect();
        let full = self.mix(&diag);
        (0..self.outputs()).map(|j| full[(j, j)]).collect()
    }

    /// Shared constants for all outputs: the largest base `C_K`.
    ///
    /// Mixing with unit-norm rows cannot increase the induced metric beyond
    /// the largest base metric, so the bound carries over.
    pub fn smoothness_constants(&self) -> SmoothnessConstants {
        let c_k = self
            .bases
            .iter()
            .map(|b| b.smoothness_constants().c_k)
            .fold(0.0, f64::max);
        SmoothnessConstants { c_k, alpha: 1.0 }
    }
}
