//! Synthetic benchmarks: GP-sampled objectives, ground truth and scoring.

mod metrics;
mod sampling;

pub use metrics::{avg_mse, eps_accuracy, eps_coverage, reference_point, score, true_pareto_front, MetricsReport};
pub use sampling::{circulant_spectrum, sample_field, sample_gp_function, Grid, SampledObjective, CHOLESKY_LIMIT};

use crate::engine::{self, Action, EngineConfig, EngineError, RoundRecord, RunResult};
use crate::pareto::{hypervolume, nondominated_set, ParetoError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid covariance factorization failed after adding jitter {jitter}")]
    Factorization { jitter: f64 },
    #[error("circulant embedding stayed indefinite up to {points} points")]
    Embedding { points: usize },
    #[error("{0} is empty")]
    EmptySet(String),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Noisy evaluations of a tabulated objective.
pub struct NoisyOracle<'a> {
    objective: &'a SampledObjective,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl<'a> NoisyOracle<'a> {
    pub fn new(objective: &'a SampledObjective, noise_var: f64, rng: ChaCha8Rng) -> Self {
        Self {
            objective,
            noise: Normal::new(0.0, noise_var.sqrt()).expect("finite noise"),
            rng,
        }
    }
}

impl engine::Oracle for NoisyOracle<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>, String> {
        Ok(self
            .objective
            .value_at(x)
            .into_iter()
            .map(|v| v + self.noise.sample(&mut self.rng))
            .collect())
    }
}

/// Random streams derived from a seed: objective sample and observation noise.
pub fn seed_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let sample = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (sample, noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub evaluations: usize,
    pub hypervolume: f64,
}

/// How often true values fell outside the per-round confidence boxes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Containment {
    pub checked: u64,
    pub escaped: u64,
}

impl Containment {
    pub fn rate(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.escaped as f64 / self.checked as f64
        }
    }
}

/// Everything produced by one seeded run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
    pub trace: Vec<RoundRecord>,
    pub hypervolume_curve: Vec<CurvePoint>,
    /// Nondominated true values at the decided centers.
    pub predicted_front: Vec<Vec<f64>>,
    pub predicted_designs: Vec<Vec<f64>>,
    pub true_front_size: usize,
    /// `None` when nothing was decided (truncated run).
    pub metrics: Option<MetricsReport>,
    pub containment: Containment,
}

/// Pareto front of the objective over the grid and the extra `points`.
///
/// Designs between grid nodes take interpolated values that may lie just
/// above the grid front; they are values of the objective all the same, so
/// they belong in the truth the metrics compare against.
pub fn true_front_with(objective: &SampledObjective, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let grid_front = true_pareto_front(objective).points.into_iter().map(|p| p.into_inner());
    let all: Vec<Vec<f64>> = grid_front.chain(points.iter().cloned()).collect();
    nondominated_set(&all)
        .map(|keep| keep.into_iter().map(|i| all[i].clone()).collect())
        .unwrap_or_default()
}

/// Samples the objective for `seed`, runs the engine and scores the result.
pub fn run_seed(config: &EngineConfig, grid: &Grid, seed: u64) -> Result<SeedRun, BenchError> {
    let start = Instant::now();
    let min_eps = config.epsilon.iter().copied().fold(f64::INFINITY, f64::min);
    let spacing = grid.spacing().into_iter().fold(0.0, f64::max);
    if spacing >= min_eps / 10.0 {
        log::warn!("grid spacing {spacing} is not below a tenth of the smallest epsilon {min_eps}");
    }
    let objective = sample_gp_function(&config.kernel, grid, seed)?;
    let (_, noise_rng) = seed_streams(seed);
    let mut oracle = NoisyOracle::new(&objective, config.noise_var, noise_rng);

    let mut trace = Vec::new();
    let mut curve_fronts: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    let mut containment = Containment::default();
    let result = engine::run_with(config.clone(), &mut oracle, |state, record| {
        for (id, q) in state.last_confidence() {
            let f = objective.value_at(&state.node(*id).expect("known node").center);
            for (j, v) in f.iter().enumerate() {
                containment.checked += 1;
                if *v < q.lower[j] || *v > q.upper[j] {
                    containment.escaped += 1;
                }
            }
        }
        if record.action == Action::Evaluate {
            let values: Vec<Vec<f64>> = state
                .undecided()
                .iter()
                .chain(state.decided().iter())
                .map(|id| objective.value_at(&state.node(*id).expect("known node").center))
                .collect();
            let front = nondominated_set(&values)
                .map(|keep| keep.into_iter().map(|i| values[i].clone()).collect())
                .unwrap_or_default();
            curve_fronts.push((record.tau, front));
        }
        trace.push(record.clone());
    })?;

    let values: Vec<Vec<f64>> = result.centers.iter().map(|c| objective.value_at(c)).collect();
    let (predicted_front, predicted_designs): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match nondominated_set(&values) {
        Ok(keep) => (
            keep.iter().map(|&i| values[i].clone()).collect(),
            keep.iter().map(|&i| result.centers[i].clone()).collect(),
        ),
        Err(_) => (Vec::new(), Vec::new()),
    };
    let truth = true_front_with(&objective, &predicted_front);

    let mut all: Vec<&[Vec<f64>]> = vec![&truth, &predicted_front];
    all.extend(curve_fronts.iter().map(|(_, f)| f.as_slice()));
    let reference = reference_point(&all);
    let hypervolume_curve = curve_fronts
        .iter()
        .map(|(n, f)| {
            Ok(CurvePoint {
                evaluations: *n,
                hypervolume: hypervolume(f, &reference)?,
            })
        })
        .collect::<Result<Vec<_>, ParetoError>>()?;

    let metrics = if predicted_front.is_empty() {
        None
    } else {
        let mut report = score(&predicted_front, &truth, &config.epsilon, Some(reference))?;
        report.evaluations = result.evaluations.len();
        report.wall_time_secs = start.elapsed().as_secs_f64();
        Some(report)
    };

    Ok(SeedRun {
        seed,
        result,
        trace,
        hypervolume_curve,
        predicted_front,
        predicted_designs,
        true_front_size: truth.len(),
        metrics,
        containment,
    })
}
