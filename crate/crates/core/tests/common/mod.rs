#![allow(dead_code)]

use epal::confidence::HyperRect;
use epal::engine::{Action, EngineConfig, EngineState, Oracle, RoundRecord, RunResult};
use epal::gp::GpPosterior;
use epal::kernels::{KernelFamily, MultiOutputKernel, ScalarKernel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use epal::partition::{DesignSpace, Metric, NodeId, PartitionParams};
use std::collections::BTreeMap;

pub fn kernel(family: KernelFamily, variance: f64, lengthscale: f64) -> ScalarKernel {
    ScalarKernel::new(family, variance, lengthscale).unwrap()
}

pub fn config_1d(kernels: Vec<ScalarKernel>, epsilon: f64, h_max_override: Option<u32>) -> EngineConfig {
    let m = kernels.len();
    EngineConfig {
        space: DesignSpace::unit_cube(1, Metric::Linf).unwrap(),
        partition: PartitionParams::bisection(1, Metric::Linf),
        kernel: MultiOutputKernel::independent(kernels).unwrap(),
        noise_var: 1e-4,
        epsilon: vec![epsilon; m],
        delta: 0.05,
        c1: 1.0,
        q: 1.0,
        h_max_override,
        beta_h_max: None,
        budget: 10_000,
    }
}

/// Two-objective setup with SE variances 0.5/0.1 and lengthscales 0.1/0.06.
pub fn simulation1(h_max_override: Option<u32>) -> EngineConfig {
    config_1d(
        vec![
            kernel(KernelFamily::SquaredExponential, 0.5, 0.1),
            kernel(KernelFamily::SquaredExponential, 0.1, 0.06),
        ],
        0.05,
        h_max_override,
    )
}

/// Two objectives sharing one kernel with variance 0.6 and lengthscale 0.2.
pub fn sweep(family: KernelFamily, epsilon: f64, h_max_override: Option<u32>) -> EngineConfig {
    let k = kernel(family, 0.6, 0.2);
    config_1d(vec![k, k], epsilon, h_max_override)
}

/// Which trace properties held over one run.
#[derive(Debug, Clone, Default)]
pub struct TraceReport {
    /// `ω̄` never increased before the first degenerate intersection.
    pub omega_nonincreasing: bool,
    /// No node deeper than `min(h_max, override)`.
    pub depth_capped: bool,
    /// Per-node evaluation counts within `⌈σ² β_τ / V_h²⌉`.
    pub evaluation_cap: bool,
    /// Active and discarded cells tile the space after every round.
    pub tiling: bool,
    /// Children start with exactly their parent's rectangle.
    pub inheritance: bool,
    /// Every evaluation round adds one observation; refinements add none.
    pub tau_accounting: bool,
    pub failures: Vec<String>,
}

impl TraceReport {
    pub fn all(&self) -> bool {
        self.omega_nonincreasing
            && self.depth_capped
            && self.evaluation_cap
            && self.tiling
            && self.inheritance
            && self.tau_accounting
    }
}

fn tiles(state: &EngineState) -> bool {
    let space = state.config().space.clone();
    let mut cells: Vec<_> = state
        .undecided()
        .iter()
        .chain(state.decided().iter())
        .chain(state.discarded().iter())
        .map(|id| state.node(*id).unwrap().cell.clone())
        .collect();
    let volume: f64 = cells.iter().map(|c| c.volume()).sum();
    let total = space.as_cell().volume();
    if (volume - total).abs() > 1e-12 * total {
        return false;
    }
    if space.dimension() == 1 {
        cells.sort_by(|a, b| a.lower[0].total_cmp(&b.lower[0]));
        let mut at = space.lower()[0];
        for c in &cells {
            if c.lower[0] != at {
                return false;
            }
            at = c.upper[0];
        }
        return at == space.upper()[0];
    }
    // pairwise interiors disjoint
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let overlap = (0..space.dimension()).all(|d| {
                cells[i].lower[d].max(cells[j].lower[d]) < cells[i].upper[d].min(cells[j].upper[d])
            });
            if overlap {
                return false;
            }
        }
    }
    true
}

/// Runs to completion one round at a time, checking trace properties.
pub fn run_checked(config: EngineConfig, oracle: &mut dyn Oracle) -> (RunResult, Vec<RoundRecord>, TraceReport) {
    let mut state = EngineState::new(config).unwrap();
    let cap = state.schedules().depth_cap();
    let noise = state.config().noise_var;
    let branching = state.config().partition.branching;
    let mut report = TraceReport {
        omega_nonincreasing: true,
        depth_capped: true,
        evaluation_cap: true,
        tiling: true,
        inheritance: true,
        tau_accounting: true,
        failures: Vec::new(),
    };
    let mut trace: Vec<RoundRecord> = Vec::new();
    let mut last_omega = f64::INFINITY;
    while !state.is_finished() {
        let before: BTreeMap<NodeId, HyperRect> = state
            .undecided()
            .iter()
            .chain(state.decided().iter())
            .map(|id| (*id, state.rectangle(*id).unwrap().clone()))
            .collect();
        let tau_before = state.tau();
        let degeneracies = state.degeneracies();
        let record = state.step(oracle).unwrap();

        if state.degeneracies() == degeneracies && degeneracies == 0 {
            if record.omega_bar > last_omega {
                report.omega_nonincreasing = false;
                report.failures.push(format!("omega rose in round {}", record.round));
            }
            last_omega = record.omega_bar;
        }
        if state.max_depth() > cap {
            report.depth_capped = false;
            report.failures.push(format!("depth {} beyond cap {cap}", state.max_depth()));
        }
        let expected_tau = match record.action {
            Action::Evaluate => tau_before + 1,
            _ => tau_before,
        };
        if state.tau() != expected_tau || record.tau != expected_tau {
            report.tau_accounting = false;
            report.failures.push(format!("tau off in round {}", record.round));
        }
        if record.action == Action::Refine {
            let parent = NodeId {
                depth: record.node_h.unwrap(),
                index: record.node_i.unwrap(),
            };
            let q = state
                .last_confidence()
                .iter()
                .find(|(id, _)| *id == parent)
                .map(|(_, q)| q.clone())
                .unwrap();
            let expected = before[&parent].intersect(&q).0;
            let first = (parent.index - 1) * branching as u64 + 1;
            for k in 0..branching as u64 {
                let child = NodeId {
                    depth: parent.depth + 1,
                    index: first + k,
                };
                if state.rectangle(child) != Some(&expected) {
                    report.inheritance = false;
                    report.failures.push(format!("child {child} did not inherit"));
                }
            }
        }
        if !tiles(&state) {
            report.tiling = false;
            report.failures.push(format!("cells do not tile after round {}", record.round));
        }
        trace.push(record);
    }
    let tau = state.tau();
    for (id, n) in state.evaluations_per_node() {
        let bound = state.schedules().evaluation_cap(id.depth, tau, noise).ceil();
        if *n as f64 > bound {
            report.evaluation_cap = false;
            report.failures.push(format!("node {id} evaluated {n} times, cap {bound}"));
        }
    }
    (state.result(), trace, report)
}

/// Objectives `(x, 1 - x)` on the first coordinate, observed without noise.
pub fn conflicting(x: &[f64]) -> Result<Vec<f64>, String> {
    Ok(vec![x[0], 1.0 - x[0]])
}

pub fn random_kernel(rng: &mut ChaCha8Rng, m: usize, mixed: bool) -> MultiOutputKernel {
    let bases: Vec<ScalarKernel> = (0..m)
        .map(|_| {
            let family = if rng.gen_bool(0.5) {
                KernelFamily::SquaredExponential
            } else {
                KernelFamily::Matern52
            };
            ScalarKernel::new(family, rng.gen_range(0.1..1.0), rng.gen_range(0.05..0.5)).unwrap()
        })
        .collect();
    if !mixed || m == 1 {
        return MultiOutputKernel::independent(bases).unwrap();
    }
    let mut a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    for i in 0..m {
        let n = a.row(i).norm();
        a.row_mut(i).scale_mut(1.0 / n);
    }
    MultiOutputKernel::linear_mixing(bases, a).unwrap()
}

/// Full `mτ × mτ` prior covariance over observation-major stacked outputs.
pub fn joint_cov(k: &MultiOutputKernel, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let m = k.outputs();
    let n = xs.len();
    let mut big = DMatrix::zeros(m * n, m * n);
    for a in 0..n {
        for b in 0..n {
            big.view_mut((a * m, b * m), (m, m)).copy_from(&k.eval_matrix(&xs[a], &xs[b]));
        }
    }
    big
}

/// Random kernel, noise level and observation sequence for one seed.
pub struct Trajectory {
    pub kernel: MultiOutputKernel,
    pub noise: f64,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

pub fn trajectory(seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 1 + (seed % 3) as usize;
    let kernel = random_kernel(&mut rng, m, seed.is_multiple_of(2));
    let tau = rng.gen_range(1..=20);
    let d = rng.gen_range(1..=2);
    let xs: Vec<Vec<f64>> = (0..tau).map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..tau).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    Trajectory {
        kernel,
        noise: 10f64.powf(rng.gen_range(-4.0..-1.0)),
        xs,
        ys,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest relative error of both posteriors against a dense solve of the
/// full joint system, over five random query points.
pub fn dense_prediction_error(t: &Trajectory, seed: u64) -> f64 {
    let m = t.kernel.outputs();
    let n = m * t.xs.len();
    let mut fast = GpPosterior::new(t.kernel.clone(), t.noise).unwrap();
    let mut dense = GpPosterior::new_dense(t.kernel.clone(), t.noise).unwrap();
    for (x, y) in t.xs.iter().zip(&t.ys) {
        fast.update(x, y).unwrap();
        dense.update(x, y).unwrap();
    }
    let chol = (joint_cov(&t.kernel, &t.xs) + DMatrix::identity(n, n) * t.noise).cholesky().unwrap();
    let alpha = chol.solve(&DVector::from_iterator(n, t.ys.iter().flatten().copied()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let x: Vec<f64> = (0..t.xs[0].len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut kx = DMatrix::zeros(n, m);
        for (a, xa) in t.xs.iter().enumerate() {
            kx.view_mut((a * m, 0), (m, m)).copy_from(&t.kernel.eval_matrix(xa, &x));
        }
        let mean = kx.transpose() * &alpha;
        let cov = t.kernel.eval_matrix(&x, &x) - kx.transpose() * chol.solve(&kx);
        for gp in [&fast, &dense] {
            let p = gp.predict(&x);
            for j in 0..m {
                worst = worst.max(relative(p.mean[j], mean[j]));
                worst = worst.max(relative(p.stddev[j], cov[(j, j)].max(0.0).sqrt()));
            }
            let (_, c) = gp.predict_cov(&x);
            worst = worst.max((&c - &cov).abs().max() / cov.abs().max().max(1.0));
        }
    }
    worst
}

/// Chain-rule information gain and `½ log det(I + σ⁻² K)` over the trajectory.
pub fn information_gains(t: &Trajectory) -> (f64, f64, f64) {
    let mut gp = GpPosterior::new(t.kernel.clone(), t.noise).unwrap();
    for (x, y) in t.xs.iter().zip(&t.ys) {
        gp.update(x, y).unwrap();
    }
    let n = t.kernel.outputs() * t.xs.len();
    let a = DMatrix::identity(n, n) + joint_cov(&t.kernel, &t.xs) / t.noise;
    let global = a.cholesky().unwrap().l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    (gp.information_gain().unwrap(), global, gp.information_gain_lower_bound().unwrap())
}
