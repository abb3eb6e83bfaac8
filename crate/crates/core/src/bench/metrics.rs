//! Quality metrics comparing a predicted front with the true front.

use super::BenchError;
use crate::pareto::{eps_pareto_front_membership_with_slack, hypervolume, nondominated_set, ObjVec, ParetoFront};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hypervolume: f64,
    pub eps_accuracy: f64,
    pub eps_coverage: f64,
    pub avg_mse: f64,
    pub reference_point: Vec<f64>,
    pub evaluations: usize,
    pub wall_time_secs: f64,
}

fn nonempty<P>(points: &[P], what: &str) -> Result<(), BenchError> {
    if points.is_empty() {
        Err(BenchError::EmptySet(what.to_string()))
    } else {
        Ok(())
    }
}

/// Fraction of predicted points inside the ε-Pareto-front slab of `truth`.
pub fn eps_accuracy<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    predicted: &[P],
    truth: &[Q],
    eps: &[f64],
    slack: f64,
) -> Result<f64, BenchError> {
    nonempty(predicted, "predicted set")?;
    let inside = predicted
        .iter()
        .filter(|y| eps_pareto_front_membership_with_slack(y.as_ref(), truth, eps, slack))
        .count();
    Ok(inside as f64 / predicted.len() as f64)
}

/// Fraction of true points `p` with some predicted `q` satisfying `p ≼ q + 2ε`.
pub fn eps_coverage<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    truth: &[P],
    predicted: &[Q],
    eps: &[f64],
    slack: f64,
) -> Result<f64, BenchError> {
    nonempty(truth, "true front")?;
    let covered = truth
        .iter()
        .filter(|p| {
            predicted.iter().any(|q| {
                p.as_ref()
                    .iter()
                    .zip(q.as_ref())
                    .zip(eps)
                    .all(|((a, b), e)| *a <= b + 2.0 * e + slack)
            })
        })
        .count();
    Ok(covered as f64 / truth.len() as f64)
}

/// Mean over true points of the squared distance to the nearest predicted point.
pub fn avg_mse<P: AsRef<[f64]>, Q: AsRef<[f64]>>(truth: &[P], predicted: &[Q]) -> Result<f64, BenchError> {
    nonempty(truth, "true front")?;
    nonempty(predicted, "predicted set")?;
    let total: f64 = truth
        .iter()
        .map(|p| {
            predicted
                .iter()
                .map(|q| {
                    p.as_ref()
                        .iter()
                        .zip(q.as_ref())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// Componentwise minimum over all sets, minus a tenth of the range.
pub fn reference_point(sets: &[&[Vec<f64>]]) -> Vec<f64> {
    let m = sets.iter().flat_map(|s| s.iter()).map(|p| p.len()).next().unwrap_or(0);
    (0..m)
        .map(|j| {
            let vals = sets.iter().flat_map(|s| s.iter()).map(|p| p[j]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let range = if hi > lo { hi - lo } else { 1.0 };
            lo - 0.1 * range
        })
        .collect()
}

/// All four metrics for a predicted set against a true front.
pub fn score(
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
    eps: &[f64],
    reference: Option<Vec<f64>>,
) -> Result<MetricsReport, BenchError> {
    let reference = reference.unwrap_or_else(|| reference_point(&[truth, predicted]));
    let front: Vec<&Vec<f64>> = nondominated_set(predicted)
        .map_err(|_| BenchError::EmptySet("predicted set".into()))?
        .into_iter()
        .map(|i| &predicted[i])
        .collect();
    Ok(MetricsReport {
        hypervolume: hypervolume(&front, &reference)?,
        eps_accuracy: eps_accuracy(predicted, truth, eps, 0.0)?,
        eps_coverage: eps_coverage(truth, predicted, eps, 0.0)?,
        avg_mse: avg_mse(truth, predicted)?,
        reference_point: reference,
        evaluations: 0,
        wall_time_secs: 0.0,
    })
}

/// Nondominated subset of the tabulated objective, with source designs.
pub fn true_pareto_front(obj: &super::SampledObjective) -> ParetoFront {
    let keep = nondominated_set(obj.values()).expect("grid is nonempty");
    let grid = obj.grid();
    ParetoFront {
        points: keep
            .iter()
            .map(|&i| ObjVec::new(obj.values()[i].clone()).expect("finite sample"))
            .collect(),
        designs: Some(keep.iter().map(|&i| grid.point(i)).collect()),
    }
}
