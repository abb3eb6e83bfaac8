//! Confidence hyper-rectangles in objective space.

use crate::gp::{Prediction, TrackedPoint};
use crate::partition::NodeId;
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lower, upper]` in objective space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperRect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        debug_assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
        Self { lower, upper }
    }

    /// The whole of `R^m`.
    pub fn unbounded(m: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn min_corner(&self) -> &[f64] {
        &self.lower
    }

    pub fn max_corner(&self) -> &[f64] {
        &self.upper
    }

    /// Euclidean length of the diagonal.
    pub fn diameter(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn is_subset_of(&self, other: &HyperRect) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a >= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a <= b)
    }

    /// Componentwise intersection. An empty coordinate collapses to the
    /// midpoint of the gap, and the returned flag is set.
    pub fn intersect(&self, q: &HyperRect) -> (HyperRect, bool) {
        let mut degenerate = false;
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let lo = self.lower[j].max(q.lower[j]);
            let hi = self.upper[j].min(q.upper[j]);
            if lo > hi {
                let mid = 0.5 * (lo + hi);
                lower.push(mid);
                upper.push(mid);
                degenerate = true;
            } else {
                lower.push(lo);
                upper.push(hi);
            }
        }
        (HyperRect { lower, upper }, degenerate)
    }
}

/// Per-objective box for a node at depth `h`.
///
/// The own term is `μ ± √β σ`; with a parent prediction, the bounds are
/// tightened by the parent's `μ_p ± √β σ_p` widened by `V_{h-1}`. Both sides
/// are then widened by `V_h`.
pub fn node_indices(
    own: &Prediction,
    parent: Option<&Prediction>,
    beta: f64,
    v_h: f64,
    v_parent: f64,
) -> HyperRect {
    debug_assert!(beta >= 0.0 && v_h >= 0.0);
    let sb = beta.sqrt();
    let m = own.mean.len();
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for j in 0..m {
        let mut lo = own.mean[j] - sb * own.stddev[j];
        let mut hi = own.mean[j] + sb * own.stddev[j];
        if let Some(p) = parent {
            lo = lo.max(p.mean[j] - sb * p.stddev[j] - v_parent);
            hi = hi.min(p.mean[j] + sb * p.stddev[j] + v_parent);
        }
        lower.push(lo - v_h);
        upper.push(hi + v_h);
    }
    HyperRect { lower, upper }
}

/// What the engine knows about one active node.
#[derive(Debug, Clone)]
pub struct NodeBelief {
    pub node: NodeId,
    /// Cumulative rectangle `R_t`.
    pub rect: HyperRect,
    /// Prediction cache at the node center.
    pub tracker: TrackedPoint,
    /// Prediction and the evaluation count it was computed at.
    pub cached: Option<(Prediction, usize)>,
}
