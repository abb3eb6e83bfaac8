//! Dominance relations, nondominated filtering and ε-Pareto membership.
//!
//! Objectives are maximized: `u ≼ v` means `u_j ≤ v_j` for every `j`.

mod hypervolume;

pub use hypervolume::{hypervolume, hypervolume_monte_carlo, hypervolume_with, HypervolumeOptions};

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Deref;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParetoError {
    #[error("point set is empty")]
    Empty,
    #[error("epsilon must be nonnegative, got {0:?}")]
    NegativeEpsilon(Vec<f64>),
    #[error("expected {expected} objectives, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective vector has non-finite entries")]
    NonFinite,
}

/// A point in objective space with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ObjVec(Vec<f64>);

impl ObjVec {
    pub fn new(values: Vec<f64>) -> Result<Self, ParetoError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(ParetoError::NonFinite)
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ObjVec {
    type Error = ParetoError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ObjVec> for Vec<f64> {
    fn from(v: ObjVec) -> Self {
        v.0
    }
}

impl Deref for ObjVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ObjVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Mutually nondominated objective vectors, optionally with their designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ObjVec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<Vec<f64>>>,
}

impl ParetoFront {
    /// Nondominated subset of `points`, carrying designs along when given.
    pub fn from_points(points: Vec<ObjVec>, designs: Option<Vec<Vec<f64>>>) -> Result<Self, ParetoError> {
        let keep = nondominated_set(&points)?;
        let designs = designs.map(|d| keep.iter().map(|&i| d[i].clone()).collect());
        Ok(Self {
            points: keep.iter().map(|&i| points[i].clone()).collect(),
            designs,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `u ≼ v`.
pub fn weakly_dominated(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(a, b)| a <= b)
}

/// `u ≺ v`: weakly dominated with at least one strict inequality.
pub fn dominated(u: &[f64], v: &[f64]) -> bool {
    weakly_dominated(u, v) && u.iter().zip(v).any(|(a, b)| a < b)
}

/// `u ≼_ε v`, i.e. `u ≼ v + ε`.
pub fn eps_dominated(u: &[f64], v: &[f64], eps: &[f64]) -> Result<bool, ParetoError> {
    check_eps(eps)?;
    Ok(u.iter().zip(v).zip(eps).all(|((a, b), e)| *a <= b + e))
}

fn check_eps(eps: &[f64]) -> Result<(), ParetoError> {
    if eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(ParetoError::NegativeEpsilon(eps.to_vec()));
    }
    Ok(())
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, ParetoError> {
    let m = points.first().ok_or(ParetoError::Empty)?.as_ref().len();
    for p in points {
        let p = p.as_ref();
        if p.len() != m {
            return Err(ParetoError::DimensionMismatch {
                expected: m,
                got: p.len(),
            });
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(ParetoError::NonFinite);
        }
    }
    Ok(m)
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("finite values")
}

/// Indices (ascending) of points not strictly dominated by any other point.
/// Duplicates are all retained.
pub fn nondominated_set<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<usize>, ParetoError> {
    let m = check_points(points)?;
    let pts: Vec<&[f64]> = points.iter().map(|p| p.as_ref()).collect();
    let mut keep = match m {
        2 => sweep_2d(&pts),
        3 => sweep_3d(&pts),
        _ => kung(&pts),
    };
    keep.sort_unstable();
    Ok(keep)
}

fn sweep_2d(pts: &[&[f64]]) -> Vec<usize> {
    let idx: Vec<usize> = (0..pts.len()).collect();
    sweep_2d_on(pts, &idx, 0, 1)
}

/// Two-objective sweep over the subset `idx` using coordinates `a` and `b`.
fn sweep_2d_on(pts: &[&[f64]], idx: &[usize], a: usize, b: usize) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&i, &j| cmp(pts[j][a], pts[i][a]).then(cmp(pts[j][b], pts[i][b])));
    let mut keep = Vec::new();
    let mut best_prev = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let head = pts[order[start]][a];
        let mut end = start;
        while end < order.len() && pts[order[end]][a] == head {
            end += 1;
        }
        let group_max = pts[order[start]][b];
        if group_max > best_prev {
            keep.extend(order[start..end].iter().filter(|&&i| pts[i][b] == group_max));
        }
        best_prev = best_prev.max(group_max);
        start = end;
    }
    keep
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp(self.0, other.0)
    }
}

/// Two-dimensional maximal staircase: keys increase while values decrease.
#[derive(Default)]
struct Staircase(BTreeMap<Key, f64>);

impl Staircase {
    /// Whether some stored `(p, q)` has `p ≥ b` and `q ≥ c`.
    fn covers(&self, b: f64, c: f64) -> bool {
        self.0.range(Key(b)..).next().is_some_and(|(_, &q)| q >= c)
    }

    fn insert(&mut self, b: f64, c: f64) {
        if self.covers(b, c) {
            return;
        }
        let stale: Vec<Key> = self
            .0
            .range(..Key(b))
            .rev()
            .take_while(|(_, &q)| q <= c)
            .map(|(k, _)| *k)
            .collect();
        for k in stale {
            self.0.remove(&k);
        }
        self.0.insert(Key(b), c);
    }
}

fn sweep_3d(pts: &[&[f64]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| cmp(pts[j][0], pts[i][0]));
    let mut stairs = Staircase::default();
    let mut keep = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let head = pts[order[start]][0];
        let mut end = start;
        while end < order.len() && pts[order[end]][0] == head {
            end += 1;
        }
        let group = &order[start..end];
        for i in sweep_2d_on(pts, group, 1, 2) {
            if !stairs.covers(pts[i][1], pts[i][2]) {
                keep.push(i);
            }
        }
        for &i in group {
            stairs.insert(pts[i][1], pts[i][2]);
        }
        start = end;
    }
    keep
}

/// Divide and conquer over a lexicographically descending order, in which a
/// point can only be dominated by points that precede it.
fn kung(pts: &[&[f64]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| {
        pts[j]
            .iter()
            .zip(pts[i].iter())
            .map(|(a, b)| cmp(*a, *b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    kung_rec(pts, &order)
}

fn kung_rec(pts: &[&[f64]], order: &[usize]) -> Vec<usize> {
    if order.len() <= 1 {
        return order.to_vec();
    }
    let mid = order.len() / 2;
    let mut top = kung_rec(pts, &order[..mid]);
    let bottom = kung_rec(pts, &order[mid..]);
    let survivors: Vec<usize> = bottom
        .into_iter()
        .filter(|&b| !top.iter().any(|&t| dominated(pts[b], pts[t])))
        .collect();
    top.extend(survivors);
    top
}

/// Ids whose min-corner is not weakly dominated by any other id's corner.
/// Among exactly equal corners only the smallest id is kept.
pub fn pessimistic_pareto<T: Ord + Copy>(corners: &[(T, Vec<f64>)]) -> Result<Vec<T>, ParetoError> {
    let pts: Vec<&[f64]> = corners.iter().map(|(_, c)| c.as_slice()).collect();
    let mut front = nondominated_set(&pts)?;
    // group exact duplicates, keep the smallest id of each group
    front.sort_by(|&i, &j| {
        pts[i]
            .iter()
            .zip(pts[j].iter())
            .map(|(a, b)| cmp(*a, *b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(corners[i].0.cmp(&corners[j].0))
    });
    let mut out: Vec<T> = Vec::new();
    let mut last: Option<&[f64]> = None;
    for i in front {
        if last != Some(pts[i]) {
            out.push(corners[i].0);
            last = Some(pts[i]);
        }
    }
    out.sort();
    Ok(out)
}

/// Membership in the ε-Pareto front slab below `front`.
pub fn eps_pareto_front_membership<P: AsRef<[f64]>>(y: &[f64], front: &[P], eps: &[f64]) -> bool {
    eps_pareto_front_membership_with_slack(y, front, eps, 0.0)
}

/// As [`eps_pareto_front_membership`], loosened on both sides by `slack`.
pub fn eps_pareto_front_membership_with_slack<P: AsRef<[f64]>>(
    y: &[f64],
    front: &[P],
    eps: &[f64],
    slack: f64,
) -> bool {
    let below = front
        .iter()
        .any(|p| y.iter().zip(p.as_ref()).all(|(a, b)| *a <= b + slack));
    let too_low = front.iter().any(|p| {
        y.iter()
            .zip(p.as_ref())
            .zip(eps)
            .all(|((a, b), e)| a + 2.0 * e + slack <= *b)
    });
    below && !too_low
}
