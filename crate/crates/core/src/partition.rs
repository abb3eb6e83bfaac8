//! Box-shaped design spaces and their hierarchical partition into nodes.
//!
//! A node `(h, i)` sits at depth `h` with a 1-based index `i` in `1..=N^h`.
//! Its children are `N(i-1)+1 ..= N i`. Cells are axis-aligned boxes; a cell
//! is split into `N` equal slabs along its longest side, with ties going to
//! the lowest dimension index.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("design space needs at least one dimension")]
    NoDimensions,
    #[error("bounds have {lower} lower and {upper} upper entries")]
    BoundsLength { lower: usize, upper: usize },
    #[error("dimension {dim}: lower bound {lower} must be below upper bound {upper}")]
    EmptyInterval { dim: usize, lower: f64, upper: f64 },
    #[error("metric dimension must be finite and nonnegative, got {0}")]
    MetricDimension(f64),
    #[error("branching factor must be at least 2, got {0}")]
    Branching(usize),
    #[error("decay rate must lie in (0, 1), got {0}")]
    Decay(f64),
    #[error("radius constants need 0 < v2 <= v1, got v1={v1}, v2={v2}")]
    Radii { v1: f64, v2: f64 },
    #[error("covering radius must be positive, got {0}")]
    Radius(f64),
    #[error("node index overflow below depth {0}")]
    IndexOverflow(u32),
}

/// Distance used on the design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Linf,
    L2,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Metric::Linf => diffs.fold(0.0, f64::max),
            Metric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        }
    }

    /// Length of a vector of per-dimension extents.
    fn norm(self, sides: &[f64]) -> f64 {
        self.distance(sides, &vec![0.0; sides.len()])
    }
}

/// A compact box in `R^D` with a metric and a metric dimension `D1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    metric: Metric,
    metric_dimension: f64,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, metric: Metric) -> Result<Self, PartitionError> {
        if lower.len() != upper.len() {
            return Err(PartitionError::BoundsLength {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(PartitionError::NoDimensions);
        }
        for (dim, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(PartitionError::EmptyInterval { dim, lower: lo, upper: hi });
            }
        }
        let metric_dimension = lower.len() as f64;
        Ok(Self {
            lower,
            upper,
            metric,
            metric_dimension,
        })
    }

    pub fn unit_cube(dimension: usize, metric: Metric) -> Result<Self, PartitionError> {
        Self::new(vec![0.0; dimension], vec![1.0; dimension], metric)
    }

    pub fn with_metric_dimension(mut self, d1: f64) -> Result<Self, PartitionError> {
        if !(d1.is_finite() && d1 >= 0.0) {
            return Err(PartitionError::MetricDimension(d1));
        }
        self.metric_dimension = d1;
        Ok(self)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn metric_dimension(&self) -> f64 {
        self.metric_dimension
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric.distance(a, b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn as_cell(&self) -> Cell {
        Cell {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }
}

/// Upper bound on the `r`-covering number of the box under its metric.
///
/// Uses the grid cover with `⌈side / (2r)⌉` points per dimension under L∞.
/// Under L2 a cube of side `s` has radius `s√D/2`, so the per-dimension count
/// becomes `⌈side √D / (2r)⌉`.
pub fn covering_number_bound(space: &DesignSpace, r: f64) -> Result<f64, PartitionError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(PartitionError::Radius(r));
    }
    let scale = match space.metric {
        Metric::Linf => 1.0,
        Metric::L2 => (space.dimension() as f64).sqrt(),
    };
    Ok(space
        .lower
        .iter()
        .zip(&space.upper)
        .map(|(lo, hi)| ((hi - lo) * scale / (2.0 * r)).ceil().max(1.0))
        .product())
}

/// Branching factor `N`, decay `ρ` and radius constants `v1`, `v2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub branching: usize,
    pub rho: f64,
    pub v1: f64,
    pub v2: f64,
}

impl PartitionParams {
    pub fn new(branching: usize, rho: f64, v1: f64, v2: f64) -> Result<Self, PartitionError> {
        let params = Self { branching, rho, v1, v2 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        if self.branching < 2 {
            return Err(PartitionError::Branching(self.branching));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(PartitionError::Decay(self.rho));
        }
        if !(self.v2 > 0.0 && self.v2 <= self.v1 && self.v1.is_finite()) {
            return Err(PartitionError::Radii { v1: self.v1, v2: self.v2 });
        }
        Ok(())
    }

    /// Binary longest-side bisection constants for a space of dimension `D`.
    ///
    /// `D = 1` gives `N=2, ρ=1/2, v1=v2=1`. For `D > 1`, `ρ = 2^{-1/D}` and
    /// `v2 = ρ^{D-1}/2`, the largest value that keeps the inscribed ball
    /// inside every cell of a unit cube.
    ///
    /// `v1` is the worst ratio of cell radius to `ρ^h` over a cycle of `D`
    /// splits. Under L∞ that is `1/(2ρ^{D-1})`. Under L2 it is the larger of
    /// `√D/(2ρ)` and the exact cycle maximum, which is the binding one only
    /// for large `D`.
    pub fn bisection(dimension: usize, metric: Metric) -> Self {
        if dimension <= 1 {
            return Self {
                branching: 2,
                rho: 0.5,
                v1: 1.0,
                v2: 1.0,
            };
        }
        let d = dimension as f64;
        let rho = 2f64.powf(-1.0 / d);
        let v1 = match metric {
            Metric::Linf => 0.5 / rho.powf(d - 1.0),
            Metric::L2 => {
                // after r extra splits, r sides are halved: radius √(D - 3r/4)/2 at ρ^r
                let exact = (0..dimension)
                    .map(|r| (d - 0.75 * r as f64).sqrt() / 2.0 / rho.powi(r as i32))
                    .fold(0.0, f64::max);
                (d.sqrt() / (2.0 * rho)).max(exact)
            }
        };
        Self {
            branching: 2,
            rho,
            v1,
            v2: rho.powf(d - 1.0) / 2.0,
        }
    }

    /// Outer radius bound `v1 ρ^h` at depth `h`.
    pub fn outer_radius(&self, depth: u32) -> f64 {
        self.v1 * self.rho.powi(depth as i32)
    }
}

/// Identity of a node: depth and 1-based index. Orders by depth, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub depth: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { depth: 0, index: 1 };

    pub fn parent(self, branching: usize) -> Option<NodeId> {
        if self.depth == 0 {
            return None;
        }
        Some(NodeId {
            depth: self.depth - 1,
            index: (self.index - 1) / branching as u64 + 1,
        })
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.depth, self.index)
    }
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Cell {
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn sides(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }

    pub fn volume(&self) -> f64 {
        self.sides().iter().product()
    }

    /// Index of the longest side; ties go to the lowest index.
    pub fn split_dimension(&self) -> usize {
        let sides = self.sides();
        let mut best = 0;
        for (d, &s) in sides.iter().enumerate() {
            if s > sides[best] {
                best = d;
            }
        }
        best
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// A vertex of the partition tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub center: Vec<f64>,
    pub cell: Cell,
    pub parent: Option<NodeId>,
}

impl Node {
    pub fn depth(&self) -> u32 {
        self.id.depth
    }
}

/// The root node covering the whole space.
pub fn root(space: &DesignSpace, params: &PartitionParams) -> Result<Node, PartitionError> {
    params.validate()?;
    let cell = space.as_cell();
    Ok(Node {
        id: NodeId::ROOT,
        center: cell.center(),
        cell,
        parent: None,
    })
}

/// The `N` children of `node`, in index order.
pub fn children(node: &Node, params: &PartitionParams) -> Result<Vec<Node>, PartitionError> {
    let n = params.branching;
    let first = (node.id.index - 1)
        .checked_mul(n as u64)
        .and_then(|v| v.checked_add(1))
        .filter(|v| v.checked_add(n as u64 - 1).is_some())
        .ok_or(PartitionError::IndexOverflow(node.id.depth))?;
    let dim = node.cell.split_dimension();
    let lo = node.cell.lower[dim];
    let hi = node.cell.upper[dim];
    let width = (hi - lo) / n as f64;
    Ok((0..n)
        .map(|k| {
            let mut cell = node.cell.clone();
            cell.lower[dim] = lo + k as f64 * width;
            cell.upper[dim] = if k + 1 == n { hi } else { lo + (k + 1) as f64 * width };
            Node {
                id: NodeId {
                    depth: node.id.depth + 1,
                    index: first + k as u64,
                },
                center: cell.center(),
                cell,
                parent: Some(node.id),
            }
        })
        .collect())
}

/// Half the cell diameter under `metric`.
pub fn cell_radius(node: &Node, metric: Metric) -> f64 {
    0.5 * metric.norm(&node.cell.sides())
}
