//! The round loop: modeling, discarding, ε-covering, then refine or evaluate.
//!
//! Every round starts from the active set `A = S ∪ P`. Each active node's
//! cumulative rectangle is intersected with its fresh confidence box. Nodes
//! in `S` that are ε-dominated under uncertainty by a pessimistic-Pareto
//! node are discarded. Nodes in `S` that no node of `W = S ∪ P` can beat by
//! more than ε move to `P`. If `S` is still nonempty, the node of `W` with
//! the widest rectangle is either refined into its children or evaluated at
//! its center.

mod schedules;

pub use schedules::{ScheduleParams, ScheduleTable, Schedules, VRow, H_MAX_SEARCH_CAP};

use crate::confidence::{node_indices, HyperRect, NodeBelief};
use crate::gp::{GpError, GpPosterior, Prediction, TrackedPoint};
use crate::kernels::MultiOutputKernel;
use crate::pareto::{nondominated_set, pessimistic_pareto};
use crate::partition::{self, Cell, DesignSpace, Node, NodeId, PartitionError, PartitionParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Default cap on the number of evaluations.
pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no depth up to {cap} satisfies 16 m V_h^2 <= eps^2 for eps = {epsilon}")]
    HMaxUnreachable { cap: u32, epsilon: f64 },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("oracle failed: {0}")]
    Oracle(String),
    #[error("oracle returned {got} objectives, expected {expected}")]
    OracleDimension { expected: usize, got: usize },
    #[error("no undecided nodes left; the run is finished")]
    Finished,
}

/// Noisy objective evaluations.
pub trait Oracle {
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>, String>;
}

impl<F> Oracle for F
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, String>,
{
    fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>, String> {
        self(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub space: DesignSpace,
    pub partition: PartitionParams,
    pub kernel: MultiOutputKernel,
    pub noise_var: f64,
    pub epsilon: Vec<f64>,
    pub delta: f64,
    pub c1: f64,
    pub q: f64,
    pub h_max_override: Option<u32>,
    pub beta_h_max: Option<u32>,
    pub budget: usize,
}

impl EngineConfig {
    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            objectives: self.kernel.outputs(),
            branching: self.partition.branching,
            delta: self.delta,
            epsilon: self.epsilon.clone(),
            smoothness: self.kernel.smoothness_constants(),
            metric_dimension: self.space.metric_dimension(),
            v1: self.partition.v1,
            v2: self.partition.v2,
            rho: self.partition.rho,
            c1: self.c1,
            q: self.q,
            h_max_override: self.h_max_override,
            beta_h_max: self.beta_h_max,
        }
    }

    pub fn schedules(&self) -> Result<Schedules, EngineError> {
        Schedules::new(self.schedule_params())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Refine,
    Evaluate,
    Terminate,
    Truncate,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Refine => "refine",
            Action::Evaluate => "evaluate",
            Action::Terminate => "terminate",
            Action::Truncate => "truncate",
        }
    }
}

/// One row of the per-round trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub tau: usize,
    pub s_size: usize,
    pub p_size: usize,
    pub omega_bar: f64,
    pub action: Action,
    pub node_h: Option<u32>,
    pub node_i: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub round: u64,
    pub node: NodeId,
    pub design: Vec<f64>,
    pub observation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Decided nodes, in id order.
    pub decided: Vec<NodeId>,
    /// Cells of the decided nodes; their union is the returned design set.
    pub cells: Vec<Cell>,
    pub centers: Vec<Vec<f64>>,
    /// Posterior predictions at the decided centers.
    pub predictions: Vec<Prediction>,
    pub evaluations: Vec<Evaluation>,
    pub rounds: u64,
    pub termination: Termination,
    pub degeneracies: usize,
    pub h_max: u32,
    pub max_depth: u32,
}

impl RunResult {
    pub fn truncated(&self) -> bool {
        self.termination == Termination::BudgetExhausted
    }
}

#[derive(Debug, Clone)]
struct ParentCache {
    tracker: TrackedPoint,
    cached: Option<(Prediction, usize)>,
}

/// Mutable state of a run. [`EngineState::step`] applies one round.
pub struct EngineState {
    config: EngineConfig,
    schedules: Schedules,
    round: u64,
    gp: GpPosterior,
    nodes: BTreeMap<NodeId, Node>,
    beliefs: BTreeMap<NodeId, NodeBelief>,
    refined: BTreeMap<NodeId, ParentCache>,
    undecided: BTreeSet<NodeId>,
    decided: BTreeSet<NodeId>,
    discarded: Vec<NodeId>,
    evaluations: Vec<Evaluation>,
    evals_per_node: BTreeMap<NodeId, usize>,
    last_confidence: Vec<(NodeId, HyperRect)>,
    degeneracies: usize,
    max_depth: u32,
    truncated: bool,
}

impl EngineState {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        if !(config.noise_var > 0.0 && config.noise_var.is_finite()) {
            return Err(EngineError::Config(format!(
                "noise variance must be positive, got {}",
                config.noise_var
            )));
        }
        config.partition.validate()?;
        let schedules = config.schedules()?;
        let gp = GpPosterior::new(config.kernel.clone(), config.noise_var)?;
        let root = partition::root(&config.space, &config.partition)?;
        let m = config.kernel.outputs();
        let belief = NodeBelief {
            node: root.id,
            rect: HyperRect::unbounded(m),
            tracker: gp.track(&root.center),
            cached: None,
        };
        let mut state = Self {
            config,
            schedules,
            round: 1,
            gp,
            nodes: BTreeMap::new(),
            beliefs: BTreeMap::new(),
            refined: BTreeMap::new(),
            undecided: BTreeSet::new(),
            decided: BTreeSet::new(),
            discarded: Vec::new(),
            evaluations: Vec::new(),
            evals_per_node: BTreeMap::new(),
            last_confidence: Vec::new(),
            degeneracies: 0,
            max_depth: 0,
            truncated: false,
        };
        state.undecided.insert(root.id);
        state.beliefs.insert(root.id, belief);
        state.nodes.insert(root.id, root);
        Ok(state)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn schedules(&self) -> &Schedules {
        &self.schedules
    }

    /// Index of the next round to run.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn tau(&self) -> usize {
        self.gp.len()
    }

    pub fn gp(&self) -> &GpPosterior {
        &self.gp
    }

    pub fn is_finished(&self) -> bool {
        self.undecided.is_empty() || self.truncated
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn undecided(&self) -> &BTreeSet<NodeId> {
        &self.undecided
    }

    pub fn decided(&self) -> &BTreeSet<NodeId> {
        &self.decided
    }

    pub fn discarded(&self) -> &[NodeId] {
        &self.discarded
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    /// Cumulative rectangle of an active node.
    pub fn rectangle(&self, id: NodeId) -> Option<&HyperRect> {
        self.beliefs.get(&id).map(|b| &b.rect)
    }

    /// Confidence boxes computed in the last modeling phase, in id order.
    pub fn last_confidence(&self) -> &[(NodeId, HyperRect)] {
        &self.last_confidence
    }

    pub fn evaluations(&self) -> &[Evaluation] {
        &self.evaluations
    }

    pub fn evaluations_per_node(&self) -> &BTreeMap<NodeId, usize> {
        &self.evals_per_node
    }

    pub fn degeneracies(&self) -> usize {
        self.degeneracies
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Replaces the cumulative rectangle of an active node.
    ///
    /// Meant for probing the phase logic with hand-made beliefs.
    pub fn set_rectangle(&mut self, id: NodeId, rect: HyperRect) -> bool {
        match self.beliefs.get_mut(&id) {
            Some(b) => {
                b.rect = rect;
                true
            }
            None => false,
        }
    }

    /// Runs one round.
    pub fn step(&mut self, oracle: &mut dyn Oracle) -> Result<RoundRecord, EngineError> {
        if self.is_finished() {
            return Err(EngineError::Finished);
        }
        let tau = self.gp.len();
        let beta = self.schedules.beta(tau);
        self.modeling(tau, beta);
        self.discarding();
        let omega: BTreeMap<NodeId, f64> = self
            .undecided
            .iter()
            .chain(self.decided.iter())
            .map(|id| (*id, self.beliefs[id].rect.diameter()))
            .collect();
        self.covering();

        let omega_bar = omega.values().copied().fold(0.0, f64::max);
        let round = self.round;
        self.round += 1;
        let mut record = RoundRecord {
            round,
            tau,
            s_size: self.undecided.len(),
            p_size: self.decided.len(),
            omega_bar,
            action: Action::Terminate,
            node_h: None,
            node_i: None,
        };
        if self.undecided.is_empty() {
            return Ok(record);
        }

        // first maximum in id order: lowest depth, then lowest index
        let mut chosen = *omega.keys().next().expect("W is nonempty");
        for (id, w) in &omega {
            if *w > omega[&chosen] {
                chosen = *id;
            }
        }
        record.node_h = Some(chosen.depth);
        record.node_i = Some(chosen.index);

        let sigma_norm = self.beliefs[&chosen]
            .cached
            .as_ref()
            .map(|(p, _)| p.stddev_norm())
            .expect("active nodes are modeled");
        let m = self.config.kernel.outputs() as f64;
        let refine = chosen.depth < self.schedules.depth_cap()
            && beta.sqrt() * sigma_norm <= m.sqrt() * self.schedules.v_h(chosen.depth);

        if refine {
            self.refine(chosen)?;
            record.action = Action::Refine;
        } else if self.gp.len() >= self.config.budget {
            self.truncated = true;
            record.action = Action::Truncate;
        } else {
            self.evaluate(chosen, round, oracle)?;
            record.action = Action::Evaluate;
        }
        record.tau = self.gp.len();
        record.s_size = self.undecided.len();
        record.p_size = self.decided.len();
        Ok(record)
    }

    fn modeling(&mut self, tau: usize, beta: f64) {
        let gp = &self.gp;
        self.beliefs.par_iter_mut().for_each(|(_, b)| {
            if b.cached.as_ref().map(|c| c.1) != Some(tau) {
                b.cached = Some((b.tracker.refresh(gp), tau));
            }
        });
        let branching = self.config.partition.branching;
        let needed: BTreeSet<NodeId> = self.beliefs.keys().filter_map(|id| id.parent(branching)).collect();
        self.refined
            .par_iter_mut()
            .filter(|(id, _)| needed.contains(id))
            .for_each(|(_, p)| {
                if p.cached.as_ref().map(|c| c.1) != Some(tau) {
                    p.cached = Some((p.tracker.refresh(gp), tau));
                }
            });

        self.last_confidence.clear();
        for (id, b) in self.beliefs.iter_mut() {
            let own = &b.cached.as_ref().expect("refreshed").0;
            let parent = id
                .parent(branching)
                .and_then(|p| self.refined.get(&p))
                .and_then(|p| p.cached.as_ref())
                .map(|c| &c.0);
            let v_parent = if id.depth > 0 { self.schedules.v_h(id.depth - 1) } else { 0.0 };
            let q = node_indices(own, parent, beta, self.schedules.v_h(id.depth), v_parent);
            let (rect, degenerate) = b.rect.intersect(&q);
            if degenerate {
                self.degeneracies += 1;
                log::debug!("empty rectangle intersection at node {id} in round {}", self.round);
            }
            b.rect = rect;
            self.last_confidence.push((*id, q));
        }
    }

    fn discarding(&mut self) {
        let corners: Vec<(NodeId, Vec<f64>)> = self
            .beliefs
            .iter()
            .map(|(id, b)| (*id, b.rect.lower.clone()))
            .collect();
        let pess = pessimistic_pareto(&corners).expect("active set is nonempty");
        let pess_set: BTreeSet<NodeId> = pess.iter().copied().collect();
        let eps = &self.config.epsilon;
        let pess_corners: Vec<Vec<f64>> = pess
            .iter()
            .map(|id| {
                self.beliefs[id]
                    .rect
                    .lower
                    .iter()
                    .zip(eps)
                    .map(|(l, e)| l + e)
                    .collect()
            })
            .collect();
        let doomed: Vec<NodeId> = self
            .undecided
            .iter()
            .filter(|id| !pess_set.contains(id))
            .filter(|id| {
                let top = &self.beliefs[id].rect.upper;
                pess_corners
                    .iter()
                    .any(|c| top.iter().zip(c).all(|(u, v)| u <= v))
            })
            .copied()
            .collect();
        for id in doomed {
            self.undecided.remove(&id);
            self.beliefs.remove(&id);
            self.discarded.push(id);
        }
    }

    fn covering(&mut self) {
        let w: Vec<NodeId> = self.undecided.iter().chain(self.decided.iter()).copied().collect();
        let tops: Vec<&[f64]> = w.iter().map(|id| self.beliefs[id].rect.upper.as_slice()).collect();
        let front: Vec<&[f64]> = nondominated_set(&tops)
            .expect("W is nonempty")
            .into_iter()
            .map(|i| tops[i])
            .collect();
        let eps = &self.config.epsilon;
        let covered: Vec<NodeId> = self
            .undecided
            .iter()
            .filter(|id| {
                let low = &self.beliefs[id].rect.lower;
                !front
                    .iter()
                    .any(|top| low.iter().zip(eps).zip(top.iter()).all(|((l, e), u)| l + e <= *u))
            })
            .copied()
            .collect();
        for id in covered {
            self.undecided.remove(&id);
            self.decided.insert(id);
        }
    }

    fn refine(&mut self, id: NodeId) -> Result<(), EngineError> {
        let node = self.nodes[&id].clone();
        let kids = partition::children(&node, &self.config.partition)?;
        let belief = self.beliefs.remove(&id).expect("chosen node is active");
        let was_decided = self.decided.remove(&id);
        self.undecided.remove(&id);
        for kid in kids {
            self.max_depth = self.max_depth.max(kid.id.depth);
            self.beliefs.insert(
                kid.id,
                NodeBelief {
                    node: kid.id,
                    rect: belief.rect.clone(),
                    tracker: self.gp.track(&kid.center),
                    cached: None,
                },
            );
            if was_decided {
                self.decided.insert(kid.id);
            } else {
                self.undecided.insert(kid.id);
            }
            self.nodes.insert(kid.id, kid);
        }
        self.refined.insert(
            id,
            ParentCache {
                tracker: belief.tracker,
                cached: belief.cached,
            },
        );
        Ok(())
    }

    fn evaluate(&mut self, id: NodeId, round: u64, oracle: &mut dyn Oracle) -> Result<(), EngineError> {
        let x = self.nodes[&id].center.clone();
        let y = oracle.evaluate(&x).map_err(EngineError::Oracle)?;
        let m = self.config.kernel.outputs();
        if y.len() != m {
            return Err(EngineError::OracleDimension { expected: m, got: y.len() });
        }
        self.gp.update(&x, &y)?;
        *self.evals_per_node.entry(id).or_insert(0) += 1;
        self.evaluations.push(Evaluation {
            round,
            node: id,
            design: x,
            observation: y,
        });
        Ok(())
    }

    /// Assembles the result from the current state.
    pub fn result(&self) -> RunResult {
        let decided: Vec<NodeId> = self.decided.iter().copied().collect();
        let cells = decided.iter().map(|id| self.nodes[id].cell.clone()).collect();
        let centers: Vec<Vec<f64>> = decided.iter().map(|id| self.nodes[id].center.clone()).collect();
        let predictions = decided
            .iter()
            .map(|id| match &self.beliefs[id].cached {
                Some((p, t)) if *t == self.gp.len() => p.clone(),
                _ => self.gp.predict(&self.nodes[id].center),
            })
            .collect();
        RunResult {
            decided,
            cells,
            centers,
            predictions,
            evaluations: self.evaluations.clone(),
            rounds: self.round - 1,
            termination: if self.truncated {
                Termination::BudgetExhausted
            } else {
                Termination::Converged
            },
            degeneracies: self.degeneracies,
            h_max: self.schedules.h_max(),
            max_depth: self.max_depth,
        }
    }
}

/// Runs rounds until `S` is empty or the budget is spent.
pub fn run(config: EngineConfig, oracle: &mut dyn Oracle) -> Result<RunResult, EngineError> {
    run_with(config, oracle, |_, _| {})
}

/// As [`run`], calling `observe` after every round.
pub fn run_with(
    config: EngineConfig,
    oracle: &mut dyn Oracle,
    mut observe: impl FnMut(&EngineState, &RoundRecord),
) -> Result<RunResult, EngineError> {
    let mut state = EngineState::new(config)?;
    while !state.is_finished() {
        let record = state.step(oracle)?;
        observe(&state, &record);
    }
    Ok(state.result())
}
