//! Pareto active learning over continuous design spaces.
//!
//! A Gaussian-process surrogate drives an adaptive tree partition of the
//! design space. Cells are refined, evaluated, discarded or accepted until
//! every remaining cell is known to lie near the ε-Pareto front.

pub mod bench;
pub mod cli;
pub mod confidence;
pub mod engine;
pub mod gp;
pub mod kernels;
pub mod pareto;
pub mod partition;
