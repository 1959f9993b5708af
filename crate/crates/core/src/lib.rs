//! Optimal alphabetic decision trees and search trees under
//! branch-prediction-aware cost models.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: distributions, cost models and trees, all exact.
//! - [`predictor`]: static and two-bit predictor misprediction rates, plus
//!   a stationary-distribution solver for arbitrary automata.
//! - [`dp`]: split-point dynamic programs (unordered edges, ordered edges,
//!   general cost functions, three-way search trees).
//! - [`eval`]: exact evaluation of a given tree and a brute-force oracle.
//! - [`sim`]: seeded Monte Carlo execution with one predictor per node.
//! - [`emit`]: JSON, DOT and C-like code output.
//! - [`cli`]: the `branchtree` command-line front end.

pub mod cli;
pub mod dp;
pub mod emit;
pub mod eval;
pub mod model;
pub mod predictor;
pub mod sim;

pub use dp::{solve_branch_optimal, solve_generalized, solve_ordered_edge, solve_search_tree, SolveResult};
pub use model::{
    CostModel, DecisionTree, ItemDistribution, ModelError, Rational, SearchDistribution, SearchTree, StaticCostPair,
};
pub use predictor::{Predictor, PredictorAutomaton};
