//! Seeded Monte Carlo execution of a decision tree.
//!
//! Items are drawn i.i.d. in proportion to their weights and walked down
//! the tree. Each internal node owns its own predictor: either the static
//! rule recorded in the node's choice, or a private copy of an automaton.
//! The not-taken direction of an adaptive node is its heavier child.
//!
//! Replication `r` uses a ChaCha8 generator seeded with the run seed on
//! stream `r`, so replications are independent of scheduling. Statistics
//! are integer moment sums, which makes merging exact, associative and
//! commutative.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    majority_side, static_predicted_side, to_f64, DecisionTree, ItemDistribution, ModelError, Rational, RationalValue,
    Side, Span, StaticCostPair,
};
use crate::predictor::{Direction, Predictor, PredictorAutomaton, PredictorError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("warmup ({warmup}) must be smaller than iterations ({iterations})")]
    WarmupTooLarge { warmup: u64, iterations: u64 },
    #[error("at least one replication is required")]
    ZeroReplications,
    #[error("weights need a common denominator too large for exact sampling")]
    WeightsTooFine,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    /// Iterations per replication, including warmup.
    pub iterations: u64,
    /// Leading iterations per replication that train predictors but are not
    /// counted.
    pub warmup: u64,
    pub seed: u64,
    /// Starting state of every node's automaton; defaults to the
    /// automaton's own initial state (weak untaken for the built-ins).
    pub initial_state: Option<usize>,
}

impl SimConfig {
    pub fn new(iterations: u64, seed: u64) -> Self {
        SimConfig { iterations, warmup: 0, seed, initial_state: None }
    }

    pub fn with_warmup(mut self, warmup: u64) -> Self {
        self.warmup = warmup;
        self
    }
}

/// Exact running statistics of one or more replications.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimAccumulator {
    pub runs: u64,
    pub iterations: u64,
    pub warmup: u64,
    pub measured: u64,
    // Moments of the per-lookup (mispredicted, predicted) branch counts.
    pub sum_miss: u128,
    pub sum_hit: u128,
    pub sum_miss_sq: u128,
    pub sum_miss_hit: u128,
    pub sum_hit_sq: u128,
    /// `(visits, mispredictions)` per node.
    pub nodes: BTreeMap<Span, (u64, u64)>,
}

impl SimAccumulator {
    pub fn merge(mut self, other: &SimAccumulator) -> SimAccumulator {
        self.runs += other.runs;
        self.iterations += other.iterations;
        self.warmup += other.warmup;
        self.measured += other.measured;
        self.sum_miss += other.sum_miss;
        self.sum_hit += other.sum_hit;
        self.sum_miss_sq += other.sum_miss_sq;
        self.sum_miss_hit += other.sum_miss_hit;
        self.sum_hit_sq += other.sum_hit_sq;
        for (span, (v, m)) in &other.nodes {
            let e = self.nodes.entry(*span).or_insert((0, 0));
            e.0 += v;
            e.1 += m;
        }
        self
    }

    /// Exact mean cost per measured lookup.
    pub fn mean_cost(&self, pair: &StaticCostPair) -> Rational {
        let total = pair.mispredict() * big(self.sum_miss) + pair.predict() * big(self.sum_hit);
        total / big(self.measured as u128)
    }

    /// Exact unbiased sample variance of the per-lookup cost.
    pub fn variance(&self, pair: &StaticCostPair) -> Rational {
        if self.measured < 2 {
            return Rational::zero();
        }
        let (c1, c2) = (pair.mispredict(), pair.predict());
        let sum = c1 * big(self.sum_miss) + c2 * big(self.sum_hit);
        let sum_sq = c1 * c1 * big(self.sum_miss_sq)
            + Rational::from_integer(2.into()) * c1 * c2 * big(self.sum_miss_hit)
            + c2 * c2 * big(self.sum_hit_sq);
        let n = big(self.measured as u128);
        (sum_sq - &sum * &sum / &n) / (n - Rational::one())
    }
}

fn big(v: u128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeStats {
    pub i: usize,
    pub j: usize,
    pub s: usize,
    pub visits: u64,
    pub mispredictions: u64,
    pub rate: f64,
}

/// Outcome of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub predictor: String,
    pub seed: u64,
    pub replications: u64,
    /// Total iterations executed, warmup included.
    pub iterations: u64,
    pub warmup_discarded: u64,
    /// Iterations that contribute to the statistics; equals the root's visits.
    pub measured: u64,
    pub mean_cost: f64,
    pub mean_cost_exact: RationalValue,
    pub variance: f64,
    pub standard_error: f64,
    /// Keyed by `"i,j,s"`.
    pub per_node: BTreeMap<String, NodeStats>,
}

impl SimReport {
    pub fn from_accumulator(acc: &SimAccumulator, pair: &StaticCostPair, predictor: &str, seed: u64) -> Self {
        let mean = acc.mean_cost(pair);
        let variance = to_f64(&acc.variance(pair));
        let per_node = acc
            .nodes
            .iter()
            .map(|(span, &(visits, mispredictions))| {
                let rate = if visits == 0 { 0.0 } else { mispredictions as f64 / visits as f64 };
                (
                    format!("{},{},{}", span.first, span.last, span.split),
                    NodeStats { i: span.first, j: span.last, s: span.split, visits, mispredictions, rate },
                )
            })
            .collect();
        SimReport {
            predictor: predictor.to_string(),
            seed,
            replications: acc.runs,
            iterations: acc.iterations,
            warmup_discarded: acc.warmup,
            measured: acc.measured,
            mean_cost: to_f64(&mean),
            mean_cost_exact: RationalValue(mean),
            variance,
            standard_error: (variance / acc.measured as f64).sqrt(),
            per_node,
        }
    }

    pub fn node(&self, span: Span) -> Option<&NodeStats> {
        self.per_node.get(&format!("{},{},{}", span.first, span.last, span.split))
    }
}

/// Weights scaled to integers for exact inverse-CDF sampling.
struct Sampler {
    cumulative: Vec<u128>,
}

impl Sampler {
    fn new(dist: &ItemDistribution) -> Result<Self, SimError> {
        let lcm = dist.weights().iter().fold(BigInt::one(), |acc, w| acc.lcm(w.denom()));
        let mut cumulative = Vec::with_capacity(dist.len());
        let mut acc: u128 = 0;
        for w in dist.weights() {
            let scaled = (w * Rational::from_integer(lcm.clone())).to_integer();
            let v = scaled.to_u128().ok_or(SimError::WeightsTooFine)?;
            acc = acc.checked_add(v).ok_or(SimError::WeightsTooFine)?;
            cumulative.push(acc);
        }
        Ok(Sampler { cumulative })
    }

    /// 1-based item whose half-open interval contains the draw.
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.gen_range(0..total);
        self.cumulative.partition_point(|&c| c <= x) + 1
    }
}

enum NodeRule {
    Static { predicted: Side },
    Adaptive { untaken: Side },
}

struct FlatNode {
    span: Span,
    rule: NodeRule,
    // child indices into the node array, or None for a leaf
    left: Option<usize>,
    right: Option<usize>,
}

fn flatten(tree: &DecisionTree, dist: &ItemDistribution, adaptive: bool, out: &mut Vec<FlatNode>) -> Option<usize> {
    let DecisionTree::Node { split, choice, left, right } = tree else {
        return None;
    };
    let (first, last) = tree.range();
    let lm = dist.range_mass(first, split - 1);
    let rm = dist.range_mass(*split, last);
    let rule = if adaptive {
        NodeRule::Adaptive { untaken: majority_side(&lm, &rm, *choice) }
    } else {
        NodeRule::Static {
            predicted: static_predicted_side(*choice).unwrap_or_else(|| majority_side(&lm, &rm, *choice)),
        }
    };
    let at = out.len();
    out.push(FlatNode { span: Span { first, last, split: *split }, rule, left: None, right: None });
    let l = flatten(left, dist, adaptive, out);
    let r = flatten(right, dist, adaptive, out);
    out[at].left = l;
    out[at].right = r;
    Some(at)
}

fn run_replication(
    nodes: &[FlatNode],
    sampler: &Sampler,
    automaton: Option<&PredictorAutomaton>,
    config: &SimConfig,
    stream: u64,
) -> SimAccumulator {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let start = automaton.map(|a| config.initial_state.unwrap_or(a.initial_state())).unwrap_or(0);
    let mut states = vec![start; nodes.len()];
    let mut visits = vec![0u64; nodes.len()];
    let mut misses = vec![0u64; nodes.len()];
    let mut acc =
        SimAccumulator { runs: 1, iterations: config.iterations, warmup: config.warmup, ..Default::default() };

    for iter in 0..config.iterations {
        let counted = iter >= config.warmup;
        let item = sampler.draw(&mut rng);
        let (mut miss, mut hit) = (0u128, 0u128);
        let mut at = if nodes.is_empty() { None } else { Some(0) };
        while let Some(idx) = at {
            let node = &nodes[idx];
            let actual = if item < node.span.split { Side::Left } else { Side::Right };
            let mispredicted = match node.rule {
                NodeRule::Static { predicted } => predicted != actual,
                NodeRule::Adaptive { untaken } => {
                    let a = automaton.expect("adaptive nodes have an automaton");
                    let outcome = if actual == untaken { Direction::Untaken } else { Direction::Taken };
                    let wrong = a.predict(states[idx]) != outcome;
                    states[idx] = a.next(states[idx], outcome);
                    wrong
                }
            };
            if counted {
                visits[idx] += 1;
                misses[idx] += mispredicted as u64;
            }
            if mispredicted {
                miss += 1;
            } else {
                hit += 1;
            }
            at = match actual {
                Side::Left => node.left,
                Side::Right => node.right,
            };
        }
        if counted {
            acc.measured += 1;
            acc.sum_miss += miss;
            acc.sum_hit += hit;
            acc.sum_miss_sq += miss * miss;
            acc.sum_miss_hit += miss * hit;
            acc.sum_hit_sq += hit * hit;
        }
    }
    for (idx, node) in nodes.iter().enumerate() {
        acc.nodes.insert(node.span, (visits[idx], misses[idx]));
    }
    acc
}

fn validate(tree: &DecisionTree, dist: &ItemDistribution, config: &SimConfig) -> Result<(), SimError> {
    if config.iterations == 0 {
        return Err(SimError::ZeroIterations);
    }
    if config.warmup >= config.iterations {
        return Err(SimError::WarmupTooLarge { warmup: config.warmup, iterations: config.iterations });
    }
    tree.validate(dist.len())?;
    Ok(())
}

/// Run `replications` independent replications (in parallel) and return
/// their merged accumulator.
pub fn simulate_accumulate(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    predictor: &Predictor,
    config: &SimConfig,
    replications: u64,
) -> Result<SimAccumulator, SimError> {
    validate(tree, dist, config)?;
    if replications == 0 {
        return Err(SimError::ZeroReplications);
    }
    predictor.validate()?;
    let automaton = predictor.automaton();
    if let (Some(a), Some(state)) = (&automaton, config.initial_state) {
        a.clone().with_initial_state(state)?;
    }
    let sampler = Sampler::new(dist)?;
    let mut nodes = Vec::new();
    flatten(tree, dist, automaton.is_some(), &mut nodes);

    let parts: Vec<SimAccumulator> = (0..replications)
        .into_par_iter()
        .map(|r| run_replication(&nodes, &sampler, automaton.as_ref(), config, r))
        .collect();
    Ok(parts.iter().fold(SimAccumulator::default(), |acc, p| acc.merge(p)))
}

/// Simulate a single replication.
pub fn simulate(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    predictor: &Predictor,
    pair: &StaticCostPair,
    config: &SimConfig,
) -> Result<SimReport, SimError> {
    simulate_replicated(tree, dist, predictor, pair, config, 1)
}

pub fn simulate_replicated(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    predictor: &Predictor,
    pair: &StaticCostPair,
    config: &SimConfig,
    replications: u64,
) -> Result<SimReport, SimError> {
    let acc = simulate_accumulate(tree, dist, predictor, config, replications)?;
    Ok(SimReport::from_accumulator(&acc, pair, predictor.name(), config.seed))
}
