//! Exact cost evaluation of given trees, and an exhaustive optimal-tree
//! oracle for small inputs.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::dp::SolveResult;
use crate::model::{
    majority_side, static_predicted_side, BranchOutcomeWord, CostModel, DecisionTree, ItemDistribution, ModelError,
    Outcome, Rational, SearchDistribution, SearchTree, Side, Span, StaticCostPair,
};
use crate::predictor::stationary_taken_prediction;

pub const DEFAULT_BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{n} items exceeds brute-force limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `sum_j c_{b_j}` over a path's outcomes.
pub fn path_cost(word: &BranchOutcomeWord, pair: &StaticCostPair) -> Rational {
    word.0.iter().fold(Rational::zero(), |acc, &o| acc + pair.cost_of(o))
}

/// Cost seen by a single item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemCost {
    pub item: usize,
    /// Number of comparisons on the item's path.
    pub depth: usize,
    /// Prediction outcomes along the path; static models only.
    pub word: Option<BranchOutcomeWord>,
    /// Expected cost of the item's path; `None` for table models, whose
    /// cost functions are not attributable to individual edges.
    pub path_cost: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeContribution {
    pub span: Span,
    pub choice: usize,
    pub cost: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBreakdown {
    /// Cost over raw weights.
    pub total: Rational,
    pub total_mass: Rational,
    /// Expected cost per lookup.
    pub normalized: Rational,
    pub per_item: Vec<ItemCost>,
    /// Preorder.
    pub per_node: Vec<NodeContribution>,
}

/// Expected cost paid by an item that leaves a node toward the left and
/// toward the right, respectively. `None` for table models.
pub fn edge_costs(
    model: &CostModel,
    choice: usize,
    left_mass: &Rational,
    right_mass: &Rational,
) -> Result<Option<(Rational, Rational)>, ModelError> {
    match model {
        CostModel::Static(pair) => {
            let predicted = static_predicted_side(choice).ok_or(ModelError::InvalidChoice { choice, available: 2 })?;
            let cost = |side: Side| {
                if side == predicted {
                    pair.predict().clone()
                } else {
                    pair.mispredict().clone()
                }
            };
            Ok(Some((cost(Side::Left), cost(Side::Right))))
        }
        CostModel::Dynamic { predictor, pair } => {
            let total = left_mass + right_mass;
            if total.is_zero() {
                return Ok(Some((pair.predict().clone(), pair.predict().clone())));
            }
            // The minority side is the "taken" outcome.
            let majority = majority_side(left_mass, right_mass, choice);
            let minority_mass = if majority == Side::Left { right_mass } else { left_mass };
            let p1 = minority_mass / &total;
            let predicts_taken = match predictor.automaton() {
                Some(a) => stationary_taken_prediction(&a, &p1)?,
                None => Rational::zero(),
            };
            let penalty = pair.mispredict() - pair.predict();
            let minority_cost = pair.predict() + &penalty * (Rational::one() - &predicts_taken);
            let majority_cost = pair.predict() + &penalty * &predicts_taken;
            Ok(Some(match majority {
                Side::Left => (majority_cost, minority_cost),
                Side::Right => (minority_cost, majority_cost),
            }))
        }
        CostModel::Table(_) => Ok(None),
    }
}

/// Evaluate a tree under a cost model.
///
/// Static models charge `c_mispredict` on the side chosen by each node's
/// recorded choice. Dynamic models charge the stationary expected branch
/// cost and ignore the choice. Table models use cost function `choice`.
pub fn expected_cost(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    model: &CostModel,
) -> Result<CostBreakdown, ModelError> {
    tree.validate(dist.len())?;
    model.validate()?;

    let mut per_node = Vec::with_capacity(dist.len().saturating_sub(1));
    let mut per_item = Vec::with_capacity(dist.len());
    walk(tree, dist, model, &mut Walk::default(), &mut per_node, &mut per_item)?;

    let total = per_node.iter().fold(Rational::zero(), |acc, n: &NodeContribution| acc + &n.cost);
    let total_mass = dist.total().clone();
    Ok(CostBreakdown { normalized: &total / &total_mass, total, total_mass, per_item, per_node })
}

#[derive(Default, Clone)]
struct Walk {
    depth: usize,
    word: Vec<Outcome>,
    cost: Rational,
}

fn walk(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    model: &CostModel,
    path: &mut Walk,
    per_node: &mut Vec<NodeContribution>,
    per_item: &mut Vec<ItemCost>,
) -> Result<(), ModelError> {
    match tree {
        DecisionTree::Leaf { item } => {
            let (word, path_cost) = match model {
                CostModel::Static(_) => (Some(BranchOutcomeWord(path.word.clone())), Some(path.cost.clone())),
                CostModel::Dynamic { .. } => (None, Some(path.cost.clone())),
                CostModel::Table(_) => (None, None),
            };
            per_item.push(ItemCost { item: *item, depth: path.depth, word, path_cost });
            Ok(())
        }
        DecisionTree::Node { split, choice, left, right } => {
            let (first, last) = tree.range();
            let span = Span { first, last, split: *split };
            let left_mass = dist.range_mass(first, split - 1);
            let right_mass = dist.range_mass(*split, last);
            let cost = model.branch_cost(*choice, &left_mass, &right_mass, span)?;
            per_node.push(NodeContribution { span, choice: *choice, cost });

            let edges = edge_costs(model, *choice, &left_mass, &right_mass)?;
            let predicted = static_predicted_side(*choice);
            for (side, child) in [(Side::Left, left), (Side::Right, right)] {
                let mut next = path.clone();
                next.depth += 1;
                if let Some((l, r)) = &edges {
                    next.cost += if side == Side::Left { l } else { r };
                }
                if let (CostModel::Static(_), Some(p)) = (model, predicted) {
                    next.word.push(if p == side { Outcome::Predicted } else { Outcome::Mispredicted });
                }
                walk(child, dist, model, &mut next, per_node, per_item)?;
            }
            Ok(())
        }
    }
}

/// Expected cost of a three-way search tree: branch costs on the gap ranges
/// below each node plus `equality_cost` times each key's hit mass.
pub fn expected_search_cost(
    tree: &SearchTree,
    sdist: &SearchDistribution,
    model: &CostModel,
    equality_cost: &Rational,
) -> Result<SolveResult<()>, ModelError> {
    tree.validate(sdist.keys())?;
    model.validate()?;
    fn go(t: &SearchTree, sdist: &SearchDistribution, model: &CostModel, e: &Rational) -> Result<Rational, ModelError> {
        match t {
            SearchTree::Gap { .. } => Ok(Rational::zero()),
            SearchTree::Node { key, choice, left, right } => {
                let (first, last) = t.range();
                let lm = sdist.range_mass(first, key - 1);
                let rm = sdist.range_mass(*key, last);
                let here =
                    model.branch_cost(*choice, &lm, &rm, Span { first, last, split: *key })? + e * sdist.key_mass(*key);
                Ok(here + go(left, sdist, model, e)? + go(right, sdist, model, e)?)
            }
        }
    }
    let total = go(tree, sdist, model, equality_cost)?;
    Ok(SolveResult::new((), total, sdist.total().clone()))
}

/// All alphabetic tree shapes over `first..=last`, choices unset (1).
fn shapes(first: usize, last: usize) -> Vec<DecisionTree> {
    if first == last {
        return vec![DecisionTree::leaf(first)];
    }
    let mut out = Vec::new();
    for s in first + 1..=last {
        let lefts = shapes(first, s - 1);
        let rights = shapes(s, last);
        for l in &lefts {
            for r in &rights {
                out.push(DecisionTree::node(s, 1, l.clone(), r.clone()));
            }
        }
    }
    out
}

fn assign_choices(tree: &DecisionTree, choices: &mut impl Iterator<Item = usize>) -> DecisionTree {
    match tree {
        DecisionTree::Leaf { .. } => tree.clone(),
        DecisionTree::Node { split, left, right, .. } => {
            let k = choices.next().expect("one choice per internal node");
            let l = assign_choices(left, choices);
            let r = assign_choices(right, choices);
            DecisionTree::node(*split, k, l, r)
        }
    }
}

/// Exhaustive minimum over every tree shape and every assignment of cost
/// functions to nodes. Independent of the DP; meant for small `n`.
pub fn brute_force_optimal(dist: &ItemDistribution, model: &CostModel, limit: usize) -> Result<SolveResult, EvalError> {
    let n = dist.len();
    if n > limit {
        return Err(EvalError::TooLarge { n, limit });
    }
    model.validate()?;
    let m = model.choice_count();

    let mut best: Option<(Rational, DecisionTree, Vec<usize>)> = None;
    for shape in shapes(1, n) {
        // option_costs[node][k-1], nodes in preorder
        let nodes = shape.internal_nodes();
        let option_costs = nodes
            .iter()
            .map(|(span, _)| {
                let l = dist.range_mass(span.first, span.split - 1);
                let r = dist.range_mass(span.split, span.last);
                (1..=m).map(|k| model.branch_cost(k, &l, &r, *span)).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;

        // Mixed-radix counter over all m^(n-1) assignments.
        let mut digits = vec![0usize; nodes.len()];
        loop {
            let cost = digits.iter().zip(&option_costs).fold(Rational::zero(), |acc, (&d, opts)| acc + &opts[d]);
            if best.as_ref().is_none_or(|(b, _, _)| cost < *b) {
                best = Some((cost, shape.clone(), digits.iter().map(|d| d + 1).collect()));
            }
            let Some(pos) = digits.iter().rposition(|&d| d + 1 < m) else { break };
            digits[pos] += 1;
            for d in &mut digits[pos + 1..] {
                *d = 0;
            }
        }
    }
    let (cost, shape, choices) = best.expect("at least one tree exists");
    let tree = assign_choices(&shape, &mut choices.into_iter());
    Ok(SolveResult::new(tree, cost, dist.total().clone()))
}

/// Number of alphabetic tree shapes on `n` leaves (Catalan(n-1)); exposed for
/// sizing brute-force runs.
pub fn shape_count(n: usize) -> u128 {
    let k = n.saturating_sub(1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c
}
