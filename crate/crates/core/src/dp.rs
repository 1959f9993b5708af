//! Interval dynamic programs over split points.
//!
//! Every solver fills `cost(i, j)` for all ranges by increasing length,
//! minimizing over the split `s` and the branch cost function `k`. Ties are
//! broken toward the smallest `s`, then the smallest `k`. Knuth-style split
//! monotonicity does not hold once edge costs may be swapped per node, so
//! the full O(m n^3) scan is always performed.

use num_traits::Zero;

use crate::model::{
    CostModel, DecisionTree, ItemDistribution, ModelError, Rational, SearchDistribution, SearchTree, Span,
    StaticCostPair,
};

/// Filled DP table for an alphabetic problem over items `1..=n`.
#[derive(Debug, Clone)]
pub struct DpTable {
    n: usize,
    cost: Vec<Rational>,
    split: Vec<usize>,
    choice: Vec<usize>,
}

impl DpTable {
    fn new(n: usize) -> Self {
        DpTable { n, cost: vec![Rational::zero(); n * n], split: vec![0; n * n], choice: vec![0; n * n] }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.n + (j - 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Optimal cost of items `i..=j` (unnormalized).
    pub fn cost(&self, i: usize, j: usize) -> &Rational {
        &self.cost[self.idx(i, j)]
    }

    /// Optimal split for `i..=j`; `None` for single items.
    pub fn split(&self, i: usize, j: usize) -> Option<usize> {
        (i < j).then(|| self.split[self.idx(i, j)])
    }

    pub fn choice(&self, i: usize, j: usize) -> Option<usize> {
        (i < j).then(|| self.choice[self.idx(i, j)])
    }

    /// Optimal subtree for `i..=j`.
    pub fn tree(&self, i: usize, j: usize) -> DecisionTree {
        match (self.split(i, j), self.choice(i, j)) {
            (Some(s), Some(k)) => DecisionTree::node(s, k, self.tree(i, s - 1), self.tree(s, j)),
            _ => DecisionTree::leaf(i),
        }
    }
}

/// An optimal tree together with its cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult<T = DecisionTree> {
    pub tree: T,
    /// Cost over the raw weights.
    pub total_cost: Rational,
    pub total_mass: Rational,
    /// `total_cost / total_mass`, the expected cost per lookup.
    pub normalized_cost: Rational,
}

impl<T> SolveResult<T> {
    pub fn new(tree: T, total_cost: Rational, total_mass: Rational) -> Self {
        let normalized_cost = &total_cost / &total_mass;
        SolveResult { tree, total_cost, total_mass, normalized_cost }
    }
}

fn fill_table<F>(dist: &ItemDistribution, choices: usize, mut node_cost: F) -> Result<DpTable, ModelError>
where
    F: FnMut(usize, &Rational, &Rational, Span) -> Result<Rational, ModelError>,
{
    let n = dist.len();
    let mut table = DpTable::new(n);
    for len in 2..=n {
        for i in 1..=n + 1 - len {
            let j = i + len - 1;
            let mut best: Option<(Rational, usize, usize)> = None;
            for s in i + 1..=j {
                let left = dist.range_mass(i, s - 1);
                let right = dist.range_mass(s, j);
                let below = table.cost(i, s - 1) + table.cost(s, j);
                for k in 1..=choices {
                    let span = Span { first: i, last: j, split: s };
                    let candidate = node_cost(k, &left, &right, span)? + &below;
                    if best.as_ref().is_none_or(|(b, _, _)| candidate < *b) {
                        best = Some((candidate, s, k));
                    }
                }
            }
            let (c, s, k) = best.expect("ranges of length >= 2 have a split");
            let at = table.idx(i, j);
            table.cost[at] = c;
            table.split[at] = s;
            table.choice[at] = k;
        }
    }
    Ok(table)
}

fn finish(dist: &ItemDistribution, table: &DpTable) -> SolveResult {
    let n = dist.len();
    SolveResult::new(table.tree(1, n), table.cost(1, n).clone(), dist.total().clone())
}

/// Table for the unordered-edge problem: at every node either side may be
/// the mispredicted one.
pub fn branch_optimal_table(dist: &ItemDistribution, pair: &StaticCostPair) -> DpTable {
    let (c1, c2) = (pair.mispredict(), pair.predict());
    fill_table(dist, 2, |k, left, right, _| {
        Ok(match k {
            // c': the left subtree is the mispredicted outcome
            1 => c1 * left + c2 * right,
            // c'': the right subtree is
            _ => c2 * left + c1 * right,
        })
    })
    .expect("static costs never fail")
}

/// Optimal alphabetic tree when each node may put the misprediction cost on
/// either child. Choice 1 charges `c_mispredict` to the left subtree,
/// choice 2 to the right.
pub fn solve_branch_optimal(dist: &ItemDistribution, pair: &StaticCostPair) -> SolveResult {
    finish(dist, &branch_optimal_table(dist, pair))
}

/// Baseline with edge costs bound to direction: the left edge always costs
/// `c_mispredict`, the right edge `c_predict`.
pub fn solve_ordered_edge(dist: &ItemDistribution, pair: &StaticCostPair) -> SolveResult {
    let (c1, c2) = (pair.mispredict(), pair.predict());
    let table = fill_table(dist, 1, |_, left, right, _| Ok(c1 * left + c2 * right)).expect("static costs never fail");
    finish(dist, &table)
}

/// Minimum expected number of comparisons.
pub fn solve_uniform_cost(dist: &ItemDistribution) -> SolveResult {
    let unit = StaticCostPair::from_integers(1, 1).expect("unit costs are positive");
    solve_branch_optimal(dist, &unit)
}

/// Table for an arbitrary family of branch cost functions.
pub fn generalized_table(dist: &ItemDistribution, model: &CostModel) -> Result<DpTable, ModelError> {
    model.validate()?;
    fill_table(dist, model.choice_count(), |k, left, right, span| model.branch_cost(k, left, right, span))
}

/// Optimal tree under any cost model. Each node records the index of the
/// cost function it uses; dynamic models have a single function.
pub fn solve_generalized(dist: &ItemDistribution, model: &CostModel) -> Result<SolveResult, ModelError> {
    Ok(finish(dist, &generalized_table(dist, model)?))
}

/// Optimal three-way search tree with static (or no) prediction: each node
/// pays the branch cost on its two gap ranges plus `equality_cost` times the
/// hit mass of its key.
pub fn solve_search_tree(
    sdist: &SearchDistribution,
    pair: &StaticCostPair,
    equality_cost: &Rational,
) -> Result<SolveResult<SearchTree>, ModelError> {
    solve_search_tree_general(sdist, &CostModel::Static(pair.clone()), equality_cost)
}

/// Three-way search tree under any branch cost model. Spans passed to the
/// cost functions use boundary indices.
pub fn solve_search_tree_general(
    sdist: &SearchDistribution,
    model: &CostModel,
    equality_cost: &Rational,
) -> Result<SolveResult<SearchTree>, ModelError> {
    use num_traits::Signed;
    if !equality_cost.is_positive() {
        return Err(ModelError::NonPositiveEqualityCost);
    }
    model.validate()?;
    let n = sdist.keys();
    let width = n + 1;
    let at = |i: usize, j: usize| i * width + j;
    let mut cost = vec![Rational::zero(); width * width];
    let mut key = vec![0usize; width * width];
    let mut choice = vec![0usize; width * width];

    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let mut best: Option<(Rational, usize, usize)> = None;
            for s in i + 1..=j {
                let left = sdist.range_mass(i, s - 1);
                let right = sdist.range_mass(s, j);
                let fixed = equality_cost * sdist.key_mass(s) + &cost[at(i, s - 1)] + &cost[at(s, j)];
                for k in 1..=model.choice_count() {
                    let span = Span { first: i, last: j, split: s };
                    let candidate = model.branch_cost(k, &left, &right, span)? + &fixed;
                    if best.as_ref().is_none_or(|(b, _, _)| candidate < *b) {
                        best = Some((candidate, s, k));
                    }
                }
            }
            let (c, s, k) = best.expect("nonempty boundary range has a key");
            cost[at(i, j)] = c;
            key[at(i, j)] = s;
            choice[at(i, j)] = k;
        }
    }

    fn build(i: usize, j: usize, width: usize, key: &[usize], choice: &[usize]) -> SearchTree {
        if i == j {
            return SearchTree::gap(i);
        }
        let s = key[i * width + j];
        let k = choice[i * width + j];
        SearchTree::node(s, k, build(i, s - 1, width, key, choice), build(s, j, width, key, choice))
    }

    Ok(SolveResult::new(build(0, n, width, &key, &choice), cost[at(0, n)].clone(), sdist.total().clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, parse_rational};
    use crate::predictor::Predictor;

    fn r(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn pair(c1: i64, c2: i64) -> StaticCostPair {
        StaticCostPair::from_integers(c1, c2).unwrap()
    }

    #[test]
    fn single_item_is_a_leaf() {
        let d = ItemDistribution::parse(&["5"]).unwrap();
        let res = solve_branch_optimal(&d, &pair(3, 1));
        assert_eq!(res.tree, DecisionTree::leaf(1));
        assert_eq!(res.total_cost, int(0));
        let res = solve_ordered_edge(&d, &pair(3, 1));
        assert_eq!(res.total_cost, int(0));
    }

    #[test]
    fn split_monotonicity_counterexample() {
        let d = ItemDistribution::parse(&["0.3", "0.2", "0.2", "0.3"]).unwrap();
        let table = branch_optimal_table(&d, &pair(3, 1));
        assert_eq!(table.split(1, 4), Some(2));
        assert_eq!(table.split(2, 4), Some(3));
        assert_eq!(table.split(1, 3), Some(3));
        assert_eq!(table.cost(1, 4), &r("18/5"));
        // The mirror split is equally good.
        let mirror_cost = d.mass(1, 3).unwrap() + int(3) * d.weight(4) + table.cost(1, 3);
        assert_eq!(&mirror_cost, table.cost(1, 4));
    }

    #[test]
    fn binomial_costs() {
        let d = ItemDistribution::from_integers(&[1, 6, 15, 20, 15, 6, 1]).unwrap();
        let branch = solve_branch_optimal(&d, &pair(11, 2));
        assert_eq!(branch.total_cost, int(831));
        assert_eq!(branch.normalized_cost, r("831/64"));
        let ordered = solve_ordered_edge(&d, &pair(11, 2));
        assert_eq!(ordered.total_cost, int(967));
        assert_eq!(ordered.normalized_cost, r("967/64"));
    }

    #[test]
    fn uniform_four_items() {
        let d = ItemDistribution::uniform(4).unwrap();
        let res = solve_branch_optimal(&d, &pair(3, 1));
        assert_eq!(res.normalized_cost, r("15/4"));
        assert_eq!(solve_uniform_cost(&d).normalized_cost, int(2));
    }

    #[test]
    fn ordered_edge_small_cases() {
        let d = ItemDistribution::uniform(2).unwrap();
        assert_eq!(solve_ordered_edge(&d, &pair(3, 1)).normalized_cost, int(2));
        let d = ItemDistribution::from_integers(&[4, 1, 7, 2, 2]).unwrap();
        let p = pair(5, 5);
        assert_eq!(solve_ordered_edge(&d, &p).total_cost, solve_branch_optimal(&d, &p).total_cost);
    }

    #[test]
    fn generalized_reduces_to_branch_optimal() {
        let d = ItemDistribution::from_integers(&[1, 6, 15, 20, 15, 6, 1]).unwrap();
        let p = pair(11, 2);
        let via_table = solve_generalized(&d, &CostModel::static_table(&p)).unwrap();
        let via_static = solve_generalized(&d, &CostModel::Static(p.clone())).unwrap();
        let direct = solve_branch_optimal(&d, &p);
        assert_eq!(via_table, direct);
        assert_eq!(via_static, direct);
        assert_eq!(direct.total_cost, int(831));
    }

    #[test]
    fn generalized_constant_cost_is_comparison_count() {
        use crate::model::LinearBranchCost;
        use std::sync::Arc;
        let d = ItemDistribution::uniform(4).unwrap();
        let model =
            CostModel::Table(vec![Arc::new(LinearBranchCost { name: "unit".into(), left: int(1), right: int(1) })]);
        let res = solve_generalized(&d, &model).unwrap();
        assert_eq!(res.normalized_cost, int(2));
        assert_eq!(res.tree.depth(), 2);
    }

    #[test]
    fn generalized_dynamic_single_node() {
        let d = ItemDistribution::from_integers(&[1, 3]).unwrap();
        let p = pair(3, 1);
        let dynamic = solve_generalized(&d, &CostModel::dynamic(Predictor::A2, p.clone())).unwrap();
        assert_eq!(dynamic.normalized_cost, r("8/5"));
        assert_eq!(solve_branch_optimal(&d, &p).normalized_cost, r("3/2"));
    }

    #[test]
    fn generalized_errors() {
        let d = ItemDistribution::uniform(3).unwrap();
        assert_eq!(solve_generalized(&d, &CostModel::Table(vec![])).unwrap_err(), ModelError::EmptyTable);

        use crate::model::FnBranchCost;
        use std::sync::Arc;
        let negative =
            CostModel::Table(vec![Arc::new(FnBranchCost::new("neg", |l: &Rational, r: &Rational, _| -(l + r)))]);
        assert!(matches!(solve_generalized(&d, &negative), Err(ModelError::NegativeCost { .. })));
    }

    #[test]
    fn span_aware_cost_functions() {
        use crate::model::FnBranchCost;
        use std::sync::Arc;
        // Branches choosing between exactly two items are free (conditional move).
        let d = ItemDistribution::uniform(4).unwrap();
        let model =
            CostModel::Table(vec![Arc::new(FnBranchCost::new("cmov", |l: &Rational, r: &Rational, span: Span| {
                if span.last - span.first == 1 {
                    Rational::zero()
                } else {
                    l + r
                }
            }))]);
        let res = solve_generalized(&d, &model).unwrap();
        assert_eq!(res.normalized_cost, int(1));
    }

    #[test]
    fn search_tree_examples() {
        let p = pair(1, 1);
        let one = SearchDistribution::new(vec![int(0), int(0)], vec![int(1)]).unwrap();
        let res = solve_search_tree(&one, &p, &int(5)).unwrap();
        assert_eq!(res.total_cost, int(5));

        let two = SearchDistribution::new(vec![int(0); 3], vec![r("1/2"), r("1/2")]).unwrap();
        let res = solve_search_tree(&two, &p, &int(1)).unwrap();
        assert_eq!(res.total_cost, r("3/2"));
        res.tree.validate(2).unwrap();

        assert_eq!(solve_search_tree(&two, &p, &int(0)).unwrap_err(), ModelError::NonPositiveEqualityCost);
    }

    #[test]
    fn search_tree_alphabetic_special_case() {
        let d = ItemDistribution::parse(&["0.3", "0.2", "0.2", "0.3"]).unwrap();
        let s = SearchDistribution::from_items(&d).unwrap();
        let res = solve_search_tree(&s, &pair(3, 1), &int(7)).unwrap();
        assert_eq!(res.total_cost, r("18/5"));
        let alpha = solve_branch_optimal(&d, &pair(3, 1));
        match (&res.tree, &alpha.tree) {
            (SearchTree::Node { key, .. }, DecisionTree::Node { split, .. }) => assert_eq!(key + 1, *split),
            _ => panic!("expected internal roots"),
        }
    }
}
