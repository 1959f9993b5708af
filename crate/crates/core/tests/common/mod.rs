//! Reference implementations used as oracles by the integration tests.
//! They share no code with the library beyond its data types.

#![allow(dead_code)]

use branchtree::model::{DecisionTree, ItemDistribution, Rational, StaticCostPair};
use num_traits::{One, Zero};
use std::ops::{Add, Div, Mul, Sub};

/// `[on untaken, on taken]` successors and whether each state predicts taken.
pub struct Chain {
    pub next: &'static [[usize; 2]],
    pub predicts_taken: &'static [bool],
}

pub const A2: Chain = Chain { next: &[[0, 1], [0, 2], [1, 3], [2, 3]], predicts_taken: &[false, false, true, true] };
pub const A3: Chain = Chain { next: &[[0, 1], [0, 3], [0, 3], [2, 3]], predicts_taken: &[false, false, true, true] };

pub trait Field:
    Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
}
impl<T> Field for T where T: Clone + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T> {}

/// Stationary distribution by the Markov chain tree theorem: the weight of
/// state `r` is the sum over spanning in-trees rooted at `r` of the product
/// of edge probabilities. Needs `0 < p < 1`.
pub fn tree_theorem<T: Field>(chain: &Chain, p: T) -> Vec<T> {
    let n = chain.next.len();
    let q = T::one() - p.clone();
    let prob = |from: usize, to: usize| -> T {
        let mut w = T::zero();
        if chain.next[from][0] == to {
            w = w + q.clone();
        }
        if chain.next[from][1] == to {
            w = w + p.clone();
        }
        w
    };
    let mut weights = vec![T::zero(); n];
    for (root, slot) in weights.iter_mut().enumerate() {
        let others: Vec<usize> = (0..n).filter(|&v| v != root).collect();
        let combos = n.pow(others.len() as u32);
        for code in 0..combos {
            let mut parent = vec![usize::MAX; n];
            let mut c = code;
            let mut ok = true;
            for &v in &others {
                let t = c % n;
                c /= n;
                if t == v || (chain.next[v][0] != t && chain.next[v][1] != t) {
                    ok = false;
                    break;
                }
                parent[v] = t;
            }
            if !ok {
                continue;
            }
            let acyclic = others.iter().all(|&v| {
                let mut cur = v;
                for _ in 0..n {
                    if cur == root {
                        return true;
                    }
                    cur = parent[cur];
                }
                cur == root
            });
            if !acyclic {
                continue;
            }
            let mut w = T::one();
            for &v in &others {
                w = w * prob(v, parent[v]);
            }
            *slot = slot.clone() + w;
        }
    }
    let total = weights.iter().cloned().fold(T::zero(), |a, b| a + b);
    weights.into_iter().map(|w| w / total.clone()).collect()
}

/// Misprediction rate when the taken direction has probability `p`.
pub fn oracle_rate<T: Field>(chain: &Chain, p: T) -> T {
    let pi = tree_theorem(chain, p.clone());
    let q = T::one() - p.clone();
    pi.into_iter()
        .zip(chain.predicts_taken)
        .fold(T::zero(), |acc, (w, &taken)| acc + w * if taken { q.clone() } else { p.clone() })
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Every tree over items `i..=j` with `choices` orientations per node.
pub fn all_trees(i: usize, j: usize, choices: usize) -> Vec<DecisionTree> {
    if i == j {
        return vec![DecisionTree::leaf(i)];
    }
    let mut out = Vec::new();
    for s in i + 1..=j {
        let lefts = all_trees(i, s - 1, choices);
        let rights = all_trees(s, j, choices);
        for l in &lefts {
            for r in &rights {
                for k in 1..=choices {
                    out.push(DecisionTree::node(s, k, l.clone(), r.clone()));
                }
            }
        }
    }
    out
}

/// Static cost walked item by item: choice 1 mispredicts the left edge,
/// choice 2 the right edge.
pub fn static_path_cost(tree: &DecisionTree, dist: &ItemDistribution, pair: &StaticCostPair) -> Rational {
    let mut total = Rational::zero();
    for item in 1..=dist.len() {
        let mut node = tree;
        let mut cost = Rational::zero();
        while let DecisionTree::Node { split, choice, left, right } = node {
            let go_left = item < *split;
            let mispredicted = go_left == (*choice == 1);
            cost += if mispredicted { pair.mispredict() } else { pair.predict() };
            node = if go_left { left } else { right };
        }
        total += cost * dist.weight(item);
    }
    total
}

fn subtree_mass(tree: &DecisionTree, dist: &ItemDistribution) -> Rational {
    tree.leaves().iter().map(|&i| dist.weight(i).clone()).fold(Rational::zero(), |a, b| a + b)
}

/// Adaptive cost summed node by node from the tree-theorem rate.
pub fn dynamic_node_cost(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    chain: &Chain,
    pair: &StaticCostPair,
) -> Rational {
    match tree {
        DecisionTree::Leaf { .. } => Rational::zero(),
        DecisionTree::Node { left, right, .. } => {
            let l = subtree_mass(left, dist);
            let r = subtree_mass(right, dist);
            let total = &l + &r;
            let here = if total.is_zero() {
                Rational::zero()
            } else {
                let minority = if l < r { l } else { r } / &total;
                let f = if minority.is_zero() { Rational::zero() } else { oracle_rate(chain, minority) };
                &total * (pair.mispredict() * &f + pair.predict() * (Rational::one() - f))
            };
            here + dynamic_node_cost(left, dist, chain, pair) + dynamic_node_cost(right, dist, chain, pair)
        }
    }
}

pub fn min_static(dist: &ItemDistribution, pair: &StaticCostPair) -> Rational {
    all_trees(1, dist.len(), 2).iter().map(|t| static_path_cost(t, dist, pair)).min().unwrap()
}

pub fn min_dynamic(dist: &ItemDistribution, chain: &Chain, pair: &StaticCostPair) -> Rational {
    all_trees(1, dist.len(), 1).iter().map(|t| dynamic_node_cost(t, dist, chain, pair)).min().unwrap()
}
