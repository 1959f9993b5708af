//! Core data types: item and search distributions, branch cost models,
//! decision trees and search trees.
//!
//! All quantities are exact rationals. Weights are kept unnormalized; every
//! cost formula in the crate is homogeneous of degree one in mass, so a
//! result over raw weights divided by the total mass is the per-unit cost.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::predictor::Predictor;

/// Exact rational used for every mass and cost.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("negative weight at position {index}")]
    NegativeWeight { index: usize },
    #[error("distribution has zero total mass")]
    ZeroTotal,
    #[error("index range ({i}, {j}) out of bounds for {n} items")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("cannot parse {0:?} as a rational number")]
    ParseRational(String),
    #[error("branch costs must be strictly positive")]
    NonPositiveCost,
    #[error("equality cost must be strictly positive")]
    NonPositiveEqualityCost,
    #[error("search distribution needs alpha of length beta + 1 (got {alpha} and {beta})")]
    SearchShape { alpha: usize, beta: usize },
    #[error("cost model has no branch cost functions")]
    EmptyTable,
    #[error("choice {choice} is not valid for a model with {available} cost functions")]
    InvalidChoice { choice: usize, available: usize },
    #[error("branch cost function {name:?} returned a negative cost")]
    NegativeCost { name: String },
    #[error("tree does not match distribution: {0}")]
    TreeMismatch(String),
    #[error(transparent)]
    Predictor(#[from] crate::predictor::PredictorError),
}

/// Parse an integer, a decimal (`0.3`, `-1.5e-2`) or a fraction (`3/10`).
pub fn parse_rational(text: &str) -> Result<Rational, ModelError> {
    let err = || ModelError::ParseRational(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = t.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| err())?;
        let den = BigInt::from_str(den.trim()).map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(num, den));
    }

    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => {
            let exp = t[pos + 1..].parse::<i32>().map_err(|_| err())?;
            (&t[..pos], exp)
        }
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let joined = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(BigInt::from_str(&joined).map_err(|_| err())?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// Canonical text form: `p/q`, or `p` for integers.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Nearest `f64` to an exact rational.
pub fn to_f64(value: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    value.to_f64().unwrap_or(f64::NAN)
}

pub(crate) fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// A rational that deserializes from a JSON number or string and serializes
/// as its canonical string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RationalValue(pub Rational);

impl Serialize for RationalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for RationalValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RationalVisitor;

        impl Visitor<'_> for RationalVisitor {
            type Value = RationalValue;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a rational string such as \"3/10\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(RationalValue(int(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(RationalValue(Rational::from_integer(BigInt::from(v))))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                // Shortest round-trip text is the literal the user wrote.
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                parse_rational(&v.to_string()).map(RationalValue).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                parse_rational(v).map(RationalValue).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(RationalVisitor)
    }
}

/// Nonnegative item weights with O(1) range masses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDistribution {
    weights: Vec<Rational>,
    // prefix[k] = weights[0] + ... + weights[k-1]
    prefix: Vec<Rational>,
}

impl ItemDistribution {
    pub fn new(weights: Vec<Rational>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        if let Some(index) = weights.iter().position(|w| w.is_negative()) {
            return Err(ModelError::NegativeWeight { index: index + 1 });
        }
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        prefix.push(Rational::zero());
        for w in &weights {
            let next = prefix.last().unwrap() + w;
            prefix.push(next);
        }
        if prefix.last().unwrap().is_zero() {
            return Err(ModelError::ZeroTotal);
        }
        Ok(ItemDistribution { weights, prefix })
    }

    /// Build from textual weights (integers, decimals or `p/q`).
    pub fn parse<S: AsRef<str>>(weights: &[S]) -> Result<Self, ModelError> {
        let parsed = weights.iter().map(|w| parse_rational(w.as_ref())).collect::<Result<Vec<_>, _>>()?;
        Self::new(parsed)
    }

    pub fn from_integers(weights: &[i64]) -> Result<Self, ModelError> {
        Self::new(weights.iter().map(|&w| int(w)).collect())
    }

    pub fn uniform(n: usize) -> Result<Self, ModelError> {
        Self::new(vec![Rational::one(); n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    /// Weight of item `i` (1-based).
    pub fn weight(&self, i: usize) -> &Rational {
        &self.weights[i - 1]
    }

    pub fn total(&self) -> &Rational {
        self.prefix.last().unwrap()
    }

    /// Mass of items `i..=j` (1-based, inclusive).
    pub fn mass(&self, i: usize, j: usize) -> Result<Rational, ModelError> {
        if i < 1 || i > j || j > self.len() {
            return Err(ModelError::IndexOutOfRange { i, j, n: self.len() });
        }
        Ok(self.range_mass(i, j))
    }

    pub(crate) fn range_mass(&self, i: usize, j: usize) -> Rational {
        &self.prefix[j] - &self.prefix[i - 1]
    }

    /// The same distribution with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: &Rational) -> Result<Self, ModelError> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }
}

/// Three-way search distribution: `alpha[0..=n]` gap masses and
/// `beta[1..=n]` key masses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchDistribution {
    alpha: Vec<Rational>,
    beta: Vec<Rational>,
    // interleaved prefix over alpha_0, beta_1, alpha_1, ..., beta_n, alpha_n
    prefix: Vec<Rational>,
}

impl SearchDistribution {
    pub fn new(alpha: Vec<Rational>, beta: Vec<Rational>) -> Result<Self, ModelError> {
        if beta.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        if alpha.len() != beta.len() + 1 {
            return Err(ModelError::SearchShape { alpha: alpha.len(), beta: beta.len() });
        }
        if let Some(index) = alpha.iter().chain(&beta).position(|w| w.is_negative()) {
            return Err(ModelError::NegativeWeight { index: index + 1 });
        }
        let mut prefix = Vec::with_capacity(2 * alpha.len());
        prefix.push(Rational::zero());
        let mut acc = alpha[0].clone();
        prefix.push(acc.clone());
        for (b, a) in beta.iter().zip(&alpha[1..]) {
            acc += b;
            prefix.push(acc.clone());
            acc += a;
            prefix.push(acc.clone());
        }
        if acc.is_zero() {
            return Err(ModelError::ZeroTotal);
        }
        Ok(SearchDistribution { alpha, beta, prefix })
    }

    /// Search distribution equivalent to an alphabetic problem: `n' = n - 1`,
    /// no key hits, gaps carrying the item weights.
    pub fn from_items(dist: &ItemDistribution) -> Result<Self, ModelError> {
        let beta = vec![Rational::zero(); dist.len().saturating_sub(1)];
        Self::new(dist.weights().to_vec(), beta)
    }

    /// Number of keys `n'`.
    pub fn keys(&self) -> usize {
        self.beta.len()
    }

    pub fn alpha(&self) -> &[Rational] {
        &self.alpha
    }

    /// `beta[0]` is the hit mass of key 1.
    pub fn beta(&self) -> &[Rational] {
        &self.beta
    }

    pub fn key_mass(&self, s: usize) -> &Rational {
        &self.beta[s - 1]
    }

    pub fn total(&self) -> &Rational {
        self.prefix.last().unwrap()
    }

    /// `alpha_i + sum_{k=i+1..=j} (beta_k + alpha_k)` for `0 <= i <= j <= n'`.
    pub fn mass(&self, i: usize, j: usize) -> Result<Rational, ModelError> {
        if i > j || j > self.keys() {
            return Err(ModelError::IndexOutOfRange { i, j, n: self.keys() });
        }
        Ok(self.range_mass(i, j))
    }

    pub(crate) fn range_mass(&self, i: usize, j: usize) -> Rational {
        // alpha_i sits at interleaved position 2i; alpha_j ends at 2j + 1.
        &self.prefix[2 * j + 1] - &self.prefix[2 * i]
    }
}

/// Cost of a correctly predicted and a mispredicted branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StaticCostPair {
    c_mispredict: Rational,
    c_predict: Rational,
}

impl StaticCostPair {
    pub fn new(c_mispredict: Rational, c_predict: Rational) -> Result<Self, ModelError> {
        if !c_mispredict.is_positive() || !c_predict.is_positive() {
            return Err(ModelError::NonPositiveCost);
        }
        Ok(StaticCostPair { c_mispredict, c_predict })
    }

    pub fn from_integers(c_mispredict: i64, c_predict: i64) -> Result<Self, ModelError> {
        Self::new(int(c_mispredict), int(c_predict))
    }

    pub fn mispredict(&self) -> &Rational {
        &self.c_mispredict
    }

    pub fn predict(&self) -> &Rational {
        &self.c_predict
    }

    pub fn cost_of(&self, outcome: Outcome) -> &Rational {
        match outcome {
            Outcome::Mispredicted => &self.c_mispredict,
            Outcome::Predicted => &self.c_predict,
        }
    }

    pub fn scaled(&self, factor: &Rational) -> Result<Self, ModelError> {
        Self::new(&self.c_mispredict * factor, &self.c_predict * factor)
    }
}

/// Position of a subtree relative to its parent's split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Outcome of a single branch relative to its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Mispredicted,
    Predicted,
}

/// The sequence of prediction outcomes along a root-to-leaf path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BranchOutcomeWord(pub Vec<Outcome>);

impl BranchOutcomeWord {
    /// From the numeric coding `1` = mispredicted, `2` = predicted.
    pub fn from_codes(codes: &[u8]) -> Option<Self> {
        codes
            .iter()
            .map(|c| match c {
                1 => Some(Outcome::Mispredicted),
                2 => Some(Outcome::Predicted),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(BranchOutcomeWord)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn concat(&self, other: &BranchOutcomeWord) -> BranchOutcomeWord {
        BranchOutcomeWord(self.0.iter().chain(&other.0).copied().collect())
    }
}

/// Location of an internal node: it covers `first..=last` and its right
/// subtree starts at `split`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub first: usize,
    pub last: usize,
    pub split: usize,
}

/// A branch cost function `C_k(p', p'', i, j, s)`.
///
/// Implementations must be homogeneous of degree one in the two masses and
/// return a finite nonnegative cost, including when both masses are zero.
pub trait BranchCost: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;
    fn cost(&self, left_mass: &Rational, right_mass: &Rational, span: Span) -> Rational;
}

/// `left * p' + right * p''`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearBranchCost {
    pub name: String,
    pub left: Rational,
    pub right: Rational,
}

impl BranchCost for LinearBranchCost {
    fn name(&self) -> &str {
        &self.name
    }

    fn cost(&self, left_mass: &Rational, right_mass: &Rational, _span: Span) -> Rational {
        &self.left * left_mass + &self.right * right_mass
    }
}

/// Expected cost of an adaptively predicted branch.
#[derive(Debug, Clone)]
pub struct DynamicBranchCost {
    pub name: String,
    pub predictor: Predictor,
    pub pair: StaticCostPair,
}

impl BranchCost for DynamicBranchCost {
    fn name(&self) -> &str {
        &self.name
    }

    fn cost(&self, left_mass: &Rational, right_mass: &Rational, _span: Span) -> Rational {
        let (lo, hi) = min_max(left_mass, right_mass);
        crate::predictor::branch_cost_dynamic(&self.pair, &self.predictor, lo, hi)
            .expect("masses are nonnegative and ordered")
    }
}

/// Wraps a closure as a named branch cost function.
pub struct FnBranchCost<F> {
    name: String,
    f: F,
}

impl<F> FnBranchCost<F>
where
    F: Fn(&Rational, &Rational, Span) -> Rational + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnBranchCost { name: name.into(), f }
    }
}

impl<F> fmt::Debug for FnBranchCost<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnBranchCost").field("name", &self.name).finish()
    }
}

impl<F> BranchCost for FnBranchCost<F>
where
    F: Fn(&Rational, &Rational, Span) -> Rational + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn cost(&self, left_mass: &Rational, right_mass: &Rational, span: Span) -> Rational {
        (self.f)(left_mass, right_mass, span)
    }
}

pub(crate) fn min_max<'a>(a: &'a Rational, b: &'a Rational) -> (&'a Rational, &'a Rational) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// How a single branch is charged.
#[derive(Debug, Clone)]
pub enum CostModel {
    /// Fixed costs; the node's choice says which side is mispredicted
    /// (choice 1: left pays `c_mispredict`, choice 2: right does).
    Static(StaticCostPair),
    /// Adaptive prediction; cost depends only on the two child masses.
    Dynamic { predictor: Predictor, pair: StaticCostPair },
    /// Arbitrary indexed family of branch cost functions.
    Table(Vec<Arc<dyn BranchCost>>),
}

impl CostModel {
    pub fn dynamic(predictor: Predictor, pair: StaticCostPair) -> Self {
        CostModel::Dynamic { predictor, pair }
    }

    /// The two-function table equivalent to a static pair.
    pub fn static_table(pair: &StaticCostPair) -> Self {
        let c1 = pair.mispredict().clone();
        let c2 = pair.predict().clone();
        CostModel::Table(vec![
            Arc::new(LinearBranchCost { name: "mispredict-left".into(), left: c1.clone(), right: c2.clone() }),
            Arc::new(LinearBranchCost { name: "mispredict-right".into(), left: c2, right: c1 }),
        ])
    }

    /// Number of cost functions `m` a solver minimizes over.
    pub fn choice_count(&self) -> usize {
        match self {
            CostModel::Static(_) => 2,
            CostModel::Dynamic { .. } => 1,
            CostModel::Table(fns) => fns.len(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            CostModel::Table(fns) if fns.is_empty() => Err(ModelError::EmptyTable),
            CostModel::Dynamic { predictor, .. } => Ok(predictor.validate()?),
            _ => Ok(()),
        }
    }

    /// Cost of a node with the given child masses under choice `k` (1-based).
    /// Dynamic models ignore `k`.
    pub fn branch_cost(
        &self,
        k: usize,
        left_mass: &Rational,
        right_mass: &Rational,
        span: Span,
    ) -> Result<Rational, ModelError> {
        match self {
            CostModel::Static(pair) => match k {
                1 => Ok(pair.mispredict() * left_mass + pair.predict() * right_mass),
                2 => Ok(pair.predict() * left_mass + pair.mispredict() * right_mass),
                _ => Err(ModelError::InvalidChoice { choice: k, available: 2 }),
            },
            CostModel::Dynamic { predictor, pair } => {
                let (lo, hi) = min_max(left_mass, right_mass);
                Ok(crate::predictor::branch_cost_dynamic(pair, predictor, lo, hi)?)
            }
            CostModel::Table(fns) => {
                let f = k
                    .checked_sub(1)
                    .and_then(|idx| fns.get(idx))
                    .ok_or(ModelError::InvalidChoice { choice: k, available: fns.len() })?;
                let cost = f.cost(left_mass, right_mass, span);
                if cost.is_negative() {
                    return Err(ModelError::NegativeCost { name: f.name().to_string() });
                }
                Ok(cost)
            }
        }
    }

    /// Name of cost function `k`, for reports.
    pub fn choice_name(&self, k: usize) -> String {
        match self {
            CostModel::Static(_) if k == 1 => "mispredict-left".into(),
            CostModel::Static(_) if k == 2 => "mispredict-right".into(),
            CostModel::Dynamic { predictor, .. } => format!("dynamic-{}", predictor.name()),
            CostModel::Table(fns) if (1..=fns.len()).contains(&k) => fns[k - 1].name().to_string(),
            _ => format!("choice-{k}"),
        }
    }
}

/// Alphabetic comparison tree over items `i..=j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DecisionTree {
    Leaf { item: usize },
    Node { split: usize, choice: usize, left: Box<DecisionTree>, right: Box<DecisionTree> },
}

impl DecisionTree {
    pub fn leaf(item: usize) -> Self {
        DecisionTree::Leaf { item }
    }

    pub fn node(split: usize, choice: usize, left: DecisionTree, right: DecisionTree) -> Self {
        DecisionTree::Node { split, choice, left: Box::new(left), right: Box::new(right) }
    }

    /// Leftmost and rightmost item.
    pub fn range(&self) -> (usize, usize) {
        match self {
            DecisionTree::Leaf { item } => (*item, *item),
            DecisionTree::Node { left, right, .. } => (left.range().0, right.range().1),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 1,
            DecisionTree::Node { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn internal_count(&self) -> usize {
        self.leaf_count() - 1
    }

    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf { .. } => 0,
            DecisionTree::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Items in left-to-right order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            DecisionTree::Leaf { item } => out.push(*item),
            DecisionTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    /// Checks that the tree covers exactly `1..=n`, that leaves are in order
    /// and that every split equals the first item of its right subtree.
    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        let leaves = self.leaves();
        if leaves.len() != n {
            return Err(ModelError::TreeMismatch(format!(
                "tree has {} leaves but distribution has {} items",
                leaves.len(),
                n
            )));
        }
        if let Some(pos) = leaves.iter().enumerate().position(|(k, &item)| item != k + 1) {
            return Err(ModelError::TreeMismatch(format!(
                "leaf order violated at position {}: found item {}",
                pos + 1,
                leaves[pos]
            )));
        }
        self.check_splits()
    }

    fn check_splits(&self) -> Result<(), ModelError> {
        if let DecisionTree::Node { split, choice, left, right } = self {
            let (first, _) = self.range();
            let (right_first, _) = right.range();
            if *split != right_first || *split <= first {
                return Err(ModelError::TreeMismatch(format!(
                    "split {split} does not start the right subtree (which starts at {right_first})"
                )));
            }
            if *choice == 0 {
                return Err(ModelError::TreeMismatch("choice indices are 1-based".into()));
            }
            left.check_splits()?;
            right.check_splits()?;
        }
        Ok(())
    }

    /// The same shape with every node's static choice set to predict its
    /// heavier child (right on ties).
    pub fn oriented_by_mass(&self, dist: &ItemDistribution) -> DecisionTree {
        match self {
            DecisionTree::Leaf { .. } => self.clone(),
            DecisionTree::Node { split, left, right, .. } => {
                let (first, last) = self.range();
                let lm = dist.range_mass(first, split - 1);
                let rm = dist.range_mass(*split, last);
                let choice = if lm > rm { 2 } else { 1 };
                DecisionTree::node(*split, choice, left.oriented_by_mass(dist), right.oriented_by_mass(dist))
            }
        }
    }

    /// Internal nodes in preorder, with their spans and choices.
    pub fn internal_nodes(&self) -> Vec<(Span, usize)> {
        let mut out = Vec::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes(&self, out: &mut Vec<(Span, usize)>) {
        if let DecisionTree::Node { split, choice, left, right } = self {
            let (first, last) = self.range();
            out.push((Span { first, last, split: *split }, *choice));
            left.collect_nodes(out);
            right.collect_nodes(out);
        }
    }
}

/// Side a static choice predicts: choice 1 charges the misprediction cost
/// on the left, so the right side is predicted; choice 2 is the mirror.
pub fn static_predicted_side(choice: usize) -> Option<Side> {
    match choice {
        1 => Some(Side::Right),
        2 => Some(Side::Left),
        _ => None,
    }
}

/// The heavier child, falling back to the static choice (then right) on ties.
pub fn majority_side(left_mass: &Rational, right_mass: &Rational, choice: usize) -> Side {
    if left_mass > right_mass {
        Side::Left
    } else if right_mass > left_mass {
        Side::Right
    } else {
        static_predicted_side(choice).unwrap_or(Side::Right)
    }
}

/// Three-way search tree over gap boundaries `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SearchTree {
    Gap { index: usize },
    Node { key: usize, choice: usize, left: Box<SearchTree>, right: Box<SearchTree> },
}

impl SearchTree {
    pub fn gap(index: usize) -> Self {
        SearchTree::Gap { index }
    }

    pub fn node(key: usize, choice: usize, left: SearchTree, right: SearchTree) -> Self {
        SearchTree::Node { key, choice, left: Box::new(left), right: Box::new(right) }
    }

    /// Boundary range `(i, j)` covered by this subtree.
    pub fn range(&self) -> (usize, usize) {
        match self {
            SearchTree::Gap { index } => (*index, *index),
            SearchTree::Node { left, right, .. } => (left.range().0, right.range().1),
        }
    }

    pub fn key_count(&self) -> usize {
        match self {
            SearchTree::Gap { .. } => 0,
            SearchTree::Node { left, right, .. } => 1 + left.key_count() + right.key_count(),
        }
    }

    /// Checks in-order layout `gap 0, key 1, gap 1, ..., key n', gap n'`.
    pub fn validate(&self, keys: usize) -> Result<(), ModelError> {
        let mut expected_gap = 0;
        self.check(&mut expected_gap)?;
        if expected_gap != keys + 1 {
            return Err(ModelError::TreeMismatch(format!(
                "search tree has {} keys but distribution has {}",
                expected_gap.saturating_sub(1),
                keys
            )));
        }
        Ok(())
    }

    fn check(&self, next_gap: &mut usize) -> Result<(), ModelError> {
        match self {
            SearchTree::Gap { index } => {
                if *index != *next_gap {
                    return Err(ModelError::TreeMismatch(format!("expected gap {next_gap}, found gap {index}")));
                }
                *next_gap += 1;
                Ok(())
            }
            SearchTree::Node { key, choice, left, right } => {
                left.check(next_gap)?;
                if *key != *next_gap {
                    return Err(ModelError::TreeMismatch(format!("expected key {next_gap}, found key {key}")));
                }
                if *choice == 0 {
                    return Err(ModelError::TreeMismatch("choice indices are 1-based".into()));
                }
                right.check(next_gap)
            }
        }
    }
}
