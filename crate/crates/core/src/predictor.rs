//! Branch predictor models.
//!
//! A predictor attached to a single tree node sees an i.i.d. stream of
//! outcomes, so its state is a finite Markov chain. Throughout this module
//! `p1` is the probability of the *taken* outcome, and trees are laid out so
//! that the taken side is the less likely one; for the symmetric built-in
//! automata the distinction does not matter.

use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{format_rational, int, to_f64, Rational, StaticCostPair};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictorError {
    #[error("probability {value} outside [{low}, {high}]")]
    ProbabilityOutOfRange { value: String, low: &'static str, high: &'static str },
    #[error("malformed automaton: {0}")]
    MalformedAutomaton(String),
    #[error("chain has {classes} recurrent classes; stationary distribution is not unique")]
    Reducible { classes: usize },
    #[error("branch masses must be nonnegative")]
    NegativeMass,
    #[error("p_min must not exceed p_max")]
    MassOrder,
    #[error("unknown predictor {0:?} (expected A2, A3 or static)")]
    UnknownPredictor(String),
    #[error("curve needs at least two points")]
    TooFewPoints,
}

/// What a predictor state guesses, and what a branch actually does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "N")]
    Untaken,
    #[serde(rename = "T")]
    Taken,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Untaken => 0,
            Direction::Taken => 1,
        }
    }
}

/// Moore machine: each state carries a prediction, outcomes drive transitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredictorAutomaton {
    predict: Vec<Direction>,
    // next[state] = [on untaken, on taken]
    next: Vec<[usize; 2]>,
    initial: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AutomatonFile {
    states: usize,
    predict: Vec<Direction>,
    next: Vec<[usize; 2]>,
    #[serde(default = "default_initial")]
    initial: usize,
}

fn default_initial() -> usize {
    1
}

impl PredictorAutomaton {
    pub fn new(predict: Vec<Direction>, next: Vec<[usize; 2]>, initial: usize) -> Result<Self, PredictorError> {
        let n = predict.len();
        if n == 0 {
            return Err(PredictorError::MalformedAutomaton("no states".into()));
        }
        if next.len() != n {
            return Err(PredictorError::MalformedAutomaton(format!("{} states but {} transition rows", n, next.len())));
        }
        if let Some((s, _)) = next.iter().enumerate().find(|(_, row)| row.iter().any(|&t| t >= n)) {
            return Err(PredictorError::MalformedAutomaton(format!("state {s} transitions out of range")));
        }
        if initial >= n {
            return Err(PredictorError::MalformedAutomaton(format!("initial state {initial} out of range")));
        }
        Ok(PredictorAutomaton { predict, next, initial })
    }

    /// Two-bit saturating up-down counter.
    pub fn a2() -> Self {
        use Direction::*;
        PredictorAutomaton {
            predict: vec![Untaken, Untaken, Taken, Taken],
            next: vec![[0, 1], [0, 2], [1, 3], [2, 3]],
            initial: 1,
        }
    }

    /// Two-bit chain whose weak states jump straight to the opposite strong
    /// state on a misprediction.
    pub fn a3() -> Self {
        use Direction::*;
        PredictorAutomaton {
            predict: vec![Untaken, Untaken, Taken, Taken],
            next: vec![[0, 1], [0, 3], [0, 3], [2, 3]],
            initial: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let file: AutomatonFile =
            serde_json::from_str(text).map_err(|e| PredictorError::MalformedAutomaton(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self, PredictorError> {
        let file: AutomatonFile =
            serde_json::from_value(value.clone()).map_err(|e| PredictorError::MalformedAutomaton(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: AutomatonFile) -> Result<Self, PredictorError> {
        if file.states != file.predict.len() {
            return Err(PredictorError::MalformedAutomaton(format!(
                "declared {} states but {} predictions",
                file.states,
                file.predict.len()
            )));
        }
        Self::new(file.predict, file.next, file.initial)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(AutomatonFile {
            states: self.state_count(),
            predict: self.predict.clone(),
            next: self.next.clone(),
            initial: self.initial,
        })
        .expect("automaton serializes")
    }

    pub fn state_count(&self) -> usize {
        self.predict.len()
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn with_initial_state(mut self, initial: usize) -> Result<Self, PredictorError> {
        if initial >= self.state_count() {
            return Err(PredictorError::MalformedAutomaton(format!("initial state {initial} out of range")));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn predict(&self, state: usize) -> Direction {
        self.predict[state]
    }

    pub fn next(&self, state: usize, outcome: Direction) -> usize {
        self.next[state][outcome.index()]
    }

    /// Number of closed communicating classes when only outcomes with
    /// positive probability are followed.
    fn recurrent_classes(&self, untaken: bool, taken: bool) -> usize {
        let n = self.state_count();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack = vec![s];
            row[s] = true;
            while let Some(u) = stack.pop() {
                for (dir, allowed) in [(Direction::Untaken, untaken), (Direction::Taken, taken)] {
                    let v = self.next(u, dir);
                    if allowed && !row[v] {
                        row[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        // A state is recurrent iff everything it reaches reaches back.
        let recurrent: Vec<usize> = (0..n).filter(|&s| (0..n).all(|t| !reach[s][t] || reach[t][s])).collect();
        let mut seen = vec![false; n];
        let mut classes = 0;
        for &s in &recurrent {
            if !seen[s] {
                classes += 1;
                for t in 0..n {
                    if reach[s][t] {
                        seen[t] = true;
                    }
                }
            }
        }
        classes
    }
}

/// The prediction scheme attached to each branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predictor {
    /// Always predict the majority outcome.
    Static,
    A2,
    A3,
    Custom(Arc<PredictorAutomaton>),
}

impl Predictor {
    pub fn from_name(name: &str) -> Result<Self, PredictorError> {
        match name.to_ascii_lowercase().as_str() {
            "a2" => Ok(Predictor::A2),
            "a3" => Ok(Predictor::A3),
            "static" => Ok(Predictor::Static),
            _ => Err(PredictorError::UnknownPredictor(name.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Predictor::Static => "static",
            Predictor::A2 => "A2",
            Predictor::A3 => "A3",
            Predictor::Custom(_) => "custom",
        }
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        match self {
            Predictor::Custom(a) => match a.recurrent_classes(true, true) {
                1 => Ok(()),
                classes => Err(PredictorError::Reducible { classes }),
            },
            _ => Ok(()),
        }
    }

    /// The automaton that realizes this predictor, if it is adaptive.
    pub fn automaton(&self) -> Option<PredictorAutomaton> {
        match self {
            Predictor::Static => None,
            Predictor::A2 => Some(PredictorAutomaton::a2()),
            Predictor::A3 => Some(PredictorAutomaton::a3()),
            Predictor::Custom(a) => Some((**a).clone()),
        }
    }

    /// Stationary misprediction rate for a branch whose less likely outcome
    /// has probability `p1`.
    pub fn rate(&self, p1: &Rational) -> Result<Rational, PredictorError> {
        match self {
            Predictor::Static => static_rate(p1),
            Predictor::A2 => rate_a2(p1),
            Predictor::A3 => rate_a3(p1),
            Predictor::Custom(a) => stationary_rate(a, p1),
        }
    }

    pub fn rate_f64(&self, p1: f64) -> Result<f64, PredictorError> {
        match self {
            Predictor::Static => static_rate_f64(p1),
            Predictor::A2 => rate_a2_f64(p1),
            Predictor::A3 => rate_a3_f64(p1),
            Predictor::Custom(a) => stationary_rate_f64(a, p1),
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_unit<T: Signed + PartialOrd + fmt::Display + Clone>(
    p: &T,
    high: T,
    high_label: &'static str,
) -> Result<(), PredictorError> {
    if p.is_negative() || *p > high {
        return Err(PredictorError::ProbabilityOutOfRange { value: p.to_string(), low: "0", high: high_label });
    }
    Ok(())
}

fn half() -> Rational {
    Rational::new(1.into(), 2.into())
}

/// Static majority prediction mispredicts exactly when the minority occurs.
pub fn static_rate(p1: &Rational) -> Result<Rational, PredictorError> {
    check_unit(p1, half(), "1/2")?;
    Ok(p1.clone())
}

pub fn static_rate_f64(p1: f64) -> Result<f64, PredictorError> {
    if !(0.0..=0.5).contains(&p1) {
        return Err(PredictorError::ProbabilityOutOfRange { value: p1.to_string(), low: "0", high: "1/2" });
    }
    Ok(p1)
}

/// `(p - p^2) / (1 - 2p + 2p^2)`
pub fn rate_a2(p1: &Rational) -> Result<Rational, PredictorError> {
    check_unit(p1, Rational::one(), "1")?;
    let p2 = p1 * p1;
    Ok((p1 - &p2) / (Rational::one() - int(2) * p1 + int(2) * p2))
}

pub fn rate_a2_f64(p1: f64) -> Result<f64, PredictorError> {
    check_unit_f64(p1)?;
    let p2 = p1 * p1;
    Ok((p1 - p2) / (1.0 - 2.0 * p1 + 2.0 * p2))
}

/// `(p + p^2 - 4p^3 + 2p^4) / (1 - p + p^2)`
pub fn rate_a3(p1: &Rational) -> Result<Rational, PredictorError> {
    check_unit(p1, Rational::one(), "1")?;
    let p2 = p1 * p1;
    let p3 = &p2 * p1;
    let p4 = &p3 * p1;
    Ok((p1 + &p2 - int(4) * p3 + int(2) * p4) / (Rational::one() - p1 + p2))
}

pub fn rate_a3_f64(p1: f64) -> Result<f64, PredictorError> {
    check_unit_f64(p1)?;
    let p2 = p1 * p1;
    Ok((p1 + p2 - 4.0 * p2 * p1 + 2.0 * p2 * p2) / (1.0 - p1 + p2))
}

fn check_unit_f64(p1: f64) -> Result<(), PredictorError> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(PredictorError::ProbabilityOutOfRange { value: p1.to_string(), low: "0", high: "1" });
    }
    Ok(())
}

/// Stationary state distribution of the chain induced by taken-probability
/// `p1`. The chain must have a single recurrent class (transient states are
/// allowed and receive zero mass).
pub fn stationary_distribution(automaton: &PredictorAutomaton, p1: &Rational) -> Result<Vec<Rational>, PredictorError> {
    check_unit(p1, Rational::one(), "1")?;
    stationary_generic(automaton, p1.clone())
}

pub fn stationary_distribution_f64(automaton: &PredictorAutomaton, p1: f64) -> Result<Vec<f64>, PredictorError> {
    check_unit_f64(p1)?;
    stationary_generic(automaton, p1)
}

/// `sum_s pi(s) * P[outcome != predict(s)]`, solved exactly.
pub fn stationary_rate(automaton: &PredictorAutomaton, p1: &Rational) -> Result<Rational, PredictorError> {
    let pi = stationary_distribution(automaton, p1)?;
    Ok(mispredict_mass(automaton, &pi, p1.clone()))
}

pub fn stationary_rate_f64(automaton: &PredictorAutomaton, p1: f64) -> Result<f64, PredictorError> {
    let pi = stationary_distribution_f64(automaton, p1)?;
    Ok(mispredict_mass(automaton, &pi, p1))
}

/// Stationary probability that the automaton predicts taken.
pub fn stationary_taken_prediction(automaton: &PredictorAutomaton, p1: &Rational) -> Result<Rational, PredictorError> {
    let pi = stationary_distribution(automaton, p1)?;
    Ok(pi
        .iter()
        .enumerate()
        .filter(|(s, _)| automaton.predict(*s) == Direction::Taken)
        .fold(Rational::zero(), |acc, (_, w)| acc + w))
}

fn mispredict_mass<T: Scalar>(automaton: &PredictorAutomaton, pi: &[T], p_taken: T) -> T {
    let p_untaken = T::one() - p_taken.clone();
    pi.iter().enumerate().fold(T::zero(), |acc, (s, w)| {
        let miss = match automaton.predict(s) {
            Direction::Untaken => p_taken.clone(),
            Direction::Taken => p_untaken.clone(),
        };
        acc + w.clone() * miss
    })
}

trait Scalar: Clone + Signed + PartialOrd {}
impl<T: Clone + Signed + PartialOrd> Scalar for T {}

#[allow(clippy::needless_range_loop)]
fn stationary_generic<T: Scalar>(automaton: &PredictorAutomaton, p_taken: T) -> Result<Vec<T>, PredictorError> {
    let n = automaton.state_count();
    let p_untaken = T::one() - p_taken.clone();
    let classes = automaton.recurrent_classes(!p_untaken.is_zero(), !p_taken.is_zero());
    if classes != 1 {
        return Err(PredictorError::Reducible { classes });
    }

    // Rows 0..n-1: balance equations sum_s pi_s P(s, t) - pi_t = 0.
    // Last row: normalization.
    let mut a = vec![vec![T::zero(); n]; n];
    let mut b = vec![T::zero(); n];
    for s in 0..n {
        for (dir, prob) in [(Direction::Untaken, &p_untaken), (Direction::Taken, &p_taken)] {
            let t = automaton.next(s, dir);
            if t < n - 1 {
                a[t][s] = a[t][s].clone() + prob.clone();
            }
        }
        if s < n - 1 {
            a[s][s] = a[s][s].clone() - T::one();
        }
    }
    for cell in a[n - 1].iter_mut() {
        *cell = T::one();
    }
    b[n - 1] = T::one();
    solve_linear(a, b).ok_or(PredictorError::Reducible { classes: 0 })
}

/// Gaussian elimination with largest-magnitude pivoting.
#[allow(clippy::needless_range_loop)]
fn solve_linear<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[r][col].is_zero())
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / a[col][col].clone();
            for k in col..n {
                let delta = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - delta;
            }
            let delta = factor * b[col].clone();
            b[row] = b[row].clone() - delta;
        }
    }
    Some((0..n).map(|i| b[i].clone() / a[i][i].clone()).collect())
}

/// Expected cost of one adaptively predicted branch whose children carry
/// masses `p_min <= p_max`. Zero when both masses are zero.
pub fn branch_cost_dynamic(
    pair: &StaticCostPair,
    predictor: &Predictor,
    p_min: &Rational,
    p_max: &Rational,
) -> Result<Rational, PredictorError> {
    if p_min.is_negative() || p_max.is_negative() {
        return Err(PredictorError::NegativeMass);
    }
    if p_min > p_max {
        return Err(PredictorError::MassOrder);
    }
    let total = p_min + p_max;
    if total.is_zero() {
        return Ok(Rational::zero());
    }
    let f = predictor.rate(&(p_min / &total))?;
    Ok(&total * (pair.mispredict() * &f + pair.predict() * (Rational::one() - f)))
}

/// One sample of a misprediction-rate curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MispredictCurvePoint {
    #[serde(serialize_with = "ser_rational")]
    pub p1: Rational,
    pub rate: f64,
}

fn ser_rational<S: serde::Serializer>(v: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(v))
}

/// `points` evenly spaced samples of the rate over `p1` in `[0, 1/2]`,
/// computed exactly and rounded once.
pub fn curve(predictor: &Predictor, points: usize) -> Result<Vec<MispredictCurvePoint>, PredictorError> {
    if points < 2 {
        return Err(PredictorError::TooFewPoints);
    }
    let denom = 2 * (points as i64 - 1);
    (0..points as i64)
        .map(|k| {
            let p1 = Rational::new(k.into(), denom.into());
            let rate = to_f64(&predictor.rate(&p1)?);
            Ok(MispredictCurvePoint { p1, rate })
        })
        .collect()
}

/// Largest ratio of `predictor`'s rate to the static rate over
/// `p1 in (0, 1/2]`, found by a grid scan refined with golden-section search.
/// Returns `(argmax, max)`.
pub fn worst_case_ratio(predictor: &Predictor) -> Result<(f64, f64), PredictorError> {
    let ratio = |p: f64| -> Result<f64, PredictorError> { Ok(predictor.rate_f64(p)? / p) };
    let grid = 2000;
    let mut best = (0.5, ratio(0.5)?);
    for k in 1..grid {
        let p = 0.5 * k as f64 / grid as f64;
        let r = ratio(p)?;
        if r > best.1 {
            best = (p, r);
        }
    }
    let step = 0.5 / grid as f64;
    let (mut lo, mut hi) = ((best.0 - step).max(1e-12), (best.0 + step).min(0.5));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if ratio(m1)? < ratio(m2)? {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let p = 0.5 * (lo + hi);
    let r = ratio(p)?;
    Ok(if r >= best.1 { (p, r) } else { best })
}
