//! Tree output: canonical JSON, Graphviz DOT, and nested if/else code with
//! branch-bias hints.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dp::SolveResult;
use crate::eval::edge_costs;
use crate::model::{
    format_rational, majority_side, parse_rational, static_predicted_side, to_f64, CostModel, DecisionTree,
    ItemDistribution, ModelError, Rational, SearchDistribution, SearchTree, Side,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("expected {expected} threshold names, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("invalid tree JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumberStyle {
    /// `"p/q"` strings.
    #[default]
    Exact,
    /// Decimal JSON numbers, for reading by humans.
    Float,
}

impl NumberStyle {
    pub fn value(self, r: &Rational) -> Value {
        match self {
            NumberStyle::Exact => Value::String(format_rational(r)),
            NumberStyle::Float => json!(to_f64(r)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HintStyle {
    /// `LIKELY(...)` / `UNLIKELY(...)` wrappers.
    #[default]
    Macro,
    /// `/* likely */` / `/* unlikely */` annotations.
    Comment,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitOptions {
    pub hint_style: HintStyle,
    /// Labels for the comparison values; `threshold_names[k]` separates
    /// item `k + 1` from item `k + 2`. Defaults to `v1, v2, ...` (or
    /// `k1, k2, ...` keys for search trees).
    pub threshold_names: Option<Vec<String>>,
    /// Name of the value being classified.
    pub variable: String,
    pub numbers: NumberStyle,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            hint_style: HintStyle::default(),
            threshold_names: None,
            variable: "x".to_string(),
            numbers: NumberStyle::default(),
        }
    }
}

impl EmitOptions {
    fn thresholds(&self, count: usize, prefix: &str) -> Result<Vec<String>, EmitError> {
        match &self.threshold_names {
            Some(names) if names.len() != count => Err(EmitError::ThresholdCount { expected: count, got: names.len() }),
            Some(names) => Ok(names.clone()),
            None => Ok((1..=count).map(|k| format!("{prefix}{k}")).collect()),
        }
    }
}

/// Trees that have a canonical JSON form.
pub trait TreeJson: Sized {
    fn to_json(&self) -> Value;
    fn from_json(value: &Value) -> Result<Self, EmitError>;
}

fn field(obj: &Map<String, Value>, name: &str) -> Result<usize, EmitError> {
    obj.get(name)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| EmitError::Json(format!("missing or non-integer field {name:?}")))
}

fn child<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, EmitError> {
    obj.get(name).ok_or_else(|| EmitError::Json(format!("missing field {name:?}")))
}

fn node_type(value: &Value) -> Result<(&Map<String, Value>, &str), EmitError> {
    let obj = value.as_object().ok_or_else(|| EmitError::Json("tree node must be an object".into()))?;
    let ty = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| EmitError::Json("tree node needs a string \"type\"".into()))?;
    Ok((obj, ty))
}

impl TreeJson for DecisionTree {
    fn to_json(&self) -> Value {
        match self {
            DecisionTree::Leaf { item } => json!({"type": "leaf", "item": item}),
            DecisionTree::Node { split, choice, left, right } => json!({
                "type": "node",
                "split": split,
                "choice": choice,
                "left": left.to_json(),
                "right": right.to_json(),
            }),
        }
    }

    fn from_json(value: &Value) -> Result<Self, EmitError> {
        let (obj, ty) = node_type(value)?;
        match ty {
            "leaf" => Ok(DecisionTree::leaf(field(obj, "item")?)),
            "node" => Ok(DecisionTree::node(
                field(obj, "split")?,
                field(obj, "choice")?,
                DecisionTree::from_json(child(obj, "left")?)?,
                DecisionTree::from_json(child(obj, "right")?)?,
            )),
            other => Err(EmitError::Json(format!("unknown node type {other:?}"))),
        }
    }
}

impl TreeJson for SearchTree {
    fn to_json(&self) -> Value {
        match self {
            SearchTree::Gap { index } => json!({"type": "gap", "index": index}),
            SearchTree::Node { key, choice, left, right } => json!({
                "type": "node",
                "key": key,
                "choice": choice,
                "left": left.to_json(),
                "right": right.to_json(),
            }),
        }
    }

    fn from_json(value: &Value) -> Result<Self, EmitError> {
        let (obj, ty) = node_type(value)?;
        match ty {
            "gap" => Ok(SearchTree::gap(field(obj, "index")?)),
            "node" => Ok(SearchTree::node(
                field(obj, "key")?,
                field(obj, "choice")?,
                SearchTree::from_json(child(obj, "left")?)?,
                SearchTree::from_json(child(obj, "right")?)?,
            )),
            other => Err(EmitError::Json(format!("unknown node type {other:?}"))),
        }
    }
}

pub fn result_to_json<T: TreeJson>(result: &SolveResult<T>, numbers: NumberStyle) -> Value {
    json!({
        "expected_cost": numbers.value(&result.normalized_cost),
        "total_cost": numbers.value(&result.total_cost),
        "total_mass": numbers.value(&result.total_mass),
        "tree": result.tree.to_json(),
    })
}

/// Canonical compact JSON (sorted keys, exact rationals as strings).
pub fn emit_json<T: TreeJson>(result: &SolveResult<T>) -> String {
    result_to_json(result, NumberStyle::Exact).to_string()
}

/// Inverse of [`emit_json`].
pub fn parse_result_json<T: TreeJson>(text: &str) -> Result<SolveResult<T>, EmitError> {
    let value: Value = serde_json::from_str(text).map_err(|e| EmitError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| EmitError::Json("result must be an object".into()))?;
    let rational = |name: &str| -> Result<Rational, EmitError> {
        let v = child(obj, name)?;
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(EmitError::Json(format!("field {name:?} is not a number"))),
        };
        Ok(parse_rational(&text)?)
    };
    let tree = T::from_json(child(obj, "tree")?)?;
    Ok(SolveResult::new(tree, rational("total_cost")?, rational("total_mass")?))
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz description of a decision tree. Internal nodes are `n_i_j`,
/// leaves `n_i_i`. Edge labels carry the cost an item pays on that edge
/// (exact for static models, stationary expectation for dynamic ones);
/// table models label edges with the node's cost function instead.
pub fn emit_dot(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    model: &CostModel,
    options: &EmitOptions,
) -> Result<String, EmitError> {
    tree.validate(dist.len())?;
    let names = options.thresholds(dist.len() - 1, "v")?;
    let mut out = String::new();
    out.push_str("digraph decision_tree {\n");
    out.push_str("    node [fontname=\"monospace\"];\n");
    dot_node(tree, dist, model, options, &names, &mut out)?;
    out.push_str("}\n");
    Ok(out)
}

fn number_text(r: &Rational, style: NumberStyle) -> String {
    match style {
        NumberStyle::Exact => format_rational(r),
        NumberStyle::Float => format!("{}", to_f64(r)),
    }
}

fn dot_node(
    tree: &DecisionTree,
    dist: &ItemDistribution,
    model: &CostModel,
    options: &EmitOptions,
    names: &[String],
    out: &mut String,
) -> Result<String, EmitError> {
    let (first, last) = tree.range();
    let id = format!("n_{first}_{last}");
    match tree {
        DecisionTree::Leaf { item } => {
            let weight = number_text(dist.weight(*item), options.numbers);
            writeln!(out, "    {id} [shape=box, label=\"item {item}\\nweight {weight}\"];").unwrap();
        }
        DecisionTree::Node { split, choice, left, right } => {
            let threshold = dot_escape(&names[split - 2]);
            writeln!(out, "    {id} [shape=ellipse, label=\"{} < {threshold}\"];", options.variable).unwrap();
            let lm = dist.range_mass(first, split - 1);
            let rm = dist.range_mass(*split, last);
            let edges = edge_costs(model, *choice, &lm, &rm)?;
            let predicted = match model {
                CostModel::Static(_) => static_predicted_side(*choice),
                _ => Some(majority_side(&lm, &rm, *choice)),
            };
            for (side, sub) in [(Side::Left, left), (Side::Right, right)] {
                let child_id = dot_node(sub, dist, model, options, names, out)?;
                let mut attrs = Vec::new();
                match &edges {
                    Some((l, r)) => {
                        let cost = if side == Side::Left { l } else { r };
                        attrs.push(format!("label=\"{}\"", number_text(cost, options.numbers)));
                    }
                    None => attrs.push(format!("label=\"{}\"", dot_escape(&model.choice_name(*choice)))),
                }
                let role = if predicted == Some(side) { "predicted" } else { "mispredicted" };
                attrs.push(format!("tooltip=\"{}\"", if side == Side::Left { "left" } else { "right" }));
                attrs.push(format!("comment=\"{role}\""));
                if predicted != Some(side) {
                    attrs.push("style=dashed".to_string());
                }
                writeln!(out, "    {id} -> {child_id} [{}];", attrs.join(", ")).unwrap();
            }
        }
    }
    Ok(id)
}

/// Graphviz description of a three-way search tree. Internal nodes are
/// `n_i_j` over gap boundaries, gaps `g_i`, and key hits `h_s`.
pub fn emit_search_dot(
    tree: &SearchTree,
    sdist: &SearchDistribution,
    model: &CostModel,
    equality_cost: &Rational,
    options: &EmitOptions,
) -> Result<String, EmitError> {
    tree.validate(sdist.keys())?;
    let names = options.thresholds(sdist.keys(), "k")?;
    let mut out = String::from("digraph search_tree {\n    node [fontname=\"monospace\"];\n");
    search_dot_node(tree, sdist, model, equality_cost, options, &names, &mut out)?;
    out.push_str("}\n");
    Ok(out)
}

fn search_dot_node(
    tree: &SearchTree,
    sdist: &SearchDistribution,
    model: &CostModel,
    e: &Rational,
    options: &EmitOptions,
    names: &[String],
    out: &mut String,
) -> Result<String, EmitError> {
    match tree {
        SearchTree::Gap { index } => {
            let id = format!("g_{index}");
            let mass = number_text(&sdist.alpha()[*index], options.numbers);
            writeln!(out, "    {id} [shape=box, style=rounded, label=\"gap {index}\\nalpha {mass}\"];").unwrap();
            Ok(id)
        }
        SearchTree::Node { key, choice, left, right } => {
            let (first, last) = tree.range();
            let id = format!("n_{first}_{last}");
            let name = dot_escape(&names[key - 1]);
            writeln!(out, "    {id} [shape=ellipse, label=\"{} ? {name}\"];", options.variable).unwrap();
            let hit = format!("h_{key}");
            let beta = number_text(sdist.key_mass(*key), options.numbers);
            writeln!(out, "    {hit} [shape=box, label=\"key {key}\\nbeta {beta}\"];").unwrap();
            writeln!(out, "    {id} -> {hit} [label=\"{}\", tooltip=\"equal\"];", number_text(e, options.numbers))
                .unwrap();
            let lm = sdist.range_mass(first, key - 1);
            let rm = sdist.range_mass(*key, last);
            let edges = edge_costs(model, *choice, &lm, &rm)?;
            for (side, sub) in [(Side::Left, left), (Side::Right, right)] {
                let child_id = search_dot_node(sub, sdist, model, e, options, names, out)?;
                let label = match &edges {
                    Some((l, r)) => number_text(if side == Side::Left { l } else { r }, options.numbers),
                    None => model.choice_name(*choice),
                };
                let dir = if side == Side::Left { "less" } else { "greater" };
                writeln!(out, "    {id} -> {child_id} [label=\"{}\", tooltip=\"{dir}\"];", dot_escape(&label)).unwrap();
            }
            Ok(id)
        }
    }
}

/// Where emitted code takes each branch's bias from.
#[derive(Debug, Clone, Copy)]
pub enum Bias<'a> {
    /// The node's recorded static choice.
    Recorded,
    /// The heavier child under this distribution (used for dynamically
    /// predicted trees, whose choices carry no orientation).
    Majority(&'a ItemDistribution),
}

fn hinted(cond: &str, likely: bool, style: HintStyle) -> (String, &'static str) {
    match style {
        HintStyle::Macro => (format!("{}({cond})", if likely { "LIKELY" } else { "UNLIKELY" }), ""),
        HintStyle::Comment => (cond.to_string(), if likely { " /* likely */" } else { " /* unlikely */" }),
        HintStyle::None => (cond.to_string(), ""),
    }
}

/// Nested if/else code for a decision tree. Each condition tests the
/// predicate of the less likely child, so the `else` (fall-through) arm is
/// the predicted one. Items are returned by index.
pub fn emit_code(tree: &DecisionTree, options: &EmitOptions, bias: Bias<'_>) -> Result<String, EmitError> {
    let (first, last) = tree.range();
    if first != 1 {
        return Err(ModelError::TreeMismatch("tree must start at item 1".into()).into());
    }
    if let Bias::Majority(d) = bias {
        tree.validate(d.len())?;
    }
    let names = options.thresholds(last - 1, "v")?;
    let mut out = String::new();
    code_node(tree, options, bias, &names, 0, &mut out);
    Ok(out)
}

fn code_node(
    tree: &DecisionTree,
    options: &EmitOptions,
    bias: Bias<'_>,
    names: &[String],
    depth: usize,
    out: &mut String,
) {
    let pad = "    ".repeat(depth);
    match tree {
        DecisionTree::Leaf { item } => {
            writeln!(out, "{pad}return {item};").unwrap();
        }
        DecisionTree::Node { split, choice, left, right } => {
            let (first, last) = tree.range();
            let predicted = match bias {
                Bias::Recorded => static_predicted_side(*choice).unwrap_or(Side::Right),
                Bias::Majority(d) => {
                    majority_side(&d.range_mass(first, split - 1), &d.range_mass(*split, last), *choice)
                }
            };
            let v = &options.variable;
            let threshold = &names[split - 2];
            // Branch on the unlikely predicate; fall through to the likely side.
            let (cond, taken, fallthrough) = match predicted {
                Side::Left => (format!("{v} >= {threshold}"), right, left),
                Side::Right => (format!("{v} < {threshold}"), left, right),
            };
            let (cond, note) = hinted(&cond, false, options.hint_style);
            writeln!(out, "{pad}if ({cond}) {{{note}").unwrap();
            code_node(taken, options, bias, names, depth + 1, out);
            let else_note = if options.hint_style == HintStyle::Comment { " /* likely */" } else { "" };
            writeln!(out, "{pad}}} else {{{else_note}").unwrap();
            code_node(fallthrough, options, bias, names, depth + 1, out);
            writeln!(out, "{pad}}}").unwrap();
        }
    }
}

/// Code for a three-way search tree: an equality test against the node's
/// key, then a two-way test oriented like [`emit_code`]. Hits return
/// `HIT(s)`, misses `MISS(i)` for gap `i`.
pub fn emit_search_code(tree: &SearchTree, options: &EmitOptions) -> Result<String, EmitError> {
    let (_, last) = tree.range();
    tree.validate(last)?;
    let names = options.thresholds(last, "k")?;
    let mut out = String::new();
    search_code_node(tree, options, &names, 0, &mut out);
    Ok(out)
}

fn search_code_node(tree: &SearchTree, options: &EmitOptions, names: &[String], depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    match tree {
        SearchTree::Gap { index } => writeln!(out, "{pad}return MISS({index});").unwrap(),
        SearchTree::Node { key, choice, left, right } => {
            let v = &options.variable;
            let k = &names[key - 1];
            writeln!(out, "{pad}if ({v} == {k}) {{").unwrap();
            writeln!(out, "{pad}    return HIT({key});").unwrap();
            writeln!(out, "{pad}}}").unwrap();
            let (cond, taken, fallthrough) = match static_predicted_side(*choice).unwrap_or(Side::Right) {
                Side::Left => (format!("{v} > {k}"), right, left),
                Side::Right => (format!("{v} < {k}"), left, right),
            };
            let (cond, note) = hinted(&cond, false, options.hint_style);
            writeln!(out, "{pad}if ({cond}) {{{note}").unwrap();
            search_code_node(taken, options, names, depth + 1, out);
            let else_note = if options.hint_style == HintStyle::Comment { " /* likely */" } else { "" };
            writeln!(out, "{pad}}} else {{{else_note}").unwrap();
            search_code_node(fallthrough, options, names, depth + 1, out);
            writeln!(out, "{pad}}}").unwrap();
        }
    }
}
