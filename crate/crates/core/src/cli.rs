//! Command-line front end.
//!
//! Exit status is 0 on success, 2 for invalid input (bad arguments or
//! files), and 1 for internal failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::dp::{
    solve_branch_optimal, solve_generalized, solve_ordered_edge, solve_search_tree_general, solve_uniform_cost,
    SolveResult,
};
use crate::emit::{
    emit_code, emit_dot, emit_search_code, emit_search_dot, result_to_json, Bias, EmitOptions, HintStyle, NumberStyle,
    TreeJson,
};
use crate::eval::{expected_cost, expected_search_cost, CostBreakdown};
use crate::model::{
    format_rational, to_f64, BranchCost, CostModel, DecisionTree, DynamicBranchCost, ItemDistribution,
    LinearBranchCost, Rational, RationalValue, SearchDistribution, SearchTree, StaticCostPair,
};
use crate::predictor::{curve, Predictor, PredictorAutomaton};
use crate::sim::{simulate_replicated, SimConfig};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Internal(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "branchtree", version, about = "Optimal decision trees for branch-predicting processors")]
struct Cli {
    /// Render rationals as decimal numbers instead of "p/q" strings.
    #[arg(long, global = true)]
    float: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an optimal tree.
    Solve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        solver: Option<SolverKind>,
    },
    /// Evaluate a given tree.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tree: PathBuf,
    },
    /// Monte Carlo run of a tree with one predictor per branch.
    Simulate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        iterations: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        warmup: u64,
        /// A2, A3, static, or a path to an automaton JSON file.
        #[arg(long)]
        automaton: Option<String>,
        #[arg(long, default_value_t = 1)]
        replications: u64,
        #[arg(long)]
        initial_state: Option<usize>,
    },
    /// Normalized costs of the uniform-cost, ordered-edge, branch-optimal
    /// and dynamically predicted optimal trees.
    Compare {
        #[arg(long)]
        input: PathBuf,
    },
    /// CSV of misprediction rate against the minority probability.
    Curve {
        #[arg(long)]
        automaton: String,
        #[arg(long, default_value_t = 51)]
        points: usize,
    },
    /// Render a tree as JSON, DOT or C-like code.
    Emit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, value_enum, default_value_t = Hints::Macro)]
        hints: Hints,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverKind {
    Branch,
    Ordered,
    General,
    Search,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
    C,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Hints {
    Macro,
    Comment,
    None,
}

impl From<Hints> for HintStyle {
    fn from(h: Hints) -> Self {
        match h {
            Hints::Macro => HintStyle::Macro,
            Hints::Comment => HintStyle::Comment,
            Hints::None => HintStyle::None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    weights: Option<Vec<RationalValue>>,
    alpha: Option<Vec<RationalValue>>,
    beta: Option<Vec<RationalValue>>,
    cost_model: CostModelFile,
    thresholds: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostModelFile {
    #[serde(rename = "type")]
    kind: String,
    c_mispredict: Option<RationalValue>,
    c_predict: Option<RationalValue>,
    automaton: Option<Value>,
    e: Option<RationalValue>,
    functions: Option<Vec<TableEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    name: Option<String>,
    left: Option<RationalValue>,
    right: Option<RationalValue>,
    automaton: Option<Value>,
    c_mispredict: Option<RationalValue>,
    c_predict: Option<RationalValue>,
}

enum Domain {
    Items(ItemDistribution),
    Search { sdist: SearchDistribution, equality_cost: Rational },
}

struct Problem {
    domain: Domain,
    model: CostModel,
    /// The static pair behind a static or dynamic model.
    pair: Option<StaticCostPair>,
    thresholds: Option<Vec<String>>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_json(path: &Path) -> CliResult<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn parse_predictor(value: &Value, base: &Path) -> CliResult<Predictor> {
    match value {
        Value::String(name) => predictor_from_arg(name, base),
        other => Ok(Predictor::Custom(Arc::new(PredictorAutomaton::from_value(other).map_err(invalid)?))),
    }
}

fn predictor_from_arg(name: &str, base: &Path) -> CliResult<Predictor> {
    match Predictor::from_name(name) {
        Ok(p) => Ok(p),
        Err(e) => {
            let path = base.join(name);
            if path.is_file() {
                let a = PredictorAutomaton::from_json(&read(&path)?).map_err(invalid)?;
                Ok(Predictor::Custom(Arc::new(a)))
            } else {
                Err(invalid(e))
            }
        }
    }
}

fn pair_from(c1: &Option<RationalValue>, c2: &Option<RationalValue>) -> CliResult<StaticCostPair> {
    match (c1, c2) {
        (Some(a), Some(b)) => StaticCostPair::new(a.0.clone(), b.0.clone()).map_err(invalid),
        _ => Err(invalid("cost model needs both c_mispredict and c_predict")),
    }
}

fn load_problem(path: &Path) -> CliResult<Problem> {
    let text = read(path)?;
    let file: ProblemFile =
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cm = &file.cost_model;

    let (model, pair) = match cm.kind.as_str() {
        "static" => {
            let pair = pair_from(&cm.c_mispredict, &cm.c_predict)?;
            (CostModel::Static(pair.clone()), Some(pair))
        }
        "dynamic" => {
            let pair = pair_from(&cm.c_mispredict, &cm.c_predict)?;
            let predictor = match &cm.automaton {
                Some(v) => parse_predictor(v, base)?,
                None => return Err(invalid("dynamic cost model needs an automaton")),
            };
            (CostModel::dynamic(predictor, pair.clone()), Some(pair))
        }
        "table" => {
            let entries = cm.functions.as_ref().ok_or_else(|| invalid("table cost model needs functions"))?;
            let mut fns: Vec<Arc<dyn BranchCost>> = Vec::with_capacity(entries.len());
            for (k, entry) in entries.iter().enumerate() {
                let name = entry.name.clone().unwrap_or_else(|| format!("C{}", k + 1));
                if let Some(a) = &entry.automaton {
                    let pair = pair_from(&entry.c_mispredict, &entry.c_predict)?;
                    fns.push(Arc::new(DynamicBranchCost { name, predictor: parse_predictor(a, base)?, pair }));
                } else {
                    let (Some(left), Some(right)) = (&entry.left, &entry.right) else {
                        return Err(invalid(format!("table entry {} needs left and right coefficients", k + 1)));
                    };
                    if left.0 < Rational::from_integer(0.into()) || right.0 < Rational::from_integer(0.into()) {
                        return Err(invalid(format!("table entry {} has a negative coefficient", k + 1)));
                    }
                    fns.push(Arc::new(LinearBranchCost { name, left: left.0.clone(), right: right.0.clone() }));
                }
            }
            (CostModel::Table(fns), None)
        }
        other => return Err(invalid(format!("unknown cost model type {other:?}"))),
    };
    model.validate().map_err(invalid)?;

    let domain = match (&file.weights, &file.alpha, &file.beta) {
        (Some(w), None, None) => {
            Domain::Items(ItemDistribution::new(w.iter().map(|r| r.0.clone()).collect()).map_err(invalid)?)
        }
        (None, Some(a), Some(b)) => {
            let sdist = SearchDistribution::new(
                a.iter().map(|r| r.0.clone()).collect(),
                b.iter().map(|r| r.0.clone()).collect(),
            )
            .map_err(invalid)?;
            let equality_cost =
                cm.e.as_ref()
                    .map(|e| e.0.clone())
                    .ok_or_else(|| invalid("search problems need an equality cost \"e\" in cost_model"))?;
            Domain::Search { sdist, equality_cost }
        }
        _ => return Err(invalid("problem needs exactly one of \"weights\" or \"alpha\"+\"beta\"")),
    };

    Ok(Problem { domain, model, pair, thresholds: file.thresholds })
}

fn load_tree<T: TreeJson>(path: &Path) -> CliResult<T> {
    let value = parse_json(path)?;
    let tree_value = value.get("tree").unwrap_or(&value);
    T::from_json(tree_value).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn numbers(float: bool) -> NumberStyle {
    if float {
        NumberStyle::Float
    } else {
        NumberStyle::Exact
    }
}

fn model_name(model: &CostModel) -> String {
    match model {
        CostModel::Static(_) => "static".into(),
        CostModel::Dynamic { predictor, .. } => format!("dynamic-{}", predictor.name()),
        CostModel::Table(fns) => format!("table[{}]", fns.len()),
    }
}

fn cmd_solve(problem: &Problem, solver: Option<SolverKind>, style: NumberStyle) -> CliResult<Value> {
    let need_pair = || match &problem.model {
        CostModel::Static(p) => Ok(p.clone()),
        _ => Err(invalid("this solver needs a static cost model")),
    };
    match &problem.domain {
        Domain::Items(dist) => {
            let solver = solver.unwrap_or(match problem.model {
                CostModel::Static(_) => SolverKind::Branch,
                _ => SolverKind::General,
            });
            let (name, res) = match solver {
                SolverKind::Branch => ("branch", solve_branch_optimal(dist, &need_pair()?)),
                SolverKind::Ordered => ("ordered", solve_ordered_edge(dist, &need_pair()?)),
                SolverKind::Uniform => ("uniform", solve_uniform_cost(dist)),
                SolverKind::General => ("general", solve_generalized(dist, &problem.model).map_err(invalid)?),
                SolverKind::Search => return Err(invalid("the search solver needs \"alpha\" and \"beta\"")),
            };
            let mut out = result_to_json(&res, style);
            out["solver"] = json!(name);
            out["model"] = json!(model_name(&problem.model));
            Ok(out)
        }
        Domain::Search { sdist, equality_cost } => {
            if !matches!(solver, None | Some(SolverKind::Search)) {
                return Err(invalid("search problems only support --solver search"));
            }
            let res = solve_search_tree_general(sdist, &problem.model, equality_cost).map_err(invalid)?;
            let mut out = result_to_json(&res, style);
            out["solver"] = json!("search");
            out["model"] = json!(model_name(&problem.model));
            Ok(out)
        }
    }
}

fn breakdown_json(b: &CostBreakdown, style: NumberStyle) -> Value {
    let per_item: Vec<Value> = b
        .per_item
        .iter()
        .map(|it| {
            let mut v = json!({"item": it.item, "depth": it.depth});
            if let Some(word) = &it.word {
                let codes: String = word
                    .0
                    .iter()
                    .map(|o| match o {
                        crate::model::Outcome::Mispredicted => '1',
                        crate::model::Outcome::Predicted => '2',
                    })
                    .collect();
                v["word"] = json!(codes);
            }
            if let Some(c) = &it.path_cost {
                v["path_cost"] = style.value(c);
            }
            v
        })
        .collect();
    let per_node: Vec<Value> = b
        .per_node
        .iter()
        .map(|n| json!({"i": n.span.first, "j": n.span.last, "s": n.span.split, "choice": n.choice, "cost": style.value(&n.cost)}))
        .collect();
    json!({
        "expected_cost": style.value(&b.normalized),
        "total_cost": style.value(&b.total),
        "total_mass": style.value(&b.total_mass),
        "per_item": per_item,
        "per_node": per_node,
    })
}

fn cmd_eval(problem: &Problem, tree_path: &Path, style: NumberStyle) -> CliResult<Value> {
    match &problem.domain {
        Domain::Items(dist) => {
            let tree: DecisionTree = load_tree(tree_path)?;
            let b = expected_cost(&tree, dist, &problem.model).map_err(invalid)?;
            Ok(breakdown_json(&b, style))
        }
        Domain::Search { sdist, equality_cost } => {
            let tree: SearchTree = load_tree(tree_path)?;
            let res = expected_search_cost(&tree, sdist, &problem.model, equality_cost).map_err(invalid)?;
            Ok(json!({
                "expected_cost": style.value(&res.normalized_cost),
                "total_cost": style.value(&res.total_cost),
                "total_mass": style.value(&res.total_mass),
            }))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    problem: &Problem,
    input: &Path,
    tree_path: &Path,
    iterations: u64,
    seed: u64,
    warmup: u64,
    automaton: Option<&str>,
    replications: u64,
    initial_state: Option<usize>,
) -> CliResult<Value> {
    let Domain::Items(dist) = &problem.domain else {
        return Err(invalid("simulation supports alphabetic (weights) problems only"));
    };
    let pair = problem.pair.clone().ok_or_else(|| invalid("simulation needs a static or dynamic cost model"))?;
    let base = input.parent().unwrap_or(Path::new("."));
    let predictor = match (automaton, &problem.model) {
        (Some(name), _) => predictor_from_arg(name, base)?,
        (None, CostModel::Dynamic { predictor, .. }) => predictor.clone(),
        (None, _) => Predictor::Static,
    };
    let tree: DecisionTree = load_tree(tree_path)?;
    let config = SimConfig { iterations, warmup, seed, initial_state };
    let report = simulate_replicated(&tree, dist, &predictor, &pair, &config, replications).map_err(invalid)?;
    serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_compare(problem: &Problem, style: NumberStyle) -> CliResult<Value> {
    let Domain::Items(dist) = &problem.domain else {
        return Err(invalid("compare supports alphabetic (weights) problems only"));
    };
    let pair = problem.pair.clone().ok_or_else(|| invalid("compare needs a static or dynamic cost model"))?;
    let static_model = CostModel::Static(pair.clone());

    let uniform = solve_uniform_cost(dist);
    let ordered = solve_ordered_edge(dist, &pair);
    let branch = solve_branch_optimal(dist, &pair);
    let dynamic = |p: Predictor| solve_generalized(dist, &CostModel::dynamic(p, pair.clone())).map_err(invalid);
    let a2 = dynamic(Predictor::A2)?;
    let a3 = dynamic(Predictor::A3)?;

    let static_cost_of = |tree: &DecisionTree| -> CliResult<Rational> {
        Ok(expected_cost(&tree.oriented_by_mass(dist), dist, &static_model).map_err(invalid)?.normalized)
    };
    let reference = ordered.normalized_cost.clone();
    let row = |name: &str, model: &str, res: &SolveResult, time_cost: Rational| -> Value {
        json!({
            "name": name,
            "model": model,
            "expected_cost": style.value(&res.normalized_cost),
            "total_cost": style.value(&res.total_cost),
            "static_cost": style.value(&time_cost),
            "ratio_to_ordered_edge": to_f64(&(&time_cost / &reference)),
            "tree": res.tree.to_json(),
        })
    };
    let rows = vec![
        row("uniform-cost", "comparisons", &uniform, static_cost_of(&uniform.tree)?),
        row("ordered-edge", "static-ordered", &ordered, ordered.normalized_cost.clone()),
        row("branch-optimal", "static", &branch, branch.normalized_cost.clone()),
        row("dynamic-A2", "dynamic-A2", &a2, a2.normalized_cost.clone()),
        row("dynamic-A3", "dynamic-A3", &a3, a3.normalized_cost.clone()),
    ];
    Ok(json!({
        "c_mispredict": format_rational(pair.mispredict()),
        "c_predict": format_rational(pair.predict()),
        "rows": rows,
    }))
}

fn cmd_curve(automaton: &str, points: usize, out: &mut dyn Write) -> CliResult<()> {
    let predictor = predictor_from_arg(automaton, Path::new("."))?;
    predictor.validate().map_err(invalid)?;
    let pts = curve(&predictor, points).map_err(invalid)?;
    let mut text = String::from("p1,rate\n");
    for p in pts {
        text.push_str(&format!("{},{:.12}\n", to_f64(&p.p1), p.rate));
    }
    out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
}

fn cmd_emit(
    problem: &Problem,
    tree_path: &Path,
    format: Format,
    hints: Hints,
    style: NumberStyle,
) -> CliResult<String> {
    let options = EmitOptions {
        hint_style: hints.into(),
        threshold_names: problem.thresholds.clone(),
        numbers: style,
        ..EmitOptions::default()
    };
    match &problem.domain {
        Domain::Items(dist) => {
            let tree: DecisionTree = load_tree(tree_path)?;
            let b = expected_cost(&tree, dist, &problem.model).map_err(invalid)?;
            match format {
                Format::Json => {
                    let res = SolveResult::new(tree, b.total, b.total_mass);
                    Ok(format!("{}\n", result_to_json(&res, style)))
                }
                Format::Dot => emit_dot(&tree, dist, &problem.model, &options).map_err(invalid),
                Format::C => {
                    let bias = match problem.model {
                        CostModel::Static(_) => Bias::Recorded,
                        _ => Bias::Majority(dist),
                    };
                    emit_code(&tree, &options, bias).map_err(invalid)
                }
            }
        }
        Domain::Search { sdist, equality_cost } => {
            let tree: SearchTree = load_tree(tree_path)?;
            let res = expected_search_cost(&tree, sdist, &problem.model, equality_cost).map_err(invalid)?;
            match format {
                Format::Json => {
                    let res = SolveResult::new(tree, res.total_cost, res.total_mass);
                    Ok(format!("{}\n", result_to_json(&res, style)))
                }
                Format::Dot => emit_search_dot(&tree, sdist, &problem.model, equality_cost, &options).map_err(invalid),
                Format::C => emit_search_code(&tree, &options).map_err(invalid),
            }
        }
    }
}

fn print_json(value: &Value, out: &mut dyn Write) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let style = numbers(cli.float);
    match cli.command {
        Command::Solve { input, solver } => print_json(&cmd_solve(&load_problem(&input)?, solver, style)?, out),
        Command::Eval { input, tree } => print_json(&cmd_eval(&load_problem(&input)?, &tree, style)?, out),
        Command::Simulate { input, tree, iterations, seed, warmup, automaton, replications, initial_state } => {
            let problem = load_problem(&input)?;
            let report = cmd_simulate(
                &problem,
                &input,
                &tree,
                iterations,
                seed,
                warmup,
                automaton.as_deref(),
                replications,
                initial_state,
            )?;
            print_json(&report, out)
        }
        Command::Compare { input } => print_json(&cmd_compare(&load_problem(&input)?, style)?, out),
        Command::Curve { automaton, points } => cmd_curve(&automaton, points, out),
        Command::Emit { input, tree, format, hints } => {
            let text = cmd_emit(&load_problem(&input)?, &tree, format, hints, style)?;
            out.write_all(text.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}

/// Parse `args` (including the program name), run the command and return
/// the process exit status.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
