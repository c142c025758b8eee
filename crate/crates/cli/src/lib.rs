//! Command-line driver: load or generate a model, solve it, print a
//! `key: value` report and optionally write the value and policy
//! diagrams as Graphviz files.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use addmdp::bench::{generate, BenchConfig, BenchError, Family};
use addmdp::solver::{value_iteration_observed, IterationStats};
use addmdp::{
    compare, extract_policy, flat_value_iteration, parse, DiagramRef, DiagramStats, FlatMdp, MdpSpec, SolveConfig,
    SolveError, Store,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Largest model `--check-oracle` accepts.
pub const ORACLE_MAX_VARS: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "addmdp", version, about = "Structured value iteration for factored MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a model and print a report.
    Solve(SolveArgs),
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("model").required(true).args(["input", "gen"]))]
struct SolveArgs {
    /// Model file in the s-expression format.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Generate a benchmark instead: expon, linear, factory_mini, random.
    #[arg(long = "gen", value_name = "FAMILY", value_parser = parse_family, requires = "n")]
    gen: Option<Family>,
    /// Variable count for the generated model.
    #[arg(long, value_name = "N", requires = "gen")]
    n: Option<usize>,
    /// Seed for `--gen random`.
    #[arg(long, value_name = "S", default_value_t = 0, requires = "gen")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Spudd)]
    method: Method,
    #[arg(long, value_name = "E", default_value_t = 0.01)]
    epsilon: f64,
    /// Size limit for pre-multiplied action diagrams: a count or `inf`.
    #[arg(long, value_name = "K|inf", default_value = "inf", value_parser = parse_bigadd)]
    bigadd: NodeLimit,
    #[arg(long = "max-iters", value_name = "M", default_value_t = 100_000)]
    max_iters: usize,
    /// Also solve explicitly and report the sup-norm distance.
    #[arg(long = "check-oracle")]
    check_oracle: bool,
    #[arg(long = "dump-value", value_name = "PATH")]
    dump_value: Option<PathBuf>,
    #[arg(long = "dump-policy", value_name = "PATH")]
    dump_policy: Option<PathBuf>,
    /// Print iteration statistics to stderr every I iterations.
    #[arg(long = "stats-every", value_name = "I")]
    stats_every: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Spudd,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct NodeLimit(Option<usize>);

impl std::fmt::Display for NodeLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(k) => write!(f, "{k}"),
            None => f.write_str("inf"),
        }
    }
}

fn parse_bigadd(s: &str) -> Result<NodeLimit, String> {
    if s == "inf" {
        return Ok(NodeLimit(None));
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(NodeLimit(Some(k))),
        _ => Err(format!("expected a positive count or `inf`, got `{s}`")),
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::from_str(s).map_err(|e| e.to_string())
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Invalid(report) => Failure::new(EXIT_INVALID, format!("invalid model:\n{report}")),
            SolveError::Config(msg) => Failure::new(EXIT_USAGE, msg),
            other => Failure::new(EXIT_IO, other.to_string()),
        }
    }
}

impl From<addmdp::DiagramError> for Failure {
    fn from(e: addmdp::DiagramError) -> Self {
        Failure::new(EXIT_IO, e.to_string())
    }
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run<I, A>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_CONVERGED };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let Command::Solve(args) = cli.command;
    match solve(&args, err) {
        Ok(report) => {
            if out.write_all(report.text.as_bytes()).is_err() {
                return EXIT_IO;
            }
            if report.converged {
                EXIT_CONVERGED
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load(args: &SolveArgs, store: &mut Store) -> Result<(String, MdpSpec), Failure> {
    if let Some(path) = &args.input {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_INVALID, format!("{}: {e}", path.display())))?;
        let spec = parse(&text, store)
            .map_err(|e| Failure::new(EXIT_INVALID, format!("{}:{}", path.display(), e.render(&text))))?;
        return Ok((path.display().to_string(), spec));
    }
    let family = args.gen.expect("clap requires --input or --gen");
    let mut cfg = BenchConfig::new(family, args.n.unwrap_or(0));
    cfg.seed = args.seed;
    let spec = generate(store, &cfg).map_err(|e| match e {
        BenchError::Diagram(d) => Failure::from(d),
        other => Failure::new(EXIT_USAGE, other.to_string()),
    })?;
    let name = match family {
        Family::FactoryMini => family.to_string(),
        Family::Random => format!("{family} n={} seed={}", cfg.n, cfg.seed),
        _ => format!("{family} n={}", cfg.n),
    };
    Ok((name, spec))
}

struct Report {
    text: String,
    converged: bool,
}

/// What either method hands back: diagrams in the caller's store.
struct Solution {
    value: DiagramRef,
    policy: DiagramRef,
    action_sets: Vec<Vec<String>>,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn solve(args: &SolveArgs, err: &mut impl Write) -> Result<Report, Failure> {
    if !(args.epsilon > 0.0 && args.epsilon.is_finite()) {
        return Err(Failure::new(EXIT_USAGE, "--epsilon must be positive"));
    }
    if args.max_iters == 0 {
        return Err(Failure::new(EXIT_USAGE, "--max-iters must be at least 1"));
    }
    if args.stats_every == Some(0) {
        return Err(Failure::new(EXIT_USAGE, "--stats-every must be at least 1"));
    }
    let mut store = Store::new();
    let (name, spec) = load(args, &mut store)?;
    let report = addmdp::validate(&store, &spec);
    if !report.is_valid() {
        return Err(Failure::new(EXIT_INVALID, format!("invalid model:\n{report}")));
    }
    if args.check_oracle && spec.variables.len() > ORACLE_MAX_VARS {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("--check-oracle supports at most {ORACLE_MAX_VARS} variables, model has {}", spec.variables.len()),
        ));
    }
    let config = SolveConfig { epsilon: args.epsilon, node_limit: args.bigadd.0, max_iterations: args.max_iters };

    let start = Instant::now();
    let sol = match args.method {
        Method::Spudd => solve_spudd(&mut store, &spec, &config, args.stats_every, err)?,
        Method::Flat => solve_flat(&mut store, &spec, &config, args.stats_every, err)?,
    };
    let elapsed = start.elapsed();

    let oracle = if args.check_oracle {
        let other = match args.method {
            Method::Spudd => flat_values(&store, &spec, &config)?,
            Method::Flat => {
                let r = value_iteration_observed(&mut store, &spec, &config, |_, _| {})?;
                let flat = flat_mdp(&store, &spec)?;
                (0..flat.num_states())
                    .map(|s| store.evaluate_with(r.value, |v| flat.bit(s, v)))
                    .collect::<Result<Vec<f64>, _>>()?
            }
        };
        let flat = flat_mdp(&store, &spec)?;
        Some(compare(&store, &flat, sol.value, &other)?)
    } else {
        None
    };

    if let Some(path) = &args.dump_value {
        let dot = store.to_dot(sol.value)?;
        write_file(path, &dot)?;
    }
    if let Some(path) = &args.dump_policy {
        let dot = store.to_dot_with(sol.policy, |v| sol.action_sets[v as usize].join(","))?;
        write_file(path, &dot)?;
    }

    let text = render(&name, &spec, args, &store.stats(sol.value)?, &store.stats(sol.policy)?, &sol, oracle, elapsed);
    Ok(Report { text, converged: sol.converged })
}

fn write_file(path: &PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn progress(err: &mut impl Write, every: Option<usize>, i: usize, st: &IterationStats) {
    if every.is_some_and(|k| i.is_multiple_of(k)) {
        let _ = writeln!(
            err,
            "iteration {i}: internal_nodes={} leaves={} delta={:e}",
            st.internal_nodes, st.leaves, st.delta
        );
    }
}

fn solve_spudd(
    store: &mut Store,
    spec: &MdpSpec,
    config: &SolveConfig,
    every: Option<usize>,
    err: &mut impl Write,
) -> Result<Solution, Failure> {
    let r = value_iteration_observed(store, spec, config, |i, st| progress(err, every, i, st))?;
    let policy = extract_policy(store, spec, r.value, config)?;
    Ok(Solution {
        value: r.value,
        policy: policy.diagram,
        action_sets: policy.actions,
        iterations: r.iterations,
        converged: r.converged,
        trace: r.trace.iter().map(|s| s.delta).collect(),
    })
}

fn flat_mdp(store: &Store, spec: &MdpSpec) -> Result<FlatMdp, Failure> {
    FlatMdp::from_spec(store, spec).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))
}

fn flat_values(store: &Store, spec: &MdpSpec, config: &SolveConfig) -> Result<Vec<f64>, Failure> {
    let flat = flat_mdp(store, spec)?;
    Ok(flat_value_iteration(&flat, config.epsilon, config.max_iterations).values)
}

/// Explicit solve, with the value vector and greedy action sets turned
/// back into diagrams so both methods report the same way.
fn solve_flat(
    store: &mut Store,
    spec: &MdpSpec,
    config: &SolveConfig,
    every: Option<usize>,
    err: &mut impl Write,
) -> Result<Solution, Failure> {
    let flat = flat_mdp(store, spec)?;
    let sol = flat_value_iteration(&flat, config.epsilon, config.max_iterations);
    for (i, delta) in sol.deltas.iter().enumerate() {
        // explicit solves have no diagram to measure
        progress(err, every, i + 1, &IterationStats { internal_nodes: 0, leaves: 0, delta: *delta });
    }
    let vars = spec.variables.clone();
    let index = |bits: &[bool]| bits.iter().rev().fold(0usize, |k, &b| k << 1 | b as usize);
    let value = store.tabulate(&vars, |bits| sol.values[index(bits)])?;

    let mut sets: Vec<Vec<usize>> = Vec::new();
    let ids: Vec<usize> = sol
        .argmax
        .iter()
        .map(|set| match sets.iter().position(|s| s == set) {
            Some(i) => i,
            None => {
                sets.push(set.clone());
                sets.len() - 1
            }
        })
        .collect();
    let policy = store.tabulate(&vars, |bits| ids[index(bits)] as f64)?;
    let action_sets = sets
        .iter()
        .map(|set| {
            let mut names: Vec<String> = set.iter().map(|&a| flat.action_names[a].clone()).collect();
            names.sort();
            names
        })
        .collect();
    Ok(Solution { value, policy, action_sets, iterations: sol.iterations, converged: sol.converged, trace: sol.deltas })
}

#[allow(clippy::too_many_arguments)]
fn render(
    name: &str,
    spec: &MdpSpec,
    args: &SolveArgs,
    value: &DiagramStats,
    policy: &DiagramStats,
    sol: &Solution,
    oracle: Option<f64>,
    elapsed: Duration,
) -> String {
    let mut out = String::new();
    let mut line = |key: &str, value: String| {
        let _ = writeln!(out, "{key}: {value}");
    };
    line("model", name.to_string());
    line("method", format!("{:?}", args.method).to_lowercase());
    line("variables", spec.variables.len().to_string());
    line("actions", spec.actions.len().to_string());
    line("discount", spec.discount.to_string());
    line("epsilon", args.epsilon.to_string());
    line("bigadd", args.bigadd.to_string());
    line("converged", sol.converged.to_string());
    line("iterations", sol.iterations.to_string());
    line("value_internal_nodes", value.internal_nodes.to_string());
    line("value_leaves", value.leaves.to_string());
    line("value_equivalent_tree_leaves", value.equivalent_tree_leaves.to_string());
    line("distinct_values", value.leaves.to_string());
    line("policy_internal_nodes", policy.internal_nodes.to_string());
    line("policy_leaves", policy.leaves.to_string());
    line("policy_equivalent_tree_leaves", policy.equivalent_tree_leaves.to_string());
    let sets: Vec<String> = sol.action_sets.iter().map(|s| s.join(",")).collect();
    line("policy_action_sets", sets.join(" | "));
    if let Some(d) = oracle {
        line("supnorm_vs_flat", format!("{d:e}"));
    }
    let trace: Vec<String> = sol.trace.iter().map(|d| format!("{d:e}")).collect();
    line("trace", trace.join(" "));
    line("wall_time", format!("{:.6}s", elapsed.as_secs_f64()));
    out
}
