//! Command-line front end.
//!
//! Every command writes its outputs plus `<command>.manifest.json` into the
//! output directory. The manifest holds everything needed to recompute those
//! outputs byte for byte; `replay` does exactly that.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bif::{default_target, load_network, BUNDLED_NAMES};
use crate::brute::{enumerate_all_rules, AntecedentScope};
use crate::chain::{build_chain_graph, to_dot, ChainMode};
use crate::error::Error;
use crate::export::{read_rules_csv, to_json, write_rules_csv, write_trace_csv, BruteForceSummary};
use crate::ga::{self, GaConfig};
use crate::network::BayesianNetwork;

/// Seed fallback when neither `--seed` nor the config file sets one.
pub const SEED_ENV: &str = "CHAINMINER_SEED";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const TOOL: &str = "chainminer";

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chainminer",
    version,
    about = "Rule extraction and graphical chains for discrete Bayesian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a rule set for one target variable with the genetic algorithm.
    Extract(ExtractArgs),
    /// Enumerate every antecedent and keep rules above a probability threshold.
    Brute(BruteArgs),
    /// Render the graphical chain of a rule set as Graphviz DOT.
    Chain(ChainArgs),
    /// Compare repeated GA runs with brute force over several networks.
    Eval(EvalArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Bundled network name or path to a BIF file.
    #[arg(long)]
    network: String,
    /// Consequent variable.
    #[arg(long)]
    target: String,
    /// JSON file with GA settings; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config file and the CHAINMINER_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "chainminer-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BruteArgs {
    /// Bundled network name or path to a BIF file.
    #[arg(long)]
    network: String,
    /// Consequent variable.
    #[arg(long)]
    target: String,
    /// Minimum rule probability, inclusive, in [0, 1].
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Antecedent variables: `all` or `blanket` (target's Markov blanket).
    #[arg(long, default_value = "all")]
    scope: AntecedentScope,
    /// Output directory, created if missing.
    #[arg(long, default_value = "chainminer-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ChainArgs {
    /// Bundled network name or path to a BIF file.
    #[arg(long)]
    network: String,
    /// Consequent variable.
    #[arg(long)]
    target: String,
    /// Rule CSV as written by `extract` or `brute`.
    #[arg(long)]
    rules: PathBuf,
    /// `path` keeps only edges that still lead to the target; `all` keeps every child.
    #[arg(long, default_value = "path")]
    mode: ChainMode,
    /// Output directory, created if missing.
    #[arg(long, default_value = "chainminer-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Comma-separated bundled names or BIF paths.
    #[arg(long, value_delimiter = ',', required = true)]
    networks: Vec<String>,
    /// GA runs per network; run i uses seed + i.
    #[arg(long)]
    repeats: usize,
    /// Minimum rule probability, inclusive, in [0, 1].
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    /// Antecedent variables: `all` or `blanket` (target's Markov blanket).
    #[arg(long, default_value = "all")]
    scope: AntecedentScope,
    /// Target override, repeatable.
    #[arg(long = "target", value_name = "NETWORK=VARIABLE")]
    targets: Vec<String>,
    /// JSON file with GA settings; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; overrides the config file and the CHAINMINER_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "chainminer-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Consequent variable together with its state names, so a manifest cannot
/// silently be replayed against a network whose state order changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub variable: String,
    pub states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTarget {
    /// Bundled name or absolute path.
    pub network: String,
    pub target: TargetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunSpec {
    Extract {
        #[serde(flatten)]
        input: NetworkTarget,
        config: GaConfig,
    },
    Brute {
        #[serde(flatten)]
        input: NetworkTarget,
        threshold: f64,
        scope: AntecedentScope,
    },
    Chain {
        #[serde(flatten)]
        input: NetworkTarget,
        mode: ChainMode,
        /// Full text of the input rule CSV.
        rules_csv: String,
    },
    Eval {
        inputs: Vec<NetworkTarget>,
        repeats: usize,
        threshold: f64,
        scope: AntecedentScope,
        /// `seed` is the seed of run 0.
        config: GaConfig,
    },
}

impl RunSpec {
    pub fn command(&self) -> &'static str {
        match self {
            RunSpec::Extract { .. } => "extract",
            RunSpec::Brute { .. } => "brute",
            RunSpec::Chain { .. } => "chain",
            RunSpec::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub run: RunSpec,
    /// Output files relative to the manifest's directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

/// A failed command: message for stderr plus process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::internal(e),
            _ => Failure::usage(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (program name first), runs the command, and returns the
/// exit code. The only stdout line is the final summary.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(summary)) => {
            println!("{summary}");
            EXIT_OK
        }
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            f.code
        }
        Err(_) => EXIT_INTERNAL,
    }
}

fn dispatch(command: Command) -> CliResult<String> {
    let (spec, out) = match command {
        Command::Extract(a) => {
            let (mut config, config_seed) = load_config(a.config.as_deref())?;
            config.seed = resolve_seed(a.seed, config_seed)?;
            config.validate()?;
            let input = resolve_input(&a.network, Some(&a.target))?;
            (RunSpec::Extract { input, config }, a.out)
        }
        Command::Brute(a) => {
            check_threshold(a.threshold)?;
            let input = resolve_input(&a.network, Some(&a.target))?;
            let spec = RunSpec::Brute {
                input,
                threshold: a.threshold,
                scope: a.scope,
            };
            (spec, a.out)
        }
        Command::Chain(a) => {
            let input = resolve_input(&a.network, Some(&a.target))?;
            let rules_csv = fs::read_to_string(&a.rules)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", a.rules.display())))?;
            let spec = RunSpec::Chain {
                input,
                mode: a.mode,
                rules_csv,
            };
            (spec, a.out)
        }
        Command::Eval(a) => {
            if a.repeats == 0 {
                return Err(Failure::usage("--repeats must be at least 1"));
            }
            check_threshold(a.threshold)?;
            let (mut config, config_seed) = load_config(a.config.as_deref())?;
            config.seed = resolve_seed(a.seed, config_seed)?;
            config.validate()?;
            let overrides = parse_overrides(&a.targets)?;
            let mut inputs = Vec::with_capacity(a.networks.len());
            for source in &a.networks {
                let key = source.trim();
                let target = overrides.iter().find(|(n, _)| n == key).map(|(_, t)| t.as_str());
                inputs.push(resolve_input(key, target)?);
            }
            for (n, _) in &overrides {
                if !a.networks.iter().any(|s| s.trim() == n) {
                    return Err(Failure::usage(format!(
                        "--target names `{n}`, which is not in --networks"
                    )));
                }
            }
            let spec = RunSpec::Eval {
                inputs,
                repeats: a.repeats,
                threshold: a.threshold,
                scope: a.scope,
                config,
            };
            (spec, a.out)
        }
        Command::Replay(a) => {
            let text = fs::read_to_string(&a.manifest)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", a.manifest.display())))?;
            let manifest: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("invalid manifest {}: {e}", a.manifest.display())))?;
            if manifest.version != VERSION {
                eprintln!(
                    "warning: manifest written by version {}, replaying with {VERSION}",
                    manifest.version
                );
            }
            let out = a.out.unwrap_or_else(|| {
                a.manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let summary = execute_and_write(&manifest.run, &out)?;
            return Ok(format!("replay {summary}"));
        }
    };
    execute_and_write(&spec, &out)
}

fn check_threshold(t: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Failure::usage(format!("--threshold must lie in [0, 1], got {t}")))
    }
}

/// Reads a config file; also reports whether it set `seed` explicitly.
fn load_config(path: Option<&Path>) -> CliResult<(GaConfig, Option<u64>)> {
    let Some(path) = path else {
        return Ok((GaConfig::default(), None));
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
    let seed = value.get("seed").and_then(serde_json::Value::as_u64);
    let config: GaConfig =
        serde_json::from_value(value).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))?;
    Ok((config, seed))
}

/// `--seed`, then the config file, then `CHAINMINER_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{SEED_ENV}=`{v}` is not an unsigned 64-bit integer"))),
        Err(_) => Ok(GaConfig::default().seed),
    }
}

fn parse_overrides(raw: &[String]) -> CliResult<Vec<(String, String)>> {
    raw.iter()
        .map(|s| match s.split_once('=') {
            Some((n, t)) if !n.trim().is_empty() && !t.trim().is_empty() => {
                Ok((n.trim().to_string(), t.trim().to_string()))
            }
            _ => Err(Failure::usage(format!(
                "--target `{s}` must look like NETWORK=VARIABLE"
            ))),
        })
        .collect()
}

/// Canonical source string: lower-case bundled name or absolute path.
fn canonical_source(source: &str) -> CliResult<String> {
    let key = source.trim().to_ascii_lowercase();
    if BUNDLED_NAMES.contains(&key.as_str()) {
        return Ok(key);
    }
    let path = fs::canonicalize(source).map_err(|_| {
        Failure::usage(format!(
            "`{source}` is neither a bundled network ({}) nor an existing file",
            BUNDLED_NAMES.join(", ")
        ))
    })?;
    path.into_os_string()
        .into_string()
        .map_err(|p| Failure::usage(format!("path {p:?} is not valid UTF-8")))
}

fn resolve_input(source: &str, target: Option<&str>) -> CliResult<NetworkTarget> {
    let network = canonical_source(source)?;
    let net = load_network(&network).map_err(Failure::usage)?;
    let id = match target {
        Some(t) => net.require_variable(t)?,
        None => default_target(&net),
    };
    Ok(NetworkTarget {
        network,
        target: TargetSpec {
            variable: net.variable(id).name().to_string(),
            states: net.variable(id).states().to_vec(),
        },
    })
}

/// Loads the network and checks the recorded target against it.
fn open_input(input: &NetworkTarget) -> CliResult<(BayesianNetwork, usize)> {
    let net = load_network(&input.network).map_err(Failure::usage)?;
    let id = net.require_variable(&input.target.variable)?;
    if net.variable(id).states() != input.target.states.as_slice() {
        return Err(Failure::usage(format!(
            "states of `{}` in {} are {:?}, expected {:?}",
            input.target.variable,
            input.network,
            net.variable(id).states(),
            input.target.states
        )));
    }
    Ok((net, id))
}

/// Output file name and contents.
type OutputFile = (String, String);

/// Computes every output of `spec` plus the summary line, touching no files.
pub fn execute(spec: &RunSpec) -> std::result::Result<(Vec<OutputFile>, String), Failure> {
    match spec {
        RunSpec::Extract { input, config } => run_extract(input, config),
        RunSpec::Brute {
            input,
            threshold,
            scope,
        } => run_brute(input, *threshold, *scope),
        RunSpec::Chain { input, mode, rules_csv } => run_chain(input, *mode, rules_csv),
        RunSpec::Eval {
            inputs,
            repeats,
            threshold,
            scope,
            config,
        } => run_eval(inputs, *repeats, *threshold, *scope, config),
    }
}

fn execute_and_write(spec: &RunSpec, out: &Path) -> CliResult<String> {
    let (files, summary) = execute(spec)?;
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        run: spec.clone(),
        outputs: files.iter().map(|(name, _)| name.clone()).collect(),
    };
    let manifest_name = RunManifest::file_name(spec.command());
    let manifest_text = to_json(&manifest)?;
    for (name, contents) in files.iter().chain(std::iter::once(&(manifest_name, manifest_text))) {
        let path = out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(&path, contents).map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(format!("{summary} -> {}", out.display()))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation; zero for a single value.
fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn run_extract(input: &NetworkTarget, config: &GaConfig) -> CliResult<(Vec<OutputFile>, String)> {
    let (net, target) = open_input(input)?;
    let outcome = ga::run(&net, target, config)?;
    let rules: Vec<_> = outcome
        .best
        .unique_rules()
        .into_iter()
        .map(|r| (r.clone(), r.probability(&net).ok()))
        .collect();
    let probabilities: Vec<f64> = rules.iter().filter_map(|(_, p)| *p).collect();
    let files = vec![
        ("rules.csv".to_string(), write_rules_csv(&net, target, &rules)?),
        ("trace.csv".to_string(), write_trace_csv(&outcome.trace)?),
    ];
    let summary = format!(
        "extract {}/{}: {} rules, mean probability {}, best fitness {:.4}, last improvement at generation {}",
        net.name(),
        input.target.variable,
        rules.len(),
        fmt_opt(mean(&probabilities)),
        outcome.best_fitness,
        outcome.trace.last_improvement()
    );
    Ok((files, summary))
}

fn run_brute(input: &NetworkTarget, threshold: f64, scope: AntecedentScope) -> CliResult<(Vec<OutputFile>, String)> {
    check_threshold(threshold)?;
    let (net, target) = open_input(input)?;
    let report = enumerate_all_rules(&net, target, threshold, scope)?;
    let rules: Vec<_> = report.rules.iter().map(|(r, p)| (r.clone(), Some(*p))).collect();
    let summary_json = BruteForceSummary::new(&net, &report);
    let files = vec![
        ("brute_rules.csv".to_string(), write_rules_csv(&net, target, &rules)?),
        ("brute_summary.json".to_string(), to_json(&summary_json)?),
    ];
    let summary = format!(
        "brute {}/{}: {} of {} candidates at threshold {}, average probability {}",
        net.name(),
        input.target.variable,
        report.rule_count(),
        report.candidates,
        threshold,
        fmt_opt(report.average_probability())
    );
    Ok((files, summary))
}

fn run_chain(input: &NetworkTarget, mode: ChainMode, rules_csv: &str) -> CliResult<(Vec<OutputFile>, String)> {
    let (net, target) = open_input(input)?;
    let rules = read_rules_csv(&net, target, rules_csv)?;
    if rules.is_empty() {
        return Err(Failure::usage("no rules to chain"));
    }
    let graph = build_chain_graph(&rules, &net, target, mode)?;
    let name = format!(
        "{}_{}_chain.dot",
        file_stem(net.name()),
        file_stem(&input.target.variable)
    );
    let summary = format!(
        "chain {}/{}: {} rules, {} edges",
        net.name(),
        input.target.variable,
        rules.len(),
        graph.edges.len()
    );
    Ok((vec![(name, to_dot(&graph, &net))], summary))
}

/// Keeps file names portable.
fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Serialize)]
struct EvalRow {
    network: String,
    target: String,
    repeats: usize,
    ga_mean_probability: Option<f64>,
    ga_std_probability: Option<f64>,
    ga_mean_rule_count: f64,
    brute_rule_count: usize,
    brute_average_probability: Option<f64>,
}

#[derive(Serialize)]
struct RunRow {
    network: String,
    target: String,
    run: usize,
    seed: u64,
    rule_count: usize,
    mean_probability: Option<f64>,
    best_fitness: f64,
    last_improvement: usize,
}

fn to_csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(Failure::internal)
}

fn run_eval(
    inputs: &[NetworkTarget],
    repeats: usize,
    threshold: f64,
    scope: AntecedentScope,
    config: &GaConfig,
) -> CliResult<(Vec<OutputFile>, String)> {
    if repeats == 0 {
        return Err(Failure::usage("repeats must be at least 1"));
    }
    check_threshold(threshold)?;
    config.validate()?;
    let mut files = Vec::new();
    let mut table = Vec::new();
    let mut runs = Vec::new();
    for input in inputs {
        let (net, target) = open_input(input)?;
        let stem = file_stem(net.name());
        eprintln!(
            "eval: {} target {} ({repeats} GA runs)",
            net.name(),
            input.target.variable
        );
        let outcomes = (0..repeats)
            .into_par_iter()
            .map(|i| {
                let cfg = GaConfig {
                    seed: config.seed.wrapping_add(i as u64),
                    ..config.clone()
                };
                ga::run(&net, target, &cfg).map(|o| (cfg.seed, o))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let mut run_means = Vec::new();
        let mut counts = Vec::new();
        for (i, (seed, outcome)) in outcomes.iter().enumerate() {
            let rules = ga::extracted_rules(&outcome.best, &net);
            let ps: Vec<f64> = rules.iter().map(|(_, p)| *p).collect();
            let m = mean(&ps);
            run_means.extend(m);
            counts.push(rules.len() as f64);
            runs.push(RunRow {
                network: net.name().to_string(),
                target: input.target.variable.clone(),
                run: i,
                seed: *seed,
                rule_count: rules.len(),
                mean_probability: m,
                best_fitness: outcome.best_fitness,
                last_improvement: outcome.trace.last_improvement(),
            });
            files.push((format!("traces/{stem}_run{i:03}.csv"), write_trace_csv(&outcome.trace)?));
        }
        eprintln!("eval: {} brute force", net.name());
        let report = enumerate_all_rules(&net, target, threshold, scope)?;
        table.push(EvalRow {
            network: net.name().to_string(),
            target: input.target.variable.clone(),
            repeats,
            ga_mean_probability: mean(&run_means),
            ga_std_probability: std_dev(&run_means),
            ga_mean_rule_count: mean(&counts).unwrap_or(0.0),
            brute_rule_count: report.rule_count(),
            brute_average_probability: report.average_probability(),
        });
    }
    files.insert(0, ("eval_runs.csv".to_string(), to_csv(&runs)?));
    files.insert(0, ("eval_summary.csv".to_string(), to_csv(&table)?));
    let summary = format!("eval: {} networks x {repeats} runs", inputs.len());
    Ok((files, summary))
}
