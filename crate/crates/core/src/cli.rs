//! The `cslw` command line: convert, infer, bench and validate.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::compile::{network_to_program, program_to_network, CompileMode, DEFAULT_TOLERANCE};
use crate::engine::{parse_query, EngineError, Simulator};
use crate::estimate::{run_cslw, run_full_lw, run_requisite_lw, EstimateError, RunSummary};
use crate::model::{AssignmentMap, Network, RuleProgram};
use crate::numeric::{mean_std, mix_seed, Sum};
use crate::oracle::{enumerate_network, enumerate_program, exact_contextual, variable_elimination, OracleError, BRANCH_CAP};
use crate::parser::{format_real, parse_assignment_list, parse_bif, parse_dcp, serialize_dcp, ParseError};
use crate::validate::validate_program;

#[derive(Debug, Parser)]
#[command(name = "cslw", version, about = "Context-specific likelihood weighting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a BIF network into a rule program.
    Convert {
        #[arg(long, default_value = "tree")]
        mode: CompileMode,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        input: PathBuf,
        output: PathBuf,
    },
    /// Estimate or compute P(query | evidence).
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value = "")]
        evidence: String,
        #[arg(long, default_value = "cslw")]
        method: Method,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, env = "CSLW_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Run repeated estimates over a spec file and write CSV.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "lw,cslw")]
        methods: Vec<Method>,
        #[arg(long = "samples-list", value_delimiter = ',', default_value = "1000")]
        samples_list: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        runs: usize,
        #[arg(long, env = "CSLW_SEED", default_value_t = 0)]
        seed: u64,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a program's rules are exclusive and exhaustive.
    Validate { model: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    LwFull,
    Lw,
    Cslw,
    ExactEnum,
    ExactVe,
    ExactCtx,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::LwFull, Method::Lw, Method::Cslw, Method::ExactEnum, Method::ExactVe, Method::ExactCtx];

    pub fn name(self) -> &'static str {
        match self {
            Method::LwFull => "lw-full",
            Method::Lw => "lw",
            Method::Cslw => "cslw",
            Method::ExactEnum => "exact-enum",
            Method::ExactVe => "exact-ve",
            Method::ExactCtx => "exact-ctx",
        }
    }

    pub fn is_sampling(self) -> bool {
        matches!(self, Method::LwFull | Method::Lw | Method::Cslw)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected one of lw-full, lw, cslw, exact-enum, exact-ve, exact-ctx)"))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Spec(String),
    #[error("no effective samples: every sample has zero weight")]
    NoEffectiveSamples,
    #[error("method {method} is not supported on this model: {reason}")]
    Unsupported { method: Method, reason: String },
    #[error("invalid program")]
    Invalid,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// 2 for parse and IO errors, 3 when no sample has weight, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Io { .. } | CliError::Spec(_) => 2,
            CliError::NoEffectiveSamples => 3,
            _ => 1,
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::NoEffectiveSamples => CliError::NoEffectiveSamples,
            EstimateError::Empty => CliError::Other("no samples requested".into()),
            EstimateError::Engine(e) => CliError::Engine(e),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn parse_err(path: &Path) -> impl FnOnce(ParseError) -> CliError + '_ {
    move |source| CliError::Parse { path: path.display().to_string(), source }
}

/// A model in every form the methods need. BIF input gives the network,
/// its tree program and its table program; DCP input gives the program and,
/// when discrete, the network and table program derived from it.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub name: String,
    pub program: RuleProgram,
    pub network: Option<Network>,
    pub table: Option<RuleProgram>,
}

impl LoadedModel {
    pub fn from_network(name: impl Into<String>, net: Network) -> Self {
        let program = network_to_program(&net, CompileMode::Tree, DEFAULT_TOLERANCE);
        let table = network_to_program(&net, CompileMode::Table, DEFAULT_TOLERANCE);
        LoadedModel { name: name.into(), program, network: Some(net), table: Some(table) }
    }

    pub fn from_program(name: impl Into<String>, program: RuleProgram) -> Self {
        let network = program_to_network(&program).ok();
        let table = network.as_ref().map(|n| network_to_program(n, CompileMode::Table, DEFAULT_TOLERANCE));
        LoadedModel { name: name.into(), program, network, table }
    }

    fn network(&self, method: Method) -> Result<&Network, CliError> {
        self.network.as_ref().ok_or(CliError::Unsupported { method, reason: "the model has continuous variables".into() })
    }

    fn table(&self, method: Method) -> Result<&RuleProgram, CliError> {
        self.table.as_ref().ok_or(CliError::Unsupported { method, reason: "the model has continuous variables".into() })
    }
}

/// Load `.bif` files as networks and anything else as DCP.
pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let text = read(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bif")) {
        Ok(LoadedModel::from_network(name, parse_bif(&text).map_err(parse_err(path))?))
    } else {
        Ok(LoadedModel::from_program(name, parse_dcp(&text).map_err(parse_err(path))?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub value: f64,
    pub samples: usize,
    pub elapsed: Duration,
    pub ess: Option<f64>,
    pub n_residual_mean: f64,
    pub n_assigned_mean: f64,
}

impl Outcome {
    fn exact(value: f64, elapsed: Duration) -> Self {
        Outcome { value, samples: 0, elapsed, ess: None, n_residual_mean: 0.0, n_assigned_mean: 0.0 }
    }

    fn sampled(run: RunSummary) -> Self {
        Outcome {
            value: run.estimate.value,
            samples: run.estimate.n_samples,
            elapsed: run.elapsed,
            ess: Some(run.estimate.ess),
            n_residual_mean: run.n_residual_mean,
            n_assigned_mean: run.n_assigned_mean,
        }
    }
}

fn assignment(text: &str, what: &str) -> Result<AssignmentMap, CliError> {
    parse_assignment_list(text).map_err(|source| CliError::Parse { path: what.to_string(), source })
}

/// Run one method. `lw` is CS-LW's simulation aggregated without residual
/// correction over the table program, which weighs all diagnostic evidence.
pub fn run_method(model: &LoadedModel, method: Method, query: &str, evidence: &str, samples: usize, seed: u64) -> Result<Outcome, CliError> {
    let ev = assignment(evidence, "evidence")?;
    match method {
        Method::Cslw | Method::Lw => {
            let program = if method == Method::Cslw { &model.program } else { model.table(method)? };
            let atoms = parse_query(program, query).map_err(|e| match e {
                EngineError::Query(msg) => CliError::Spec(format!("query: {msg}")),
                e => e.into(),
            })?;
            let resolved = program.resolve(&ev).map_err(EngineError::from)?;
            let mut sim = Simulator::new(program, atoms, &resolved)?;
            let run = if method == Method::Cslw { run_cslw(&mut sim, samples, seed)? } else { run_requisite_lw(&mut sim, samples, seed)? };
            Ok(Outcome::sampled(run))
        }
        Method::LwFull => {
            let q = assignment(query, "query")?;
            Ok(Outcome::sampled(run_full_lw(model.network(method)?, &q, &ev, samples, seed)?))
        }
        Method::ExactEnum | Method::ExactVe | Method::ExactCtx => {
            let q = assignment(query, "query")?;
            let start = Instant::now();
            let value = match method {
                Method::ExactEnum => match &model.network {
                    Some(net) if model.program.is_discrete() => enumerate_network(net, &q, &ev)?,
                    _ => enumerate_program(&model.program, &q, &ev)?,
                },
                Method::ExactVe => variable_elimination(model.network(method)?, &q, &ev)?,
                _ => exact_contextual(&model.program, &q, &ev, BRANCH_CAP)?.value(),
            };
            Ok(Outcome::exact(value, start.elapsed()))
        }
    }
}

/// One line of a bench spec file:
/// `model=PATH, query=..., evidence=..., exact=F`, with optional `name=`.
/// Fields start at a recognized key; text up to the next key, commas
/// included, belongs to the current field.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: String,
    pub model: PathBuf,
    pub query: String,
    pub evidence: String,
    pub exact: Option<f64>,
}

const SPEC_KEYS: [&str; 5] = ["model", "query", "evidence", "exact", "name"];

pub fn parse_bench_spec(text: &str, base: &Path) -> Result<Vec<BenchCase>, CliError> {
    let mut cases = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CliError::Spec(format!("spec line {}: {msg}", n + 1));
        let mut fields: Vec<(String, String)> = Vec::new();
        for piece in line.split(',') {
            let key = piece.split_once('=').map(|(k, _)| k.trim()).filter(|k| SPEC_KEYS.contains(k));
            if let Some(k) = key {
                if fields.iter().any(|f| f.0 == k) {
                    return Err(err(format!("duplicate key `{k}`")));
                }
                let value = piece.split_once('=').unwrap().1.trim().to_string();
                fields.push((k.to_string(), value));
                continue;
            }
            match fields.last_mut() {
                Some(last) => {
                    if !last.1.is_empty() {
                        last.1.push(',');
                    }
                    last.1.push_str(piece.trim());
                }
                None => return Err(err(format!("expected `key=value`, found `{}`", piece.trim()))),
            }
        }
        let get = |k: &str| fields.iter().find(|f| f.0 == k).map(|f| f.1.clone());
        let model = get("model").ok_or_else(|| err("missing `model=`".into()))?;
        let query = get("query").ok_or_else(|| err("missing `query=`".into()))?;
        let exact = match get("exact") {
            Some(s) => Some(s.parse::<f64>().map_err(|_| err(format!("`{s}` is not a number")))?),
            None => None,
        };
        let model = base.join(model);
        let name = get("name").unwrap_or_else(|| model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        cases.push(BenchCase { name, model, query, evidence: get("evidence").unwrap_or_default(), exact });
    }
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub method: Method,
    pub n: usize,
    pub run: usize,
    pub seed: u64,
    pub estimate: f64,
    pub abs_error: f64,
    pub elapsed_ms: f64,
    pub samples_per_sec: f64,
    pub n_residual_mean: f64,
    pub n_assigned_mean: f64,
}

/// Reference value for a case: the spec's, else variable elimination, else
/// enumeration of a discrete program.
pub fn reference_value(case: &BenchCase, model: &LoadedModel) -> Result<f64, CliError> {
    if let Some(x) = case.exact {
        return Ok(x);
    }
    let q = assignment(&case.query, "query")?;
    let e = assignment(&case.evidence, "evidence")?;
    let value = match &model.network {
        Some(net) => variable_elimination(net, &q, &e),
        None => enumerate_program(&model.program, &q, &e),
    };
    value.map_err(|e| CliError::Spec(format!("{}: missing exact reference ({e}); add `exact=`", case.name)))
}

/// Every (case, method, N, run) job; run `r` uses `mix_seed(seed, r)` for
/// all methods and sample sizes, so runs are paired.
pub fn bench(cases: &[(BenchCase, LoadedModel)], methods: &[Method], ns: &[usize], runs: usize, seed: u64, threads: usize) -> Result<Vec<BenchRow>, CliError> {
    let exact: Vec<f64> = cases.iter().map(|(c, m)| reference_value(c, m)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for ci in 0..cases.len() {
        for &method in methods {
            for &n in ns {
                for run in 0..runs {
                    jobs.push((ci, method, n, run));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Other(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, method, n, run)| {
                let (case, model) = &cases[ci];
                let run_seed = mix_seed(seed, run as u64);
                let out = run_method(model, method, &case.query, &case.evidence, n, run_seed)?;
                let secs = out.elapsed.as_secs_f64();
                Ok(BenchRow {
                    model: case.name.clone(),
                    method,
                    n,
                    run,
                    seed: run_seed,
                    estimate: out.value,
                    abs_error: (out.value - exact[ci]).abs(),
                    elapsed_ms: secs * 1e3,
                    samples_per_sec: if secs > 0.0 { out.samples as f64 / secs } else { 0.0 },
                    n_residual_mean: out.n_residual_mean,
                    n_assigned_mean: out.n_assigned_mean,
                })
            })
            .collect()
    })
}

pub const CSV_HEADER: &str = "model,method,N,run,seed,estimate,abs_error,elapsed_ms,samples_per_sec,n_residual_mean,n_assigned_mean";
pub const AGGREGATE_HEADER: &str = "model,method,N,runs,mae,std,mean_elapsed_ms";

/// Per-run rows, a blank line, then one aggregate row per (model, method, N)
/// in first-appearance order. `std` is the population deviation of the
/// absolute errors.
pub fn write_csv(rows: &[BenchRow], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3},{:.1},{},{}",
            r.model,
            r.method,
            r.n,
            r.run,
            r.seed,
            format_real(r.estimate),
            format_real(r.abs_error),
            r.elapsed_ms,
            r.samples_per_sec,
            format_real(r.n_residual_mean),
            format_real(r.n_assigned_mean)
        )?;
    }
    writeln!(out)?;
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for g in aggregate(rows) {
        writeln!(out, "{},{},{},{},{},{},{:.3}", g.model, g.method, g.n, g.runs, format_real(g.mae), format_real(g.std), g.mean_elapsed_ms)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub model: String,
    pub method: Method,
    pub n: usize,
    pub runs: usize,
    pub mae: f64,
    pub std: f64,
    pub mean_elapsed_ms: f64,
}

pub fn aggregate(rows: &[BenchRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(&str, Method, usize)> = Vec::new();
    for r in rows {
        let k = (r.model.as_str(), r.method, r.n);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(model, method, n)| {
            let group: Vec<&BenchRow> = rows.iter().filter(|r| r.model == model && r.method == method && r.n == n).collect();
            let errors: Vec<f64> = group.iter().map(|r| r.abs_error).collect();
            let (mae, std) = mean_std(&errors);
            let elapsed: Sum = group.iter().map(|r| r.elapsed_ms).collect();
            Aggregate { model: model.to_string(), method, n, runs: group.len(), mae, std, mean_elapsed_ms: elapsed.value() / group.len() as f64 }
        })
        .collect()
}

/// Execute a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: "<stdout>".into(), source };
    match cli.command {
        Command::Convert { mode, tol, input, output } => {
            let net = parse_bif(&read(&input)?).map_err(parse_err(&input))?;
            let tree = network_to_program(&net, CompileMode::Tree, tol);
            let table = network_to_program(&net, CompileMode::Table, tol);
            writeln!(out, "rules (tree): {}", tree.rules().len()).map_err(io)?;
            writeln!(out, "rules (table): {}", table.rules().len()).map_err(io)?;
            let program = if mode == CompileMode::Tree { tree } else { table };
            write_file(&output, &serialize_dcp(&program))?;
            writeln!(out, "wrote {} ({mode} mode)", output.display()).map_err(io)?;
        }
        Command::Infer { model, query, evidence, method, samples, seed } => {
            let loaded = load_model(&model)?;
            let o = run_method(&loaded, method, &query, &evidence, samples, seed)?;
            writeln!(out, "method: {method}").map_err(io)?;
            writeln!(out, "value: {}", format_real(o.value)).map_err(io)?;
            if method.is_sampling() {
                writeln!(out, "samples: {}", o.samples).map_err(io)?;
                writeln!(out, "seed: {seed}").map_err(io)?;
            }
            writeln!(out, "elapsed_ms: {:.3}", o.elapsed.as_secs_f64() * 1e3).map_err(io)?;
            if let Some(ess) = o.ess {
                writeln!(out, "ess: {:.1}", ess).map_err(io)?;
            }
        }
        Command::Bench { spec, methods, samples_list, runs, seed, threads, out: path } => {
            let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
            let cases = parse_bench_spec(&read(&spec)?, &base)?;
            let loaded = cases
                .into_iter()
                .map(|c| {
                    let mut m = load_model(&c.model)?;
                    m.name = c.name.clone();
                    Ok((c, m))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let rows = bench(&loaded, &methods, &samples_list, runs, seed, threads)?;
            match path {
                Some(p) => {
                    let mut buf = Vec::new();
                    write_csv(&rows, &mut buf).map_err(io)?;
                    write_file(&p, &String::from_utf8(buf).expect("utf-8 csv"))?;
                    for g in aggregate(&rows) {
                        writeln!(out, "{} {} N={}: mae {} std {}", g.model, g.method, g.n, format_real(g.mae), format_real(g.std)).map_err(io)?;
                    }
                }
                None => write_csv(&rows, out).map_err(io)?,
            }
        }
        Command::Validate { model } => {
            let text = read(&model)?;
            let program = if model.extension().is_some_and(|e| e.eq_ignore_ascii_case("bif")) {
                let net = parse_bif(&text).map_err(parse_err(&model))?;
                network_to_program(&net, CompileMode::Tree, DEFAULT_TOLERANCE)
            } else {
                match parse_dcp(&text) {
                    Ok(p) => p,
                    Err(e) => match e.report() {
                        Some(report) => {
                            writeln!(out, "{report}").map_err(io)?;
                            return Err(CliError::Invalid);
                        }
                        None => return Err(parse_err(&model)(e)),
                    },
                }
            };
            let report = validate_program(&program);
            writeln!(out, "{report}").map_err(io)?;
            if !report.is_valid() {
                return Err(CliError::Invalid);
            }
            writeln!(out, "{} rules, {} variables", program.rules().len(), program.len()).map_err(io)?;
        }
    }
    Ok(())
}
