//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or data error, 3 numerical
//! explosion, 4 insufficient data, 5 failed study gates.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::anre::AnreError;
use crate::curves::{validate_assumptions, CurveError, InnovationSpec, ParamCurveSet, ValidationOptions};
use crate::experiments::{run_study, ExperimentConfig, ExperimentError};
use crate::inference::{estimate_moments, EstimateOptions, InferenceError};
use crate::oracle::{self, OracleError};
use crate::rng::StreamSeed;
use crate::simulator::{simulate_tvarch, SimError, DEFAULT_BURN_IN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EXPLOSION: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;
pub const EXIT_GATES: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "tvarch", version, about = "Recursive estimation for time-varying ARCH models")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print warnings and model checks.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a tvARCH path and write it as CSV.
    Simulate(SimulateArgs),
    /// Run the recursive estimator on a data file and report plug-in inference.
    Estimate(EstimateArgs),
    /// Compute Monte Carlo reference values at an anchor.
    Oracle(OracleArgs),
    /// Run a replicated study.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Data file; reads standard input when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input holds returns, squared on ingest.
    #[arg(long)]
    pub raw_returns: bool,
    /// Column to read when the input has a CSV header.
    #[arg(long, default_value = "x_squared")]
    pub column: String,
    /// Output JSON path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// List the planned cells without simulating.
    #[arg(long)]
    pub dry_run: bool,
}

/// Schema of `simulate` configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub curves: ParamCurveSet,
    #[serde(default = "InnovationSpec::gaussian")]
    pub innovation: InnovationSpec,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

/// Product-decay part of an `oracle` config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub lambda: f64,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
    #[serde(default = "default_decay_reps")]
    pub replications: usize,
}

fn default_q() -> u32 {
    1
}

fn default_k_factor() -> f64 {
    8.0
}

fn default_decay_reps() -> usize {
    200
}

/// Schema of `oracle` configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub curves: ParamCurveSet,
    #[serde(default = "InnovationSpec::gaussian")]
    pub innovation: InnovationSpec,
    #[serde(default = "default_u0")]
    pub u0: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub seed: u64,
    /// Sample size and step size for the bias and MSE entries.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
}

fn default_u0() -> f64 {
    0.75
}

fn default_samples() -> usize {
    200_000
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },
    #[error("{0}")]
    Explosion(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("failed gates: {0}")]
    Gates(String),
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Data { .. } | CliError::Other(_) | CliError::Io(_) => {
                EXIT_CONFIG
            }
            CliError::Explosion(_) => EXIT_EXPLOSION,
            CliError::Insufficient(_) => EXIT_INSUFFICIENT,
            CliError::Gates(_) => EXIT_GATES,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Explosion { .. } => CliError::Explosion(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<AnreError> for CliError {
    fn from(e: AnreError) -> Self {
        match e {
            AnreError::InsufficientData { .. } => CliError::Insufficient(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Anre(a) => a.into(),
            InferenceError::Range(_) => CliError::Insufficient(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Sim(s) => s.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(s) => s.into(),
            ExperimentError::Oracle(o) => o.into(),
            ExperimentError::Io(io) => CliError::Io(io),
            ExperimentError::Config(m) => CliError::Config {
                path: "config".into(),
                message: m,
            },
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        CliError::Other(e.to_string())
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, String), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let value = toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok((value, hash_hex(text.as_bytes())))
}

fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to every output file as `<file>.meta.json`.
#[derive(Debug, Serialize)]
struct Meta<'a> {
    command: &'a str,
    config_sha256: &'a str,
    seed: Option<u64>,
    version: &'a str,
}

fn write_meta(output: &Path, command: &str, config_hash: &str, seed: Option<u64>) -> Result<(), CliError> {
    let meta = Meta {
        command,
        config_sha256: config_hash,
        seed,
        version: env!("CARGO_PKG_VERSION"),
    };
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    fs::write(PathBuf::from(name), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
    Ok(())
}

fn warn_assumptions(curves: &ParamCurveSet, innovation: &InnovationSpec) -> Result<(), CliError> {
    let report = validate_assumptions(curves, innovation, &ValidationOptions::default())?;
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "warning: model condition {:?} fails (margin {} at u = {})",
            c.condition, c.margin, c.worst_u
        );
    }
    Ok(())
}

/// Parses observations: one value per line or a CSV with a header naming
/// `column`. Blank lines and lines starting with `#` are skipped.
pub fn parse_observations<R: BufRead>(reader: R, raw_returns: bool, column: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    let mut col: Option<usize> = None;
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        if first {
            first = false;
            if fields.len() > 1 || fields[0].parse::<f64>().is_err() {
                if let Some(j) = fields.iter().position(|f| *f == column) {
                    col = Some(j);
                    continue;
                }
                if fields.iter().any(|f| f.parse::<f64>().is_err()) {
                    return Err(CliError::Data {
                        line: lineno,
                        message: format!("header has no column named {column:?}"),
                    });
                }
            }
        }
        let field = match col {
            Some(j) => fields.get(j).copied(),
            None if fields.len() == 1 => Some(fields[0]),
            None => None,
        };
        let v: f64 = field
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| CliError::Data {
                line: lineno,
                message: format!("cannot parse {s:?} as a number"),
            })?;
        if !v.is_finite() {
            return Err(CliError::Data {
                line: lineno,
                message: format!("non-finite value {v}"),
            });
        }
        let x2 = if raw_returns { v * v } else { v };
        if x2 < 0.0 {
            return Err(CliError::Data {
                line: lineno,
                message: format!("negative squared observation {v}"),
            });
        }
        out.push(x2);
    }
    Ok(out)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (mut cfg, hash): (SimulateConfig, String) = read_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    warn_assumptions(&cfg.curves, &cfg.innovation)?;
    let seed = StreamSeed::new(cfg.seed, 0);
    let path = simulate_tvarch(&cfg.curves, &cfg.innovation, cfg.n, seed, cfg.burn_in)?;
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    fs::write(&args.out, buf)?;
    write_meta(&args.out, "simulate", &hash, Some(cfg.seed))?;
    let mean = path.squared().iter().sum::<f64>() / path.len() as f64;
    let max_sigma = path.sigma_squared().iter().copied().fold(0.0, f64::max);
    println!("N = {}, mean X^2 = {mean}, max sigma^2 = {max_sigma}", path.len());
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let (mut opts, hash): (EstimateOptions, String) = read_config(&args.config)?;
    if let Some(l) = args.lambda {
        opts.lambda = l;
    }
    let obs = match &args.input {
        Some(p) => parse_observations(BufReader::new(fs::File::open(p)?), args.raw_returns, &args.column)?,
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            parse_observations(text.as_bytes(), args.raw_returns, &args.column)?
        }
    };
    let est = estimate_moments(&obs, &opts)?;
    let json = serde_json::to_string_pretty(&est).expect("estimates serialize");
    match &args.out {
        Some(p) => {
            fs::write(p, json)?;
            write_meta(p, "estimate", &hash, None)?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let (mut cfg, hash): (OracleConfig, String) = read_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let horizon = match (cfg.n, cfg.lambda) {
        (Some(n), Some(l)) => Some((n, l)),
        (None, None) => None,
        _ => {
            return Err(CliError::Config {
                path: args.config.display().to_string(),
                message: "n and lambda must be given together".into(),
            })
        }
    };
    fs::create_dir_all(&args.out_dir)?;
    let report = oracle::oracle_report(
        &cfg.curves,
        &cfg.innovation,
        cfg.u0,
        cfg.samples,
        StreamSeed::new(cfg.seed, 0),
        horizon,
    )?;
    let path = args.out_dir.join("oracle.json");
    fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    write_meta(&path, "oracle", &hash, Some(cfg.seed))?;
    println!("wrote {}", path.display());
    if let Some(d) = &cfg.decay {
        let k_max = (d.k_factor / d.lambda).ceil() as usize;
        let fit = oracle::excitation_product_decay(
            &cfg.curves,
            &cfg.innovation,
            cfg.u0,
            d.lambda,
            d.q,
            k_max,
            d.replications,
            cfg.seed,
        )?;
        let json = args.out_dir.join("decay.json");
        fs::write(&json, serde_json::to_string_pretty(&fit).expect("fit serializes"))?;
        write_meta(&json, "oracle", &hash, Some(cfg.seed))?;
        let csv = args.out_dir.join("decay.csv");
        let mut buf = Vec::new();
        fit.write_csv(&mut buf)?;
        fs::write(&csv, buf)?;
        write_meta(&csv, "oracle", &hash, Some(cfg.seed))?;
        println!("delta_hat = {}, R^2 = {}", fit.delta_hat, fit.fit.r_squared);
    }
    Ok(())
}

fn cmd_study(args: &StudyArgs, threads: Option<usize>, verbose: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Config {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let hash = hash_hex(text.as_bytes());
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::Config {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    let plan = cfg.plan()?;
    if args.dry_run {
        println!("{} study, {} replications per cell:", cfg.study.name(), cfg.replications);
        for (n, l) in plan {
            println!("  {}", crate::experiments::cell_label(n, l));
        }
        return Ok(());
    }
    let dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .ok_or_else(|| CliError::Config {
            path: args.config.display().to_string(),
            message: "no output directory configured; pass --out-dir".into(),
        })?;
    let result = run_study(&cfg, threads)?;
    let (json, csv) = result.write_outputs(&dir, &cfg.output_stem())?;
    write_meta(&json, "study", &hash, Some(cfg.seed))?;
    write_meta(&csv, "study", &hash, Some(cfg.seed))?;
    if verbose {
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        for h in &result.hypotheses {
            eprintln!("check {}: {} ({})", h.name, if h.passed { "pass" } else { "fail" }, h.detail);
        }
    }
    for (k, v) in &result.metrics {
        println!("{k} = {v}");
    }
    for g in &result.gates {
        println!(
            "gate {} in [{}, {}]: {} ({})",
            g.metric,
            g.min.map_or("-inf".into(), |v| v.to_string()),
            g.max.map_or("inf".into(), |v| v.to_string()),
            g.value.map_or("missing".into(), |v| v.to_string()),
            if g.passed { "pass" } else { "FAIL" }
        );
    }
    println!("wrote {} and {}", json.display(), csv.display());
    if !result.gates_passed() {
        let failed: Vec<String> = result.failed_gates().iter().map(|g| g.metric.clone()).collect();
        return Err(CliError::Gates(failed.join(", ")));
    }
    Ok(())
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Study(a) => cmd_study(a, cli.threads, cli.verbose),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses arguments and runs; clap usage errors exit with code 2.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            if let Some(t) = cli.threads {
                // A global pool sized once; studies also install a scoped pool.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
            }
            run(cli)
        }
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_commented_input() {
        let text = "# header\n1.5\n\n2.0\n# mid\n0\n";
        assert_eq!(parse_observations(text.as_bytes(), false, "x").unwrap(), vec![1.5, 2.0, 0.0]);
        assert_eq!(parse_observations("-2\n3\n".as_bytes(), true, "x").unwrap(), vec![4.0, 9.0]);
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse_observations("1\n2\nabc\n".as_bytes(), false, "x") {
            Err(CliError::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_observations("1\n-2\n".as_bytes(), false, "x"),
            Err(CliError::Data { line: 2, .. })
        ));
    }

    #[test]
    fn reads_named_csv_column() {
        let text = "t,x_squared,sigma_squared\n1,0.5,0.6\n2,0.25,0.7\n";
        assert_eq!(
            parse_observations(text.as_bytes(), false, "x_squared").unwrap(),
            vec![0.5, 0.25]
        );
        assert!(parse_observations(text.as_bytes(), false, "nope").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(AnreError::InsufficientData { needed: 2, got: 1 }).exit_code(), 4);
        assert_eq!(
            CliError::from(SimError::Explosion { t: 3, sigma_squared: 1e13 }).exit_code(),
            3
        );
        assert_eq!(CliError::Gates("x".into()).exit_code(), 5);
    }
}
