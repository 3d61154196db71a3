//! Replicated Monte Carlo studies.
//!
//! A study is described by an [`ExperimentConfig`] (usually read from TOML),
//! runs its replications in parallel on independent random streams and
//! produces a [`StudyResult`] holding per-cell summaries, fitted slopes,
//! named metrics and the outcome of any configured gates.
//!
//! Replication `r` of a cell draws from the stream
//! `(seed, key(cell parameters), r)`, so results do not depend on the thread
//! count or on which other cells are configured.

mod studies;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anre::{lambda_floor, step_size_for_rate, AnreError, RateMode};
use crate::curves::{CurveError, InnovationSpec, ParamCurveSet};
use crate::inference::{InferenceError, Weighting};
use crate::oracle::OracleError;
use crate::simulator::{SimError, DEFAULT_BURN_IN};
use crate::stats::OlsFit;

pub use studies::t0_for;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Anre(#[from] AnreError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    MseRate,
    Bias,
    CltCoverage,
    TwoLambda,
    Excitation,
    Coupling,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::MseRate => "mse_rate",
            StudyKind::Bias => "bias",
            StudyKind::CltCoverage => "clt_coverage",
            StudyKind::TwoLambda => "two_lambda",
            StudyKind::Excitation => "excitation",
            StudyKind::Coupling => "coupling",
        }
    }

    fn min_replications(&self) -> usize {
        match self {
            StudyKind::CltCoverage => 500,
            StudyKind::MseRate | StudyKind::Bias | StudyKind::TwoLambda | StudyKind::Coupling => 100,
            StudyKind::Excitation => 1,
        }
    }
}

/// How step sizes are chosen for each sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    /// The same list for every `N`.
    Explicit { values: Vec<f64> },
    /// `scale * N^{-rate exponent}`, clamped to the `(log N)^1.1 / N` floor.
    Rate { scale: f64, mode: RateMode },
}

/// A bound on a named metric of the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// File stem; defaults to the study name.
    #[serde(default)]
    pub stem: Option<String>,
}

fn default_u0() -> f64 {
    0.75
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_oracle_samples() -> usize {
    200_000
}

fn default_level() -> f64 {
    0.95
}

fn default_q() -> u32 {
    1
}

fn default_k_factor() -> f64 {
    8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    pub curves: ParamCurveSet,
    #[serde(default = "InnovationSpec::gaussian")]
    pub innovation: InnovationSpec,
    /// Sample sizes `N`; unused by the excitation study.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub lambda: Option<LambdaRule>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_u0")]
    pub u0: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Monte Carlo size for `F` and `Sigma` reference values.
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    /// Step-size ratio for the two-step-size study.
    #[serde(default)]
    pub w: Option<f64>,
    /// Weighting of the plug-in covariance in the coverage study.
    #[serde(default)]
    pub plugin: Option<Weighting>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Moment order of the product norms in the excitation study.
    #[serde(default = "default_q")]
    pub q: u32,
    /// Excitation products run to `ceil(k_factor / lambda)` factors.
    #[serde(default = "default_k_factor")]
    pub k_factor: f64,
    #[serde(default)]
    pub gates: Vec<Gate>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.curves.check()?;
        if !(self.u0 > 0.0 && self.u0 <= 1.0) {
            return bad(format!("anchor u0 = {} outside (0, 1]", self.u0));
        }
        let min = self.study.min_replications();
        if self.replications < min {
            return bad(format!(
                "{} study needs at least {min} replications, got {}",
                self.study.name(),
                self.replications
            ));
        }
        if self.study != StudyKind::Excitation {
            if self.n_grid.is_empty() {
                return bad("n_grid is empty".into());
            }
            let p = self.curves.order();
            for &n in &self.n_grid {
                if t0_for(self.u0, n) <= p {
                    return bad(format!("anchor index round(u0 * {n}) must exceed p = {p}"));
                }
            }
        }
        let needs_lambda = !matches!(self.study, StudyKind::Coupling);
        if needs_lambda && self.lambda.is_none() {
            return bad(format!("{} study needs a lambda rule", self.study.name()));
        }
        if let Some(LambdaRule::Explicit { values }) = &self.lambda {
            if values.is_empty() || values.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
                return bad("explicit step sizes must be non-empty and inside (0, 1)".into());
            }
        }
        if self.study == StudyKind::TwoLambda {
            match self.w {
                Some(w) if w > 0.0 && w < 1.0 => {}
                _ => return bad("two_lambda study needs w in (0, 1)".into()),
            }
        }
        if self.study == StudyKind::Excitation {
            if !matches!(self.lambda, Some(LambdaRule::Explicit { .. })) {
                return bad("excitation study needs an explicit lambda list".into());
            }
            if self.k_factor < 5.0 {
                return bad(format!("k_factor {} below 5", self.k_factor));
            }
        }
        if !(self.level > 0.5 && self.level < 1.0) {
            return bad(format!("level {} outside (0.5, 1)", self.level));
        }
        Ok(())
    }

    /// Step sizes used at sample size `n`.
    pub fn lambdas_for(&self, n: usize) -> Result<Vec<f64>, ExperimentError> {
        match &self.lambda {
            None => Ok(vec![]),
            Some(LambdaRule::Explicit { values }) => Ok(values.clone()),
            Some(LambdaRule::Rate { scale, mode }) => {
                Ok(vec![step_size_for_rate(n, self.curves.smoothness(), *scale, *mode)?.lambda])
            }
        }
    }

    /// Cells the study would run, as `(N, lambda)` pairs.
    pub fn plan(&self) -> Result<Vec<Cell>, ExperimentError> {
        self.validate()?;
        let mut cells = Vec::new();
        match self.study {
            StudyKind::Excitation => {
                for l in self.lambdas_for(0)? {
                    cells.push((None, Some(l)));
                }
            }
            StudyKind::Coupling => {
                for &n in &self.n_grid {
                    cells.push((Some(n), None));
                }
            }
            _ => {
                for &n in &self.n_grid {
                    for l in self.lambdas_for(n)? {
                        cells.push((Some(n), Some(l)));
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn output_stem(&self) -> String {
        self.output
            .as_ref()
            .and_then(|o| o.stem.clone())
            .unwrap_or_else(|| self.study.name().to_string())
    }
}

/// `N lambda >= (log N)^1.1`.
/// `(N, lambda)`; either is absent for studies that do not vary it.
pub type Cell = (Option<usize>, Option<f64>);

pub fn satisfies_floor(n: usize, lambda: f64) -> bool {
    lambda >= lambda_floor(n) * (1.0 - 1e-12)
}

pub fn cell_label(n: Option<usize>, lambda: Option<f64>) -> String {
    match (n, lambda) {
        (Some(n), Some(l)) => format!("N={n},lambda={l}"),
        (Some(n), None) => format!("N={n}"),
        (None, Some(l)) => format!("lambda={l}"),
        (None, None) => "all".into(),
    }
}

/// Summary of one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub label: String,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub replications: usize,
    pub values: BTreeMap<String, f64>,
    /// Per-component values, indexed by coefficient.
    pub components: Vec<BTreeMap<String, f64>>,
    /// Extra series such as decay checkpoints, keyed by name.
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
}

impl CellSummary {
    fn new(n: Option<usize>, lambda: Option<f64>, replications: usize) -> Self {
        Self {
            label: cell_label(n, lambda),
            n,
            lambda,
            replications,
            values: BTreeMap::new(),
            components: Vec::new(),
            series: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateOutcome {
    pub metric: String,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyResult {
    pub study: StudyKind,
    pub seed: u64,
    pub replications: usize,
    pub cells: Vec<CellSummary>,
    pub fits: BTreeMap<String, OlsFit>,
    pub metrics: BTreeMap<String, f64>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub warnings: Vec<String>,
    pub gates: Vec<GateOutcome>,
    /// Wall-clock time; kept out of serialized output so reruns compare equal.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl StudyResult {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            study: cfg.study,
            seed: cfg.seed,
            replications: cfg.replications,
            cells: Vec::new(),
            fits: BTreeMap::new(),
            metrics: BTreeMap::new(),
            hypotheses: Vec::new(),
            warnings: Vec::new(),
            gates: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn cell(&self, label: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn gates_passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn failed_gates(&self) -> Vec<&GateOutcome> {
        self.gates.iter().filter(|g| !g.passed).collect()
    }

    fn add_fit(&mut self, name: &str, fit: OlsFit) {
        self.metrics.insert(format!("{name}.slope"), fit.slope);
        self.metrics.insert(format!("{name}.slope_se"), fit.slope_se);
        self.metrics.insert(format!("{name}.r_squared"), fit.r_squared);
        if fit.points < 4 {
            self.warnings
                .push(format!("{name}: slope fitted over only {} points", fit.points));
        }
        self.fits.insert(name.to_string(), fit);
    }

    fn hypothesis(&mut self, name: &str, passed: bool, detail: String) {
        self.hypotheses.push(HypothesisCheck {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn evaluate_gates(&mut self, gates: &[Gate]) {
        self.gates = gates
            .iter()
            .map(|g| {
                let value = self.metric(&g.metric);
                let passed = match value {
                    Some(v) if v.is_finite() => {
                        g.min.is_none_or(|m| v >= m) && g.max.is_none_or(|m| v <= m)
                    }
                    _ => false,
                };
                GateOutcome {
                    metric: g.metric.clone(),
                    value,
                    min: g.min,
                    max: g.max,
                    passed,
                }
            })
            .collect();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Long-format table with columns `study,cell,component,metric,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let study = self.study.name();
        writeln!(w, "study,cell,component,metric,value")?;
        for c in &self.cells {
            for (k, v) in &c.values {
                writeln!(w, "{study},\"{}\",,{k},{v}", c.label)?;
            }
            for (i, comp) in c.components.iter().enumerate() {
                for (k, v) in comp {
                    writeln!(w, "{study},\"{}\",{i},{k},{v}", c.label)?;
                }
            }
            for (name, series) in &c.series {
                for (x, y) in series {
                    writeln!(w, "{study},\"{}\",{x},{name},{y}", c.label)?;
                }
            }
        }
        for (k, v) in &self.metrics {
            writeln!(w, "{study},all,,{k},{v}")?;
        }
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), ExperimentError> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&json, self.to_json())?;
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(&csv, buf)?;
        Ok((json, csv))
    }
}

/// Runs a study, capping parallelism at `threads` workers when given.
pub fn run_study(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<StudyResult, ExperimentError> {
    cfg.validate()?;
    let start = Instant::now();
    let run = || -> Result<StudyResult, ExperimentError> {
        let mut result = StudyResult::new(cfg);
        studies::record_model_checks(cfg, &mut result)?;
        match cfg.study {
            StudyKind::MseRate => studies::mse_rate(cfg, &mut result)?,
            StudyKind::Bias => studies::bias(cfg, &mut result)?,
            StudyKind::CltCoverage => studies::clt_coverage(cfg, &mut result)?,
            StudyKind::TwoLambda => studies::two_lambda(cfg, &mut result)?,
            StudyKind::Excitation => studies::excitation(cfg, &mut result)?,
            StudyKind::Coupling => studies::coupling(cfg, &mut result)?,
        }
        result.evaluate_gates(&cfg.gates);
        Ok(result)
    };
    let mut result = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    result.elapsed = start.elapsed();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
study = "bias"
n_grid = [2000]
replications = 100
seed = 1
lambda = { rule = "explicit", values = [0.02] }

[curves]
smoothness = { lip_plus = 1.0 }
curves = [
  { family = "affine", intercept = 0.2, slope = 2.0 },
  { family = "affine", intercept = 0.24, slope = -0.2 },
]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.u0, 0.75);
        assert_eq!(cfg.innovation, InnovationSpec::gaussian());
        assert_eq!(cfg.plan().unwrap(), vec![(Some(2000), Some(0.02))]);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_small_replications() {
        let bad = MINIMAL.replace("seed = 1", "seed = 1\nsede = 2");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(ExperimentError::Config(_))));
        let few = MINIMAL.replace("replications = 100", "replications = 50");
        assert!(ExperimentConfig::from_toml(&few).is_err());
        let cov = MINIMAL
            .replace("\"bias\"", "\"clt_coverage\"")
            .replace("replications = 100", "replications = 400");
        assert!(ExperimentConfig::from_toml(&cov).is_err());
        let u = MINIMAL.replace("seed = 1", "seed = 1\nu0 = 0.0");
        assert!(ExperimentConfig::from_toml(&u).is_err());
    }

    #[test]
    fn rate_rule_plans_one_lambda_per_n() {
        let text = MINIMAL
            .replace("n_grid = [2000]", "n_grid = [2000, 4000]")
            .replace(
                "lambda = { rule = \"explicit\", values = [0.02] }",
                "lambda = { rule = \"rate\", scale = 1.0, mode = \"single\" }",
            );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.len(), 2);
        let l = plan[0].1.unwrap();
        assert!((l - 2000f64.powf(-2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn gates_on_missing_or_nan_metrics_fail() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut r = StudyResult::new(&cfg);
        r.metrics.insert("a".into(), 0.5);
        r.metrics.insert("b".into(), f64::NAN);
        r.evaluate_gates(&[
            Gate { metric: "a".into(), min: Some(0.0), max: Some(1.0) },
            Gate { metric: "a".into(), min: Some(1.0), max: Some(1.0) },
            Gate { metric: "b".into(), min: None, max: None },
            Gate { metric: "c".into(), min: None, max: None },
        ]);
        let passed: Vec<bool> = r.gates.iter().map(|g| g.passed).collect();
        assert_eq!(passed, vec![true, false, false, false]);
    }

    #[test]
    fn floor_check() {
        assert!(satisfies_floor(10_000, 0.01));
        assert!(!satisfies_floor(10_000, 0.001));
        assert!(satisfies_floor(10_000, lambda_floor(10_000)));
    }
}
