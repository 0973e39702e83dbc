//! Experiment configuration, the end-to-end training pipeline, and the files
//! it writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::linflow::AffineField;
use crate::reference::{rk45, DenseSolution, ReferenceError, Tolerances};
use crate::systems::{builtin_with_params, from_expressions, linspace, Builtin, OdeSystem, SystemError};
use crate::table;
use crate::training::{
    minimize, per_component_rmse, rmse_of, Method, OptimizerConfig, Parallelism, ResidualLoss, Status, TrainError,
    TrainReport,
};
use crate::trial::{TrialError, TrialSolution};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn field(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ConfigError::Field {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error("every restart failed; first error: {0}")]
    AllRestartsFailed(TrainError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Configuration problems are the user's to fix; everything else is numerical.
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_))
    }
}

/// Inline system definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    pub dim: usize,
    pub rhs: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub y0: Vec<f64>,
    /// Linear part of the exactly solved sub-system; zero when absent.
    #[serde(rename = "linear_A", default, skip_serializing_if = "Option::is_none")]
    pub linear_a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(String),
    Custom(CustomSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default = "default_tol")]
    pub rtol: f64,
    #[serde(default = "default_tol")]
    pub atol: f64,
}

fn default_tol() -> f64 {
    1e-9
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            rtol: default_tol(),
            atol: default_tol(),
        }
    }
}

/// One experiment as read from JSON. Unset fields fall back to the preset
/// (or, for custom systems, to the defaults in [`ExperimentConfig::resolve`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    /// Parameter overrides for a preset.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_points: Option<usize>,
    /// Use the alternative closed-form base of [`crate::systems::SystemPreset::literal_base`]
    /// instead of the exact flow of the linear part.
    #[serde(default)]
    pub literal_base: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub reference: ReferenceConfig,
}

impl ExperimentConfig {
    pub fn preset(kind: Builtin) -> Self {
        ExperimentConfig {
            system: SystemSpec::Preset(kind.name().to_string()),
            params: BTreeMap::new(),
            train_interval: None,
            n_points: None,
            hidden_units: None,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            restarts: None,
            test_interval: None,
            test_points: None,
            literal_base: false,
            output_dir: None,
            reference: ReferenceConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates and fills in every unset field.
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        self.optimizer
            .validate()
            .map_err(|e| ConfigError::field("optimizer", e))?;
        let tol = Tolerances {
            rtol: self.reference.rtol,
            atol: self.reference.atol,
        };
        if !(tol.rtol > 0.0 && tol.atol > 0.0) {
            return Err(ConfigError::field("reference", "rtol and atol must be positive"));
        }

        let mut exp = match &self.system {
            SystemSpec::Preset(name) => {
                let kind: Builtin = name.parse().map_err(|e| ConfigError::field("system", e))?;
                let p = builtin_with_params(kind, &self.params).map_err(|e| ConfigError::field("params", e))?;
                let base = if self.literal_base {
                    p.literal_base().map_err(|e| ConfigError::field("literal_base", e))?
                } else {
                    p.linear_part.clone()
                };
                Experiment {
                    name: kind.name().to_string(),
                    preset: Some(kind),
                    system: p.system,
                    base,
                    train_interval: p.train_interval,
                    n_points: p.n_points,
                    hidden_units: p.hidden_units,
                    test_interval: p.test_interval,
                    test_points: p.test_points,
                    restarts: p.restarts,
                    optimizer: self.optimizer.clone(),
                    seed: self.seed,
                    tolerances: tol,
                    reported_loss: p.reported_loss,
                    reported_rmse: p.reported_rmse,
                }
            }
            SystemSpec::Custom(c) => {
                if !self.params.is_empty() {
                    return Err(ConfigError::field("params", "set parameters inside `system.params` for custom systems"));
                }
                if self.literal_base {
                    return Err(ConfigError::field("literal_base", "only available for presets"));
                }
                let end = self.train_interval.map(|i| i[1]).unwrap_or(1.0);
                let system = custom_system(c, end)?;
                let base = custom_base(c)?;
                Experiment {
                    name: "custom".to_string(),
                    preset: None,
                    system,
                    base,
                    train_interval: (0.0, end),
                    n_points: 40,
                    hidden_units: 20,
                    test_interval: (0.0, end),
                    test_points: 200,
                    restarts: 1,
                    optimizer: self.optimizer.clone(),
                    seed: self.seed,
                    tolerances: tol,
                    reported_loss: None,
                    reported_rmse: None,
                }
            }
        };

        if let Some([a, b]) = self.train_interval {
            check_interval("train_interval", a, b)?;
            if a != 0.0 {
                return Err(ConfigError::field("train_interval", "must start at 0, where the initial state is given"));
            }
            exp.train_interval = (a, b);
        }
        if let Some([a, b]) = self.test_interval {
            check_interval("test_interval", a, b)?;
            if a < 0.0 {
                return Err(ConfigError::field("test_interval", "must not start before 0"));
            }
            exp.test_interval = (a, b);
        } else if self.train_interval.is_some() && exp.test_interval.1 < exp.train_interval.1 {
            exp.test_interval = exp.train_interval;
        }
        if let Some(n) = self.n_points {
            exp.n_points = positive("n_points", n)?;
        }
        if let Some(m) = self.hidden_units {
            exp.hidden_units = positive("hidden_units", m)?;
        }
        if let Some(n) = self.test_points {
            exp.test_points = positive("test_points", n)?;
        }
        if let Some(r) = self.restarts {
            exp.restarts = positive("restarts", r)?;
        }
        exp.optimizer.restarts = exp.restarts;
        Ok(exp)
    }
}

fn check_interval(field: &str, a: f64, b: f64) -> Result<(), ConfigError> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(ConfigError::field(field, format!("expected an ordered interval, got [{a}, {b}]")));
    }
    Ok(())
}

fn positive(field: &str, n: usize) -> Result<usize, ConfigError> {
    if n == 0 {
        return Err(ConfigError::field(field, "must be positive"));
    }
    Ok(n)
}

fn custom_system(c: &CustomSystem, horizon: f64) -> Result<OdeSystem, ConfigError> {
    if c.dim == 0 {
        return Err(ConfigError::field("system.dim", "must be positive"));
    }
    if c.rhs.len() != c.dim {
        return Err(ConfigError::field(
            "system.rhs",
            format!("expected {} expressions, got {}", c.dim, c.rhs.len()),
        ));
    }
    if c.y0.len() != c.dim {
        return Err(ConfigError::field(
            "system.y0",
            format!("expected {} values, got {}", c.dim, c.y0.len()),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ConfigError::field("train_interval", "must end after 0"));
    }
    from_expressions(c.dim, &c.rhs, c.params.clone(), c.y0.clone(), horizon).map_err(|e| match e {
        SystemError::Parse { index, .. } => ConfigError::field(format!("system.rhs[{index}]"), e),
        other => ConfigError::field("system", other),
    })
}

fn custom_base(c: &CustomSystem) -> Result<AffineField, ConfigError> {
    let n = c.dim;
    let rows = match &c.linear_a {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::field("system.linear_A", format!("expected a {n}x{n} matrix")));
            }
            rows.clone()
        }
        None => vec![vec![0.0; n]; n],
    };
    let offset = match &c.linear_c {
        Some(v) if v.len() != n => {
            return Err(ConfigError::field("system.linear_c", format!("expected {n} values")));
        }
        Some(v) => v.clone(),
        None => vec![0.0; n],
    };
    AffineField::from_rows(&rows, &offset).map_err(|e| ConfigError::field("system.linear_A", e))
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub preset: Option<Builtin>,
    pub system: OdeSystem,
    pub base: AffineField,
    pub train_interval: (f64, f64),
    pub n_points: usize,
    pub hidden_units: usize,
    pub test_interval: (f64, f64),
    pub test_points: usize,
    pub restarts: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub reported_loss: Option<f64>,
    pub reported_rmse: Option<f64>,
}

impl Experiment {
    pub fn preset(kind: Builtin) -> Self {
        ExperimentConfig::preset(kind).resolve().expect("presets resolve")
    }

    pub fn train_grid(&self) -> Vec<f64> {
        linspace(self.train_interval.0, self.train_interval.1, self.n_points)
    }

    pub fn test_grid(&self) -> Vec<f64> {
        linspace(self.test_interval.0, self.test_interval.1, self.test_points)
    }

    /// Sorted union of the training and test grids.
    pub fn union_grid(&self) -> Vec<f64> {
        let mut all = self.train_grid();
        all.extend(self.test_grid());
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    fn horizon(&self) -> f64 {
        self.train_interval.1.max(self.test_interval.1)
    }

    pub fn reference(&self) -> Result<DenseSolution, ReferenceError> {
        rk45(&self.system, (0.0, self.horizon()), self.tolerances.rtol, self.tolerances.atol)
    }

    pub fn seeded_trial(&self, seed: u64) -> Result<TrialSolution, TrialError> {
        TrialSolution::seeded(self.base.clone(), self.system.y0(), &self.train_grid(), self.hidden_units, seed)
    }

    /// One optimizer run from the initialization drawn with `seed`.
    pub fn train_single(&self, seed: u64, method: Method, parallelism: Parallelism) -> Result<(TrialSolution, TrainReport), RunError> {
        let mut trial = self.seeded_trial(seed)?;
        let cfg = OptimizerConfig {
            method,
            ..self.optimizer.clone()
        };
        let p0 = trial.params();
        let report = {
            let mut loss = ResidualLoss::new(&trial, &self.system)?.with_parallelism(parallelism);
            minimize(&mut loss, &p0, &cfg)?
        };
        trial.set_params(&report.final_p)?;
        Ok((trial, report))
    }

    /// Best of `restarts` runs with seeds `seed, seed + 1, ...`, scored on
    /// the training grid and the test grid against the reference.
    pub fn run(&self, method: Method) -> Result<TrainOutcome, RunError> {
        let clock = Instant::now();
        let restarts = self.restarts;
        // parallelise across restarts when there are several, within the loss otherwise
        let inner = if restarts > 1 {
            Parallelism::serial()
        } else {
            Parallelism::from_env()
        };
        let runs: Vec<Result<(TrialSolution, TrainReport), RunError>> = (0..restarts)
            .into_par_iter()
            .map(|r| self.train_single(self.seed + r as u64, method, inner.clone()))
            .collect();
        let train_time = clock.elapsed().as_secs_f64();

        let restart_losses: Vec<Option<f64>> = runs
            .iter()
            .map(|r| r.as_ref().ok().map(|(_, rep)| rep.final_loss))
            .collect();
        let mut best: Option<(usize, TrialSolution, TrainReport)> = None;
        let mut first_err = None;
        for (i, run) in runs.into_iter().enumerate() {
            match run {
                Ok((trial, rep)) => {
                    let better = best.as_ref().is_none_or(|(_, _, b)| rep.final_loss < b.final_loss);
                    if better {
                        best = Some((i, trial, rep));
                    }
                }
                Err(e) => {
                    if first_err.is_none() {
                        first_err = Some(e);
                    }
                }
            }
        }
        let Some((best_restart, trial, mut report)) = best else {
            return Err(match first_err {
                Some(RunError::Train(e)) => RunError::AllRestartsFailed(e),
                Some(other) => other,
                None => RunError::Config(ConfigError::field("restarts", "must be positive")),
            });
        };

        let ref_clock = Instant::now();
        let reference = self.reference()?;
        let reference_time = ref_clock.elapsed().as_secs_f64();
        let train = Scored::new(&trial, &reference, self.train_grid())?;
        let test = Scored::new(&trial, &reference, self.test_grid())?;
        report.rmse = Some(train.rmse);

        Ok(TrainOutcome {
            best_restart,
            restart_losses,
            trial,
            report,
            reference,
            train,
            test,
            train_time,
            reference_time,
        })
    }
}

/// Predictions and reference values on one grid.
#[derive(Debug, Clone)]
pub struct Scored {
    pub times: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
    pub rmse: f64,
    pub per_component: Vec<f64>,
}

impl Scored {
    fn new(trial: &TrialSolution, reference: &DenseSolution, times: Vec<f64>) -> Result<Self, RunError> {
        let truth = reference.sample(&times)?;
        let predicted = times.iter().map(|&t| trial.value_at(t)).collect::<Result<Vec<_>, _>>()?;
        Ok(Scored {
            rmse: rmse_of(&predicted, &truth),
            per_component: per_component_rmse(&predicted, &truth),
            times,
            predicted,
            truth,
        })
    }

    /// `t,yhat1..yhatn,yref1..yrefn`.
    pub fn to_csv(&self) -> String {
        let n = self.truth.first().map_or(0, |r| r.len());
        let mut header = vec!["t".to_string()];
        header.extend(table::indexed("yhat", n));
        header.extend(table::indexed("yref", n));
        let rows = self.times.iter().enumerate().map(|(i, &t)| {
            let mut row = vec![t];
            row.extend(&self.predicted[i]);
            row.extend(&self.truth[i]);
            row
        });
        table::to_csv(&header, rows)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_restart: usize,
    pub restart_losses: Vec<Option<f64>>,
    pub trial: TrialSolution,
    pub report: TrainReport,
    pub reference: DenseSolution,
    pub train: Scored,
    pub test: Scored,
    pub train_time: f64,
    pub reference_time: f64,
}

impl TrainOutcome {
    pub fn failed(&self) -> bool {
        self.report.status == Status::LineSearchFailure
    }

    /// Report JSON. Everything outside `timing` depends only on the config.
    pub fn report_json(&self, exp: &Experiment, config: &ExperimentConfig) -> Value {
        let r = &self.report;
        let nets: Vec<Value> = self
            .trial
            .nets()
            .iter()
            .map(|n| serde_json::to_value(n).expect("nets serialize"))
            .collect();
        json!({
            "system": exp.name,
            "config": config,
            "method": r.method,
            "status": r.status,
            "final_loss": r.final_loss,
            "final_grad_norm": r.final_grad_norm,
            "iterations": r.iterations,
            "func_evals": r.func_evals,
            "rmse_train": self.train.rmse,
            "rmse_extrapolation": self.test.rmse,
            "rmse_train_per_component": self.train.per_component,
            "rmse_extrapolation_per_component": self.test.per_component,
            "best_restart": self.best_restart,
            "best_seed": exp.seed + self.best_restart as u64,
            "restart_losses": self.restart_losses,
            "reported": {
                "loss": exp.reported_loss,
                "rmse": exp.reported_rmse,
            },
            "reference": {
                "rtol": exp.tolerances.rtol,
                "atol": exp.tolerances.atol,
                "accepted_steps": self.reference.accepted_steps(),
                "rejected_steps": self.reference.rejected_steps(),
            },
            "nets": nets,
            "timing": {
                "train_seconds": self.train_time,
                "reference_seconds": self.reference_time,
                "best_run_seconds": r.wall_time,
            },
        })
    }

    /// Writes trajectory, extrapolation, loss history and report files.
    pub fn write_artifacts(&self, dir: &Path, exp: &Experiment, config: &ExperimentConfig) -> Result<(), RunError> {
        ensure_dir(dir)?;
        write(&dir.join("trajectory.csv"), &self.train.to_csv())?;
        write(&dir.join("extrapolation.csv"), &self.test.to_csv())?;
        write(&dir.join("loss_history.csv"), &history_csv(&self.report))?;
        let report = serde_json::to_string_pretty(&self.report_json(exp, config)).expect("report serializes");
        write(&dir.join("report.json"), &(report + "\n"))
    }
}

/// `iter,loss,grad_norm`.
pub fn history_csv(report: &TrainReport) -> String {
    table::to_csv(
        &["iter", "loss", "grad_norm"],
        report
            .loss_history
            .iter()
            .map(|h| vec![h.iter as f64, h.loss, h.grad_norm]),
    )
}

pub fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reference trajectory on the union of training and test grids.
pub fn reference_csv(exp: &Experiment) -> Result<String, RunError> {
    let sol = exp.reference()?;
    Ok(sol.to_csv(&exp.union_grid())?)
}

/// Result of training the same initialization with several methods.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<(Method, TrainReport)>,
}

impl Comparison {
    pub fn run(exp: &Experiment, methods: &[Method]) -> Result<Self, RunError> {
        if methods.is_empty() {
            return Err(ConfigError::field("methods", "at least one method is required").into());
        }
        let runs = methods
            .par_iter()
            .map(|&m| exp.train_single(exp.seed, m, Parallelism::serial()).map(|(_, rep)| (m, rep)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Comparison { runs })
    }

    pub fn summary_json(&self, exp: &Experiment) -> Value {
        let runs: Vec<Value> = self
            .runs
            .iter()
            .map(|(m, r)| {
                json!({
                    "method": m,
                    "status": r.status,
                    "final_loss": r.final_loss,
                    "log10_final_loss": r.final_loss.log10(),
                    "iterations": r.iterations,
                    "func_evals": r.func_evals,
                })
            })
            .collect();
        json!({ "system": exp.name, "seed": exp.seed, "runs": runs })
    }

    pub fn write_artifacts(&self, dir: &Path, exp: &Experiment) -> Result<(), RunError> {
        ensure_dir(dir)?;
        for (m, r) in &self.runs {
            write(&dir.join(format!("loss_history_{}.csv", m.short_name())), &history_csv(r))?;
        }
        let summary = serde_json::to_string_pretty(&self.summary_json(exp)).expect("summary serializes");
        write(&dir.join("compare.json"), &(summary + "\n"))
    }
}

/// One row of the four-preset summary table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub preset: String,
    pub reported_loss: Option<f64>,
    pub our_loss: Option<f64>,
    pub reported_rmse: Option<f64>,
    pub our_rmse: Option<f64>,
    pub extrapolation_rmse: Option<f64>,
    pub status: Option<Status>,
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.status == Some(Status::LineSearchFailure)
    }
}

/// Trains every preset with its default settings and the given seed.
pub fn bench_all(seed: u64, restarts: Option<usize>) -> Vec<BenchRow> {
    Builtin::ALL
        .iter()
        .map(|&kind| {
            let clock = Instant::now();
            let mut cfg = ExperimentConfig::preset(kind);
            cfg.seed = seed;
            cfg.restarts = restarts;
            let exp = cfg.resolve().expect("presets resolve");
            let out = exp.run(Method::Bfgs);
            let wall_time = clock.elapsed().as_secs_f64();
            match out {
                Ok(o) => BenchRow {
                    preset: exp.name.clone(),
                    reported_loss: exp.reported_loss,
                    our_loss: Some(o.report.final_loss),
                    reported_rmse: exp.reported_rmse,
                    our_rmse: Some(o.train.rmse),
                    extrapolation_rmse: Some(o.test.rmse),
                    status: Some(o.report.status),
                    wall_time,
                    error: None,
                },
                Err(e) => BenchRow {
                    preset: exp.name.clone(),
                    reported_loss: exp.reported_loss,
                    our_loss: None,
                    reported_rmse: exp.reported_rmse,
                    our_rmse: None,
                    extrapolation_rmse: None,
                    status: None,
                    wall_time,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Table CSV; empty cells where a value is unknown.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let cell = |v: Option<f64>| v.map(table::number).unwrap_or_default();
    let mut out = String::from("preset,reported_loss,our_loss,reported_rmse,our_rmse,extrapolation_rmse,wall_time\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.preset,
            cell(r.reported_loss),
            cell(r.our_loss),
            cell(r.reported_rmse),
            cell(r.our_rmse),
            cell(r.extrapolation_rmse),
            table::number(r.wall_time)
        ));
    }
    out
}
