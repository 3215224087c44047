//! Seeded Monte-Carlo comparison of the three algorithms.
//!
//! `trials.csv` has one row per (trial, algorithm) with the columns of
//! [`TrialRow`] in declaration order; empty cells mark quantities that do not
//! exist for an infeasible trial. `summary.csv` has one row per algorithm with
//! the columns of [`SummaryRow`]. Both start with a `#` comment line carrying
//! the non-paper Δ_tr value. Solve times are kept out of `trials.csv` so that
//! reruns are byte-identical and go to `timings.csv` instead.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{
    baseline_ap_shutdown, baseline_txmin, build_problem, solve_e2e, BcdOptions, NetworkSolution, OptimizerError,
    ProblemInputs, Variant,
};
use crate::power::coefficients;
use crate::scenario::{build_deployment, validate_config, ScenarioConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub config: ScenarioConfig,
    pub trials: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Variant>,
    pub out_dir: PathBuf,
    pub options: BcdOptions,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn new(config: ScenarioConfig, trials: usize, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            trials,
            base_seed: 0,
            algorithms: Variant::ALL.to_vec(),
            out_dir: out_dir.into(),
            options: BcdOptions::default(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidSpec("trial count must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::InvalidSpec("no algorithm selected".into()));
        }
        let violations = validate_config(&self.config);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(HarnessError::InvalidSpec(text.join("; ")));
        }
        build_deployment(&self.config, self.base_seed).map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Solved,
    /// No integer-feasible point was found.
    Infeasible,
    /// Inputs could not be built or a solver broke down.
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub algorithm: Variant,
    pub status: TrialStatus,
    pub total_w: Option<f64>,
    pub radio_w: Option<f64>,
    pub cloud_w: Option<f64>,
    pub active_aps: Option<usize>,
    pub active_antennas: Option<usize>,
    pub mean_se: Option<f64>,
    pub solve_time_s: f64,
    pub audit_passed: Option<bool>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub results: Vec<AlgorithmResult>,
}

impl TrialRecord {
    pub fn result(&self, algorithm: Variant) -> Option<&AlgorithmResult> {
        self.results.iter().find(|r| r.algorithm == algorithm)
    }

    /// Every algorithm produced a solution.
    pub fn all_solved(&self) -> bool {
        self.results.iter().all(|r| r.status == TrialStatus::Solved)
    }

    pub fn rows(&self) -> impl Iterator<Item = TrialRow> + '_ {
        self.results.iter().map(|r| TrialRow {
            trial: self.trial,
            seed: self.seed,
            algorithm: r.algorithm.name().to_string(),
            status: r.status,
            total_w: r.total_w,
            radio_w: r.radio_w,
            cloud_w: r.cloud_w,
            active_aps: r.active_aps,
            active_antennas: r.active_antennas,
            mean_se: r.mean_se,
            audit_passed: r.audit_passed,
        })
    }
}

/// One line of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: String,
    pub status: TrialStatus,
    pub total_w: Option<f64>,
    pub radio_w: Option<f64>,
    pub cloud_w: Option<f64>,
    pub active_aps: Option<usize>,
    pub active_antennas: Option<usize>,
    pub mean_se: Option<f64>,
    pub audit_passed: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation; NaN for no samples.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Variant,
    pub solved: usize,
    pub total: Stat,
    pub radio: Stat,
    pub cloud: Stat,
    pub active_aps: f64,
    pub active_antennas: f64,
    pub mean_se: f64,
    pub audit_failures: usize,
}

/// Means over the trials every algorithm solved.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub included: usize,
    pub excluded: usize,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl Summary {
    pub fn get(&self, algorithm: Variant) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }

    /// 100·(1 − P_a / P_b) on the mean totals.
    pub fn savings_percent(&self, a: Variant, b: Variant) -> Option<f64> {
        Some(100.0 * (1.0 - self.get(a)?.total.mean / self.get(b)?.total.mean))
    }

    pub fn rows(&self) -> Vec<SummaryRow> {
        let savings = |a: Variant, b: Variant| {
            if a == b {
                None
            } else {
                self.savings_percent(a, b)
            }
        };
        self.algorithms
            .iter()
            .map(|s| SummaryRow {
                algorithm: s.algorithm.name().to_string(),
                trials: self.trials,
                solved: s.solved,
                included: self.included,
                excluded: self.excluded,
                total_mean_w: s.total.mean,
                total_std_w: s.total.std,
                radio_mean_w: s.radio.mean,
                radio_std_w: s.radio.std,
                cloud_mean_w: s.cloud.mean,
                cloud_std_w: s.cloud.std,
                active_aps_mean: s.active_aps,
                active_antennas_mean: s.active_antennas,
                mean_se: s.mean_se,
                audit_failures: s.audit_failures,
                savings_vs_e2e_pct: savings(s.algorithm, Variant::EndToEnd),
                savings_vs_ap_shutdown_pct: savings(s.algorithm, Variant::ApShutdown),
                savings_vs_txmin_pct: savings(s.algorithm, Variant::TxMin),
            })
            .collect()
    }
}

/// One line of `summary.csv`. Fronthaul transmit power is counted in the
/// cloud column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub trials: usize,
    pub solved: usize,
    pub included: usize,
    pub excluded: usize,
    pub total_mean_w: f64,
    pub total_std_w: f64,
    pub radio_mean_w: f64,
    pub radio_std_w: f64,
    pub cloud_mean_w: f64,
    pub cloud_std_w: f64,
    pub active_aps_mean: f64,
    pub active_antennas_mean: f64,
    pub mean_se: f64,
    pub audit_failures: usize,
    pub savings_vs_e2e_pct: Option<f64>,
    pub savings_vs_ap_shutdown_pct: Option<f64>,
    pub savings_vs_txmin_pct: Option<f64>,
}

pub fn summarize(records: &[TrialRecord], algorithms: &[Variant]) -> Summary {
    let included: Vec<&TrialRecord> = records.iter().filter(|r| r.all_solved()).collect();
    let algorithms = algorithms
        .iter()
        .map(|&algorithm| {
            let results: Vec<&AlgorithmResult> = included.iter().filter_map(|r| r.result(algorithm)).collect();
            let column =
                |f: fn(&AlgorithmResult) -> Option<f64>| results.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let mean = |values: Vec<f64>| Stat::of(&values).mean;
            AlgorithmSummary {
                algorithm,
                solved: records
                    .iter()
                    .filter(|r| r.result(algorithm).is_some_and(|a| a.status == TrialStatus::Solved))
                    .count(),
                total: Stat::of(&column(|r| r.total_w)),
                radio: Stat::of(&column(|r| r.radio_w)),
                cloud: Stat::of(&column(|r| r.cloud_w)),
                active_aps: mean(column(|r| r.active_aps.map(|n| n as f64))),
                active_antennas: mean(column(|r| r.active_antennas.map(|n| n as f64))),
                mean_se: mean(column(|r| r.mean_se)),
                audit_failures: records
                    .iter()
                    .filter_map(|r| r.result(algorithm))
                    .filter(|a| a.audit_passed == Some(false))
                    .count(),
            }
        })
        .collect();
    Summary {
        trials: records.len(),
        included: included.len(),
        excluded: records.len() - included.len(),
        algorithms,
    }
}

fn run_algorithm(
    inputs: &ProblemInputs,
    algorithm: Variant,
    options: &BcdOptions,
) -> Result<NetworkSolution, OptimizerError> {
    match algorithm {
        Variant::EndToEnd => solve_e2e(inputs, options),
        Variant::ApShutdown => baseline_ap_shutdown(inputs, options),
        Variant::TxMin => baseline_txmin(inputs, options),
    }
}

fn mean_se(solution: &NetworkSolution, inputs: &ProblemInputs) -> f64 {
    let prelog = inputs.config.frame.prelog();
    let sinr = solution.sinr(inputs);
    sinr.iter().map(|s| prelog * (1.0 + s.max(0.0)).log2()).sum::<f64>() / sinr.len().max(1) as f64
}

fn failed(algorithm: Variant, status: TrialStatus, solve_time_s: f64, message: String) -> AlgorithmResult {
    AlgorithmResult {
        algorithm,
        status,
        total_w: None,
        radio_w: None,
        cloud_w: None,
        active_aps: None,
        active_antennas: None,
        mean_se: None,
        solve_time_s,
        audit_passed: None,
        message,
    }
}

/// Runs every selected algorithm on the deployment drawn with `seed`.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> TrialRecord {
    let seed = spec.base_seed.wrapping_add(trial as u64);
    let options = BcdOptions { seed, ..spec.options };
    let inputs = build_deployment(&spec.config, seed)
        .map_err(|e| e.to_string())
        .and_then(|dep| build_problem(&spec.config, &dep).map_err(|e| e.to_string()));
    let results = spec
        .algorithms
        .iter()
        .map(|&algorithm| {
            let inputs = match &inputs {
                Ok(inputs) => inputs,
                Err(e) => return failed(algorithm, TrialStatus::Error, 0.0, e.clone()),
            };
            let start = Instant::now();
            let outcome = run_algorithm(inputs, algorithm, &options);
            let elapsed = start.elapsed().as_secs_f64();
            match outcome {
                Ok(solution) => {
                    if !solution.audit.passed {
                        warn!("trial {trial} {algorithm}: audit failed");
                    }
                    AlgorithmResult {
                        algorithm,
                        status: TrialStatus::Solved,
                        total_w: Some(solution.power.component_form),
                        radio_w: Some(solution.power.radio),
                        cloud_w: Some(solution.power.cloud),
                        active_aps: Some(solution.active_aps()),
                        active_antennas: Some(solution.total_antennas()),
                        mean_se: Some(mean_se(&solution, inputs)),
                        solve_time_s: elapsed,
                        audit_passed: Some(solution.audit.passed),
                        message: String::new(),
                    }
                }
                Err(e @ (OptimizerError::Infeasible(_) | OptimizerError::Rounding(_))) => {
                    info!("trial {trial} {algorithm}: {e}");
                    failed(algorithm, TrialStatus::Infeasible, elapsed, e.to_string())
                }
                Err(e) => {
                    warn!("trial {trial} {algorithm}: {e}");
                    failed(algorithm, TrialStatus::Error, elapsed, e.to_string())
                }
            }
        })
        .collect();
    TrialRecord { trial, seed, results }
}

/// Runs all trials, checking the output directory first.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<TrialRecord>, Summary), HarnessError> {
    spec.validate()?;
    prepare_out_dir(&spec.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| HarnessError::InvalidSpec(e.to_string()))?;
    let mut records: Vec<TrialRecord> =
        pool.install(|| (0..spec.trials).into_par_iter().map(|i| run_trial(spec, i)).collect());
    records.sort_by_key(|r| r.trial);
    let summary = summarize(&records, &spec.algorithms);
    Ok((records, summary))
}

fn prepare_out_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(io_error(&probe))?;
    fs::remove_file(&probe).map_err(io_error(&probe))
}

fn header_comment(spec: &ExperimentSpec) -> String {
    format!("# delta_tr={:?} (non-paper default)\n", spec.config.power.delta_tr)
}

/// Config keys whose values do not come from the paper.
const NON_PAPER: &[&str] = &[
    "network.num_ues",
    "frame.dft_size",
    "power.delta_tr",
    "qos.target_se",
    "qos.sinr_targets",
    "qos.strong_fraction",
    "radio.noise_psd_dbm_per_hz",
    "radio.access_noise_figure_db",
    "radio.fronthaul_noise_figure_db",
    "radio.path_loss_exponent",
    "radio.path_loss_intercept_db",
    "radio.shadowing_std_db",
];

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(table) => {
            for (key, v) in table {
                let name = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                flatten(&name, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn manifest_text(spec: &ExperimentSpec) -> String {
    let mut text = String::from("cellfree run manifest\n");
    let algos: Vec<&str> = spec.algorithms.iter().map(|a| a.name()).collect();
    text += &format!(
        "trials={}\nbase_seed={}\nalgorithms={}\n",
        spec.trials,
        spec.base_seed,
        algos.join(",")
    );
    let mut entries = Vec::new();
    let value = toml::Value::try_from(&spec.config).expect("scenario config is always serializable");
    flatten("", &value, &mut entries);
    for (key, value) in entries {
        let tag = if NON_PAPER.contains(&key.as_str()) {
            " (non-paper default)"
        } else {
            ""
        };
        let short = key.rsplit('.').next().unwrap_or(&key);
        text += &format!("{short}={value}{tag}  [{key}]\n");
    }
    let o = &spec.options;
    let lambda = o.lambda_for(&coefficients(&spec.config), spec.config.network.access_antennas);
    text += &format!("lambda={lambda:?} (non-paper default)\n");
    text += &format!(
        "bcd.ramp={:?}\nbcd.ramp_cap={:?}\nbcd.max_iterations={}\nbcd.rel_tol={:?}\nsolver.tolerance={:?}\nsolver.max_iterations={}\n",
        o.ramp, o.ramp_cap, o.max_iterations, o.rel_tol, o.solver.tolerance, o.solver.max_iterations
    );
    text
}

fn write_csv<T: Serialize>(path: &Path, comment: &str, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path).map_err(io_error(path))?;
    file.write_all(comment.as_bytes()).map_err(io_error(path))?;
    let mut writer = csv::Writer::from_writer(file);
    for row in rows {
        writer.serialize(row).map_err(csv_error(path))?;
    }
    writer.flush().map_err(io_error(path))
}

#[derive(Debug, Serialize)]
struct TimingRow {
    trial: usize,
    seed: u64,
    algorithm: &'static str,
    solve_time_s: f64,
}

/// Writes trials.csv, summary.csv, timings.csv and manifest.txt.
pub fn emit_outputs(records: &[TrialRecord], summary: &Summary, spec: &ExperimentSpec) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::InvalidSpec("no records to write".into()));
    }
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let comment = header_comment(spec);
    write_csv(&dir.join("trials.csv"), &comment, records.iter().flat_map(|r| r.rows()))?;
    write_csv(&dir.join("summary.csv"), &comment, summary.rows())?;
    let timings = records.iter().flat_map(|r| {
        r.results.iter().map(move |a| TimingRow {
            trial: r.trial,
            seed: r.seed,
            algorithm: a.algorithm.name(),
            solve_time_s: a.solve_time_s,
        })
    });
    write_csv(&dir.join("timings.csv"), "", timings)?;
    let manifest = dir.join("manifest.txt");
    fs::write(&manifest, manifest_text(spec)).map_err(io_error(&manifest))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_error(path))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_error(path))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRow>, HarnessError> {
    read_csv(path.as_ref())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>, HarnessError> {
    read_csv(path.as_ref())
}
