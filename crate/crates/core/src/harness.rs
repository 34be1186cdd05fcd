//! Monte-Carlo experiment driver.
//!
//! A sweep covers every `(trial, scheme, G, SNR)` point. Each trial draws one
//! channel from its own seed and every scheme, cluster count and SNR reuses
//! it, so comparisons are paired. Rates in all outputs are divided by `N_c`
//! (bps/Hz per subcarrier).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::baselines::{Scheme, SchemeKind};
use crate::channel::{sample_channel, FreqChannel, SystemConfig};
use crate::error::{Error, Result};
use crate::precoder_pso::PsoConfig;
use crate::precoder_wmmse::{optimize_hybrid, OptimizerConfig};
use crate::rsma_model::{make_cluster_plan, sic_complexity};

pub const SNR_CONVENTION: &str =
    "per-subcarrier transmit SNR: noise_var = (total_power / subcarriers) * 10^(-snr_db / 10)";
pub const RATE_UNIT: &str = "bps/Hz per subcarrier (rates summed over subcarriers, divided by subcarriers)";

/// Runs with more failed points than this fraction are reported as failed.
pub const FAILURE_THRESHOLD: f64 = 0.2;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_grid: Vec<f64>,
    pub g_grid: Vec<usize>,
    pub schemes: Vec<SchemeKind>,
    pub trials: usize,
    pub master_seed: u64,
    /// Trials `0..trace_trials` keep their convergence traces.
    pub trace_trials: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_grid: vec![5.0, 15.0, 25.0],
            g_grid: vec![1, 4, 16],
            schemes: SchemeKind::ALL.to_vec(),
            trials: 50,
            master_seed: 1,
            trace_trials: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::Config(format!("unknown output format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    /// Wall-clock times make reruns differ, so they are left out unless asked for.
    pub wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            format: OutputFormat::Csv,
            wall_time: false,
        }
    }
}

/// Full description of a sweep. `system.noise_var` and `system.clusters`
/// are overwritten at each sweep point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub system: SystemConfig,
    pub pso: PsoConfig,
    pub optimizer: OptimizerConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        // all-zero minimum rates carry no information; follow the user count
        let sys = &mut spec.system;
        if sys.min_rates.len() != sys.users && sys.min_rates.iter().all(|&r| r == 0.0) {
            sys.min_rates = vec![0.0; sys.users];
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let sw = &self.sweep;
        let fail = |msg: String| Err(Error::Config(msg));
        if sw.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if sw.snr_grid.is_empty() {
            return fail("snr_grid is empty".into());
        }
        if sw.snr_grid.iter().any(|s| !s.is_finite()) {
            return fail("snr_grid entries must be finite".into());
        }
        if sw.g_grid.is_empty() {
            return fail("g_grid is empty".into());
        }
        if sw.schemes.is_empty() {
            return fail("schemes is empty".into());
        }
        let n_c = self.system.subcarriers;
        if let Some(g) = sw.g_grid.iter().find(|&&g| g == 0 || g > n_c) {
            return fail(format!("cluster count {g} outside 1..={n_c}"));
        }
        let mut probe = self.system.clone();
        probe.clusters = sw.g_grid[0];
        probe.validate()?;
        self.pso.validate()?;
        let w = &self.optimizer.wmmse;
        if !(w.tol > 0.0) || w.max_epochs == 0 {
            return fail("wmmse needs tol > 0 and max_epochs >= 1".into());
        }
        Ok(())
    }

    /// Number of `(trial, scheme, G, SNR)` points.
    pub fn points(&self) -> usize {
        let sw = &self.sweep;
        sw.trials * sw.schemes.len() * sw.g_grid.len() * sw.snr_grid.len()
    }
}

/// `σ² = (P_t/N_c)·10^(−snr/10)`.
pub fn snr_to_noise(snr_db: f64, total_power: f64, subcarriers: usize) -> f64 {
    total_power / subcarriers as f64 * 10f64.powf(-snr_db / 10.0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial`; depends on nothing else.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(trial as u64))
}

fn optimizer_seed(trial_seed: u64) -> u64 {
    splitmix64(trial_seed ^ 0x5053_4F5F_5345_4544)
}

/// Channel of one trial.
pub fn trial_channel(system: &SystemConfig, seed: u64) -> Result<FreqChannel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = sample_channel(system, &mut rng);
    FreqChannel::from_realization(&real, system)
}

/// Indices in results and traces are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub clusters: usize,
    pub snr_db: f64,
    pub sum_rate: f64,
    /// Private rate plus allocated common share, per user.
    pub user_rates: Vec<f64>,
    /// Largest epoch count over the WMMSE runs of this point.
    pub epochs: usize,
    /// Seconds.
    pub wall_time: f64,
    pub complexity_ops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub clusters: usize,
    pub snr_db: f64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStage {
    /// Sum rate after each WMMSE epoch.
    Wmmse,
    /// Global-best fitness after each PSO iteration.
    Pso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trial: usize,
    pub scheme: SchemeKind,
    pub clusters: usize,
    pub snr_db: f64,
    pub stage: TraceStage,
    /// Index of the run within the stage, in execution order.
    pub run: usize,
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub traces: Vec<TraceRecord>,
}

impl ExperimentResults {
    pub fn failure_fraction(&self) -> f64 {
        let total = self.rows.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / total as f64
        }
    }

    pub fn exceeds_failure_threshold(&self) -> bool {
        self.failure_fraction() > FAILURE_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    trial: usize,
    scheme: SchemeKind,
    clusters: usize,
    snr_db: f64,
}

enum JobOutput {
    Row(TrialResult, Vec<TraceRecord>),
    Failed(TrialFailure),
}

fn map_items<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    run_experiment_with(spec, &|_, _| {})
}

/// Runs the sweep, calling `progress(done, total)` after each point.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResults> {
    spec.validate()?;
    let sw = &spec.sweep;
    let trials: Vec<usize> = (0..sw.trials).collect();
    let channels = map_items(&trials, |&t| {
        trial_channel(&spec.system, trial_seed(sw.master_seed, t)).map_err(|e| e.to_string())
    });

    let mut jobs = Vec::with_capacity(spec.points());
    for trial in 0..sw.trials {
        for &scheme in &sw.schemes {
            for &clusters in &sw.g_grid {
                for &snr_db in &sw.snr_grid {
                    jobs.push(Job {
                        trial,
                        scheme,
                        clusters,
                        snr_db,
                    });
                }
            }
        }
    }

    let done = AtomicUsize::new(0);
    let total = jobs.len();
    let outputs = map_items(&jobs, |job| {
        let out = run_job(spec, job, &channels[job.trial]);
        progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
        out
    });

    let mut results = ExperimentResults::default();
    for out in outputs {
        match out {
            JobOutput::Row(row, traces) => {
                results.rows.push(row);
                results.traces.extend(traces);
            }
            JobOutput::Failed(f) => results.failures.push(f),
        }
    }
    sort_results(&mut results);
    Ok(results)
}

fn sort_results(results: &mut ExperimentResults) {
    results.rows.sort_by(|a, b| {
        (a.trial, a.scheme, a.clusters)
            .cmp(&(b.trial, b.scheme, b.clusters))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    results.failures.sort_by(|a, b| {
        (a.trial, a.scheme, a.clusters)
            .cmp(&(b.trial, b.scheme, b.clusters))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    // stable: run and iteration order within a point is kept
    results.traces.sort_by(|a, b| {
        (a.trial, a.scheme, a.clusters)
            .cmp(&(b.trial, b.scheme, b.clusters))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
}

fn run_job(spec: &ExperimentSpec, job: &Job, channel: &std::result::Result<FreqChannel, String>) -> JobOutput {
    let seed = trial_seed(spec.sweep.master_seed, job.trial);
    let fail = |error: String| {
        JobOutput::Failed(TrialFailure {
            trial: job.trial + 1,
            seed,
            scheme: job.scheme,
            clusters: job.clusters,
            snr_db: job.snr_db,
            error,
        })
    };
    let channel = match channel {
        Ok(c) => c,
        Err(e) => return fail(e.clone()),
    };
    let mut cfg = spec.system.clone();
    cfg.noise_var = snr_to_noise(job.snr_db, cfg.total_power, cfg.subcarriers);
    cfg.clusters = job.clusters;
    let plan = match make_cluster_plan(cfg.subcarriers, job.clusters) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string()),
    };
    let scheme = Scheme::for_channel(job.scheme, channel);
    let start = Instant::now();
    let sol = match optimize_hybrid(channel, &plan, &cfg, &scheme, &spec.pso, &spec.optimizer, optimizer_seed(seed)) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let wall_time = start.elapsed().as_secs_f64();
    if !sol.feasible {
        return fail("QoS not met by the best precoder found".into());
    }

    let n_c = cfg.subcarriers as f64;
    let user_rates = sol
        .rates
        .user_rates
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let common = if scheme.uses_common() {
                sol.precoder.common_alloc.row(k).sum()
            } else {
                0.0
            };
            (p + common) / n_c
        })
        .collect();
    let row = TrialResult {
        trial: job.trial + 1,
        seed,
        scheme: job.scheme,
        clusters: job.clusters,
        snr_db: job.snr_db,
        sum_rate: sol.sum_rate / n_c,
        user_rates,
        epochs: sol.wmmse_epochs.iter().copied().max().unwrap_or(0),
        wall_time,
        complexity_ops: sic_complexity(job.clusters, cfg.users, cfg.tx_antennas, cfg.subcarriers),
    };

    let mut traces = Vec::new();
    if job.trial < spec.sweep.trace_trials {
        let mut push = |stage, runs: &[Vec<f64>]| {
            for (run, trace) in runs.iter().enumerate() {
                for (iteration, v) in trace.iter().enumerate() {
                    traces.push(TraceRecord {
                        trial: job.trial + 1,
                        scheme: job.scheme,
                        clusters: job.clusters,
                        snr_db: job.snr_db,
                        stage,
                        run: run + 1,
                        iteration: iteration + 1,
                        value: v / n_c,
                    });
                }
            }
        };
        push(TraceStage::Wmmse, &sol.rate_traces);
        push(TraceStage::Pso, &sol.pso_traces);
    }
    JobOutput::Row(row, traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub scheme: SchemeKind,
    pub clusters: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    /// Half-width of the 95% Student-t interval; absent below two trials.
    pub ci95: Option<f64>,
    pub mean_user_rates: Vec<f64>,
    pub mean_epochs: f64,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub clusters: usize,
    pub ops: f64,
    /// Relative to `G = 1`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub points: Vec<PointSummary>,
    pub rows: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub failed_points: Vec<TrialFailure>,
    pub complexity: Vec<ComplexityRow>,
    /// `(scheme, G)` series whose mean drops by more than one CI width as SNR grows.
    pub snr_monotone_violations: Vec<String>,
}

pub fn complexity_table(system: &SystemConfig, g_grid: &[usize]) -> Vec<ComplexityRow> {
    let (k, nt, nc) = (system.users, system.tx_antennas, system.subcarriers);
    let base = sic_complexity(1, k, nt, nc);
    g_grid
        .iter()
        .map(|&g| {
            let ops = sic_complexity(g, k, nt, nc);
            ComplexityRow {
                clusters: g,
                ops,
                ratio: ops / base,
            }
        })
        .collect()
}

/// Mean, sample standard deviation and 95% half-width.
pub fn mean_ci(values: &[f64]) -> (f64, f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, std, Some(t * std / (n as f64).sqrt()))
}

pub fn summarize(spec: &ExperimentSpec, results: &ExperimentResults) -> Summary {
    let sw = &spec.sweep;
    let mut points = Vec::new();
    let mut schemes = sw.schemes.clone();
    schemes.sort();
    schemes.dedup();
    let mut gs = sw.g_grid.clone();
    gs.sort();
    gs.dedup();
    let mut snrs = sw.snr_grid.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    for &scheme in &schemes {
        for &clusters in &gs {
            for &snr_db in &snrs {
                let rows: Vec<&TrialResult> = results
                    .rows
                    .iter()
                    .filter(|r| r.scheme == scheme && r.clusters == clusters && r.snr_db == snr_db)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let rates: Vec<f64> = rows.iter().map(|r| r.sum_rate).collect();
                let (mean, std, ci) = mean_ci(&rates);
                let users = rows[0].user_rates.len();
                let mean_user_rates = (0..users)
                    .map(|k| rows.iter().map(|r| r.user_rates[k]).sum::<f64>() / rows.len() as f64)
                    .collect();
                points.push(PointSummary {
                    scheme,
                    clusters,
                    snr_db,
                    trials: rows.len(),
                    mean_sum_rate: mean,
                    std_sum_rate: std,
                    ci95: ci,
                    mean_user_rates,
                    mean_epochs: rows.iter().map(|r| r.epochs as f64).sum::<f64>() / rows.len() as f64,
                    max_epochs: rows.iter().map(|r| r.epochs).max().unwrap_or(0),
                });
            }
        }
    }

    let mut violations = Vec::new();
    for pair in points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.scheme != b.scheme || a.clusters != b.clusters {
            continue;
        }
        let width = 2.0 * a.ci95.unwrap_or(0.0).max(b.ci95.unwrap_or(0.0));
        if b.mean_sum_rate < a.mean_sum_rate - width {
            violations.push(format!(
                "{} G={}: {} dB -> {} dB drops {:.4} -> {:.4}",
                a.scheme, a.clusters, a.snr_db, b.snr_db, a.mean_sum_rate, b.mean_sum_rate
            ));
        }
    }

    Summary {
        points,
        rows: results.rows.len(),
        failures: results.failures.len(),
        failure_fraction: results.failure_fraction(),
        failed_points: results.failures.clone(),
        complexity: complexity_table(&spec.system, &gs),
        snr_monotone_violations: violations,
    }
}

/// Creates `dir` and checks it accepts files.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::File::create(&probe)?.write_all(b"")?;
    fs::remove_file(&probe)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_results_csv<W: Write>(out: W, rows: &[TrialResult], wall_time: bool) -> Result<()> {
    let users = rows.first().map_or(0, |r| r.user_rates.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["trial", "seed", "scheme", "clusters", "snr_db", "sum_rate"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=users).map(|k| format!("user_rate_{k}")));
    header.push("epochs".into());
    header.push("complexity_ops".into());
    if wall_time {
        header.push("wall_time".into());
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        if r.user_rates.len() != users {
            return Err(Error::Dimension("rows disagree on the number of users".into()));
        }
        let mut rec = vec![
            r.trial.to_string(),
            r.seed.to_string(),
            r.scheme.to_string(),
            r.clusters.to_string(),
            r.snr_db.to_string(),
            r.sum_rate.to_string(),
        ];
        rec.extend(r.user_rates.iter().map(f64::to_string));
        rec.push(r.epochs.to_string());
        rec.push(r.complexity_ops.to_string());
        if wall_time {
            rec.push(r.wall_time.to_string());
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_results_csv`]; a missing `wall_time` column reads as 0.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<TrialResult>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(csv_error)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (c_trial, c_seed, c_scheme, c_g, c_snr, c_sum) = (
        col("trial")?,
        col("seed")?,
        col("scheme")?,
        col("clusters")?,
        col("snr_db")?,
        col("sum_rate")?,
    );
    let (c_epochs, c_ops) = (col("epochs")?, col("complexity_ops")?);
    let c_wall = col("wall_time").ok();
    let user_cols: Vec<usize> = (1..)
        .map_while(|k| header.iter().position(|h| h == format!("user_rate_{k}")))
        .collect();

    fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
        let s = rec.get(i).unwrap_or("");
        s.parse()
            .map_err(|_| Error::Parse(format!("bad value `{s}` in column {i}")))
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_error)?;
        rows.push(TrialResult {
            trial: field(&rec, c_trial)?,
            seed: field(&rec, c_seed)?,
            scheme: field(&rec, c_scheme)?,
            clusters: field(&rec, c_g)?,
            snr_db: field(&rec, c_snr)?,
            sum_rate: field(&rec, c_sum)?,
            user_rates: user_cols.iter().map(|&c| field(&rec, c)).collect::<Result<_>>()?,
            epochs: field(&rec, c_epochs)?,
            wall_time: match c_wall {
                Some(c) => field(&rec, c)?,
                None => 0.0,
            },
            complexity_ops: field(&rec, c_ops)?,
        });
    }
    Ok(rows)
}

pub fn write_traces_csv<W: Write>(out: W, traces: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in traces {
        w.serialize(t).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_complexity_csv<W: Write>(out: W, table: &[ComplexityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in table {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Run metadata: the experiment config (minus the output location), version and conventions.
pub fn metadata(spec: &ExperimentSpec, results: &ExperimentResults) -> Result<serde_json::Value> {
    let mut echo = serde_json::to_value(spec).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(out) = echo.get_mut("output").and_then(|o| o.as_object_mut()) {
        out.remove("dir");
    }
    Ok(serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "master_seed": spec.sweep.master_seed,
        "snr_convention": SNR_CONVENTION,
        "rate_unit": RATE_UNIT,
        "min_rates_unit": "bps/Hz summed over subcarriers",
        "points": spec.points(),
        "rows": results.rows.len(),
        "failures": results.failures.len(),
        "spec": echo,
    }))
}

/// Writes results, summary, metadata and (if any) traces into
/// `spec.output.dir`. Returns the written paths.
pub fn emit_outputs(spec: &ExperimentSpec, results: &ExperimentResults) -> Result<Vec<PathBuf>> {
    if results.rows.is_empty() && results.failures.is_empty() {
        return Err(Error::Argument("no results to write".into()));
    }
    let dir = &spec.output.dir;
    prepare_output_dir(dir)?;
    let mut written = Vec::new();

    let wall = spec.output.wall_time;
    match spec.output.format {
        OutputFormat::Csv => {
            let path = dir.join("results.csv");
            write_results_csv(fs::File::create(&path)?, &results.rows, wall)?;
            written.push(path);
        }
        OutputFormat::Json => {
            let mut rows = serde_json::to_value(&results.rows).map_err(|e| Error::Parse(e.to_string()))?;
            if !wall {
                for r in rows.as_array_mut().into_iter().flatten() {
                    if let Some(obj) = r.as_object_mut() {
                        obj.remove("wall_time");
                    }
                }
            }
            let path = dir.join("results.json");
            fs::write(&path, to_json_bytes(&rows)?)?;
            written.push(path);
        }
    }

    let path = dir.join("summary.json");
    fs::write(&path, to_json_bytes(&summarize(spec, results))?)?;
    written.push(path);

    let path = dir.join("metadata.json");
    fs::write(&path, to_json_bytes(&metadata(spec, results)?)?)?;
    written.push(path);

    if !results.traces.is_empty() {
        let path = dir.join("traces.csv");
        write_traces_csv(fs::File::create(&path)?, &results.traces)?;
        written.push(path);
    }
    Ok(written)
}

/// Validates, checks the output directory, runs and writes everything.
pub fn execute(
    spec: &ExperimentSpec,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<(ExperimentResults, Vec<PathBuf>)> {
    spec.validate()?;
    prepare_output_dir(&spec.output.dir)?;
    let results = run_experiment_with(spec, progress)?;
    let written = emit_outputs(spec, &results)?;
    Ok((results, written))
}
