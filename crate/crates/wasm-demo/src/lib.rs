//! Browser bindings for a small RSMA hybrid-SIC system.
//!
//! Every export rebuilds its channel from a seed, so the page stays stateless.
//! Sizes are kept small enough for single-threaded wasm.

use rsma_ofdm::baselines::{Scheme, SchemeKind};
use rsma_ofdm::channel::SystemConfig;
use rsma_ofdm::harness::{complexity_table, snr_to_noise, trial_channel};
use rsma_ofdm::precoder_pso::PsoConfig;
use rsma_ofdm::precoder_wmmse::{optimize_hybrid, OptimizerConfig};
use rsma_ofdm::rsma_model::make_cluster_plan;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const KMH: f64 = 1.0 / 3.6;

fn demo_system(speed_kmh: f64, snr_db: f64) -> SystemConfig {
    let mut cfg = SystemConfig {
        users: 2,
        tx_antennas: 8,
        subcarriers: 8,
        cp_len: 3,
        paths: 20,
        max_speed: speed_kmh * KMH,
        total_power: 8.0,
        ..SystemConfig::default()
    };
    cfg.noise_var = snr_to_noise(snr_db, cfg.total_power, cfg.subcarriers);
    cfg
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(js_err)
}

/// Off-diagonal (ICI) share of the channel energy at each speed, averaged
/// over `draws` channels.
#[wasm_bindgen]
pub fn ici_by_speed(speeds_kmh: Vec<f64>, draws: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    speeds_kmh
        .iter()
        .map(|&v| {
            let cfg = demo_system(v, 20.0);
            cfg.validate().map_err(js_err)?;
            let mut total = 0.0;
            for d in 0..draws.max(1) {
                // same draws at every speed, so only the Doppler changes
                let ch = trial_channel(&cfg, u64::from(seed) << 32 | u64::from(d)).map_err(js_err)?;
                total += ch.ici_energy_fraction();
            }
            Ok(total / f64::from(draws.max(1)))
        })
        .collect()
}

#[derive(Serialize)]
struct TradeoffPoint {
    clusters: usize,
    scheme: &'static str,
    /// bps/Hz per subcarrier; absent when the optimizer failed.
    sum_rate: Option<f64>,
    complexity_ratio: f64,
}

/// Sum rate of each scheme and the receiver cost relative to `G = 1` for
/// every cluster count dividing the subcarriers. WMMSE only, no PSO.
#[wasm_bindgen]
pub fn cluster_tradeoff(snr_db: f64, speed_kmh: f64, seed: u32) -> Result<String, JsError> {
    let cfg = demo_system(speed_kmh, snr_db);
    let channel = trial_channel(&cfg, u64::from(seed)).map_err(js_err)?;
    let grid: Vec<usize> = (1..=cfg.subcarriers).filter(|g| cfg.subcarriers % g == 0).collect();
    let table = complexity_table(&cfg, &grid);
    let opt = OptimizerConfig {
        outer_rounds: 0,
        ..OptimizerConfig::default()
    };
    let mut points = Vec::new();
    for row in &table {
        let plan = make_cluster_plan(cfg.subcarriers, row.clusters).map_err(js_err)?;
        for kind in SchemeKind::ALL {
            let scheme = Scheme::for_channel(kind, &channel);
            let mut c = cfg.clone();
            c.clusters = row.clusters;
            let sum_rate = optimize_hybrid(&channel, &plan, &c, &scheme, &PsoConfig::default(), &opt, 0)
                .ok()
                .map(|s| s.sum_rate / cfg.subcarriers as f64);
            points.push(TradeoffPoint {
                clusters: row.clusters,
                scheme: kind.name(),
                sum_rate,
                complexity_ratio: row.ratio,
            });
        }
    }
    to_json(&points)
}

#[derive(Serialize)]
struct OptimizerTrace {
    /// Global-best fitness per PSO iteration, runs concatenated.
    pso: Vec<Vec<f64>>,
    /// Sum rate per WMMSE epoch, one list per run.
    wmmse: Vec<Vec<f64>>,
    sum_rate: f64,
    feasible: bool,
}

/// Convergence traces of the full PSO/WMMSE alternation for RSMA, all in
/// bps/Hz per subcarrier.
#[wasm_bindgen]
pub fn optimizer_trace(
    snr_db: f64,
    clusters: usize,
    swarm_size: usize,
    iterations: usize,
    seed: u32,
) -> Result<String, JsError> {
    let mut cfg = demo_system(120.0, snr_db);
    cfg.clusters = clusters;
    let channel = trial_channel(&cfg, u64::from(seed)).map_err(js_err)?;
    let plan = make_cluster_plan(cfg.subcarriers, clusters).map_err(js_err)?;
    let pso = PsoConfig {
        swarm_size,
        iterations,
        ..PsoConfig::default()
    };
    let opt = OptimizerConfig {
        outer_rounds: 2,
        ..OptimizerConfig::default()
    };
    let sol = optimize_hybrid(&channel, &plan, &cfg, &Scheme::rsma(), &pso, &opt, u64::from(seed))
        .map_err(js_err)?;
    let n_c = cfg.subcarriers as f64;
    let scale = |runs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        runs.iter().map(|r| r.iter().map(|v| v / n_c).collect()).collect()
    };
    to_json(&OptimizerTrace {
        pso: scale(&sol.pso_traces),
        wmmse: scale(&sol.rate_traces),
        sum_rate: sol.sum_rate / n_c,
        feasible: sol.feasible,
    })
}
