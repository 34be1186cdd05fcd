//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_CRITERIA=1,4,7` runs a subset; the rest print SKIP. The
//! process fails when a binding clause fails.

use std::f64::consts::PI;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use rsma_ofdm::baselines::{Scheme, SchemeKind};
use rsma_ofdm::channel::{sample_channel, FreqChannel, SystemConfig};
use rsma_ofdm::harness::{
    execute, mean_ci, run_experiment, snr_to_noise, trial_channel, trial_seed, ExperimentResults,
    ExperimentSpec, OutputConfig, SweepConfig,
};
use rsma_ofdm::precoder_pso::{fitness, run_abc_pso, PsoConfig};
use rsma_ofdm::precoder_wmmse::{
    initialize_analog, initialize_digital, receivers, run_wmmse, OptimizerConfig, WmmseConfig, LAMBDA,
};
use rsma_ofdm::qcqp::SolverOptions;
use rsma_ofdm::receiver::{process, SicSymbols};
use rsma_ofdm::rsma_model::{
    make_cluster_plan, rate_report, rsma_decode_steps, sic_complexity, EffectiveCoefficients, HybridPrecoder,
};

// tolerances
const IDENTITY_TOL: f64 = 1e-10;
const IDENTITY_BUDGET_S: f64 = 10.0;
const CHANNEL_TOL: f64 = 1e-9;
const CHANNEL_BUDGET_S: f64 = 30.0;
const SIC_Z: f64 = 3.0;
const MAC_RATIO_TOL: f64 = 0.05;
const UNIT_MODULUS_TOL: f64 = 1e-6;
const GRID_GAP: f64 = 0.05;
const AWMSE_SLACK: f64 = 1e-6;
const WMMSE_EPOCHS: usize = 10;
const TARGET_G4: f64 = 4.15;
const TARGET_GNC: f64 = 4.25;
const TARGET_BAND: f64 = 0.20;
const GAP_CLOSURE: f64 = 0.05;

// reduced swarm for the 550 optimizer runs behind criteria 8 and 9
const SWEEP_PSO: (usize, usize) = (60, 40);
const SWEEP_TRIALS: usize = 50;
const SWEEP_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    /// A failed soft clause prints FAIL without failing the run.
    soft: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            soft: false,
            detail,
        }
    }
}

fn cn(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn random_channel(rng: &mut impl Rng, users: usize, antennas: usize, n_c: usize) -> FreqChannel {
    let mats: Vec<Vec<_>> = (0..users)
        .map(|_| {
            (0..antennas)
                .map(|_| {
                    DMatrix::from_fn(n_c, n_c, |i, j| {
                        let s = if i == j { 1.0 } else { 0.3 };
                        cn(rng) * s
                    })
                })
                .collect()
        })
        .collect();
    FreqChannel::from_matrices(&mats).unwrap()
}

fn random_precoder(rng: &mut impl Rng, users: usize, antennas: usize, n_c: usize) -> HybridPrecoder {
    let analog = DMatrix::from_fn(antennas, users, |_, _| Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI));
    let scale = 1.0 / (antennas as f64).sqrt();
    let digital = (0..n_c)
        .map(|_| DMatrix::from_fn(users, users + 1, |_, _| cn(rng) * scale))
        .collect();
    HybridPrecoder::new(analog, digital).unwrap()
}

fn full_system() -> SystemConfig {
    SystemConfig::default()
}

/// 1: `R = −log2 ε^MMSE` and `ζ^MMSE = λ − R` on random small instances.
fn rate_mse_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_rate: f64 = 0.0;
    let mut worst_zeta: f64 = 0.0;
    for _ in 0..200 {
        let users = rng.random_range(1..=2);
        let n_c = rng.random_range(1..=8);
        let antennas = rng.random_range(users..=4);
        let g = rng.random_range(1..=n_c);
        let noise = 10f64.powf(rng.random_range(-3.0..0.0));
        let channel = random_channel(&mut rng, users, antennas, n_c);
        let pre = random_precoder(&mut rng, users, antennas, n_c);
        let plan = make_cluster_plan(n_c, g).unwrap();
        let coeffs = EffectiveCoefficients::compute(&channel, &pre.analog, &pre.digital).unwrap();
        let report = rate_report(&coeffs, &plan, noise);
        let steps = rsma_decode_steps(users);
        let rx = receivers(&coeffs, &plan, noise, &steps);
        for (i, step) in steps.iter().enumerate() {
            for n in 0..n_c {
                let rate = if step.stream == 0 {
                    report.common_rate_kn[(step.user, n)]
                } else {
                    report.private_rate[(step.user, n)]
                };
                let eps = rx.mse[i][n];
                let u = rx.weights[i][n];
                let zeta = u * eps - u.log2();
                worst_rate = worst_rate.max((rate + eps.log2()).abs());
                worst_zeta = worst_zeta.max((zeta - (LAMBDA - rate)).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_rate <= IDENTITY_TOL && worst_zeta <= IDENTITY_TOL && secs < IDENTITY_BUDGET_S,
        format!("max |R + log2 ε| {worst_rate:.2e}, max |ζ − (λ − R)| {worst_zeta:.2e}, {secs:.2} s"),
    )
}

fn raised_cosine(t: f64, beta: f64, period: f64) -> f64 {
    let x = t / period;
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    sinc * (PI * beta * x).cos() / (1.0 - (2.0 * beta * x).powi(2))
}

/// 2: frequency-domain model against a sample-by-sample transmit chain.
fn channel_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = SystemConfig {
        users: 2,
        tx_antennas: 2,
        subcarriers: 8,
        cp_len: 4,
        paths: 8,
        min_rates: vec![0.0; 2],
        clusters: 1,
        ..SystemConfig::default()
    };
    let (n, l) = (cfg.subcarriers, cfg.cp_len);
    let fs = cfg.sampling_rate();
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let fft = planner.plan_fft_forward(n);
    let norm = 1.0 / (n as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let real = sample_channel(&cfg, &mut rng);
        let fc = FreqChannel::from_realization(&real, &cfg).unwrap();
        let symbols: Vec<Vec<Complex64>> = (0..cfg.tx_antennas).map(|_| (0..n).map(|_| cn(&mut rng)).collect()).collect();
        // OFDM modulation and CP insertion per antenna
        let tx: Vec<Vec<Complex64>> = symbols
            .iter()
            .map(|s| {
                let mut x = s.clone();
                ifft.process(&mut x);
                x.iter_mut().for_each(|v| *v *= norm);
                let mut with_cp = x[n - l..].to_vec();
                with_cp.extend_from_slice(&x);
                with_cp
            })
            .collect();
        for k in 0..cfg.users {
            let mut y = vec![Complex64::default(); n + l];
            for (p, yp) in y.iter_mut().enumerate() {
                for path in &real.paths[k] {
                    let doppler = Complex64::from_polar(1.0, 2.0 * PI * path.doppler * p as f64 / fs);
                    for (m, x) in tx.iter().enumerate() {
                        let steer = Complex64::from_polar(1.0, PI * m as f64 * path.angle.sin());
                        let mut acc = Complex64::default();
                        for (q, xq) in x.iter().enumerate() {
                            let t = (p as f64 - q as f64) / fs - path.delay;
                            acc += xq * raised_cosine(t, cfg.rolloff, 1.0 / fs);
                        }
                        *yp += path.gain * steer * doppler * acc;
                    }
                }
            }
            let mut time_rx = y[l..].to_vec();
            fft.process(&mut time_rx);
            time_rx.iter_mut().for_each(|v| *v *= norm);

            let mut freq_rx = nalgebra::DVector::<Complex64>::zeros(n);
            for (m, s) in symbols.iter().enumerate() {
                freq_rx += fc.matrix(k, m) * nalgebra::DVector::from_column_slice(s);
            }
            let diff: f64 = time_rx.iter().zip(freq_rx.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let scale: f64 = time_rx.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(diff / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= CHANNEL_TOL && secs < CHANNEL_BUDGET_S,
        format!("max relative error {worst:.2e} over 100 realizations, {secs:.2} s"),
    )
}

/// 3: analytic interference-plus-noise against the symbol-level receiver.
fn sic_interference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let draws = 10_000;
    let mut worst_instance: f64 = 0.0;
    let mut worst_entry: f64 = 0.0;
    for _ in 0..20 {
        let users = rng.random_range(1..=2);
        let n_c = [2, 4][rng.random_range(0..2)];
        let antennas = rng.random_range(users..=3);
        let g = [1, 2, n_c][rng.random_range(0..3)];
        let noise = 0.1;
        let channel = random_channel(&mut rng, users, antennas, n_c);
        let pre = random_precoder(&mut rng, users, antennas, n_c);
        let plan = make_cluster_plan(n_c, g).unwrap();
        let coeffs = EffectiveCoefficients::compute(&channel, &pre.analog, &pre.digital).unwrap();
        let report = rate_report(&coeffs, &plan, noise);
        let analytic = report.common_terms.interference.sum() + report.private_terms.interference.sum();

        let entries = 2 * users * n_c;
        let mut sum = vec![0.0; entries];
        let mut sum_sq = vec![0.0; entries];
        let mut total = 0.0;
        let mut total_sq = 0.0;
        let sigma = noise.sqrt();
        for _ in 0..draws {
            let symbols = SicSymbols {
                common: (0..n_c).map(|_| cn(&mut rng)).collect(),
                private: (0..users).map(|_| (0..n_c).map(|_| cn(&mut rng)).collect()).collect(),
            };
            let z: Vec<Vec<Complex64>> = (0..users).map(|_| (0..n_c).map(|_| cn(&mut rng) * sigma).collect()).collect();
            let out = process(&channel, &pre, &plan, &symbols, &z).unwrap();
            let mut draw_total = 0.0;
            for k in 0..users {
                for n in 0..n_c {
                    for (stage, res) in [&out.common_residual, &out.private_residual].into_iter().enumerate() {
                        let p = res[k][n].norm_sqr();
                        let idx = (stage * users + k) * n_c + n;
                        sum[idx] += p;
                        sum_sq[idx] += p * p;
                        draw_total += p;
                    }
                }
            }
            total += draw_total;
            total_sq += draw_total * draw_total;
        }
        let d = draws as f64;
        let z_of = |s: f64, s2: f64, target: f64| {
            let mean = s / d;
            let var = (s2 / d - mean * mean) * d / (d - 1.0);
            (mean - target).abs() / (var / d).sqrt()
        };
        worst_instance = worst_instance.max(z_of(total, total_sq, analytic));
        for k in 0..users {
            for n in 0..n_c {
                let c = k * n_c + n;
                let p = (users + k) * n_c + n;
                worst_entry = worst_entry.max(z_of(sum[c], sum_sq[c], report.common_terms.interference[(k, n)]));
                worst_entry = worst_entry.max(z_of(sum[p], sum_sq[p], report.private_terms.interference[(k, n)]));
            }
        }
    }
    Outcome::new(
        worst_instance <= SIC_Z && worst_entry <= SIC_Z,
        format!("20 instances x 1e4 draws, worst |z| per entry {worst_entry:.2}, per instance total {worst_instance:.2}"),
    )
}

/// 4: refining nested partitions never lowers the sum rate.
fn cluster_monotonicity() -> Outcome {
    let cfg = SystemConfig {
        noise_var: snr_to_noise(20.0, 16.0, 16),
        ..full_system()
    };
    let plans: Vec<_> = [1, 2, 4, 8, 16].iter().map(|&g| make_cluster_plan(16, g).unwrap()).collect();
    let mut violations = 0;
    let mut smallest_gain = f64::INFINITY;
    for trial in 0..50 {
        let channel = trial_channel(&cfg, trial_seed(404, trial)).unwrap();
        let analog = initialize_analog(&channel);
        let digital = initialize_digital(&channel, &analog, &cfg, &Scheme::rsma());
        let coeffs = EffectiveCoefficients::compute(&channel, &analog, &digital).unwrap();
        let rates: Vec<f64> = plans.iter().map(|p| rate_report(&coeffs, p, cfg.noise_var).sum_rate).collect();
        for w in rates.windows(2) {
            if w[1] < w[0] {
                violations += 1;
            }
            smallest_gain = smallest_gain.min(w[1] - w[0]);
        }
    }
    Outcome::new(
        violations == 0,
        format!("50 channels, G=1,2,4,8,16: {violations} decreases, smallest step {smallest_gain:.3e}"),
    )
}

/// 5: closed-form table and counted multiply-accumulates.
fn complexity_table() -> Outcome {
    let mut exact = true;
    for (k, nt, nc) in [(2usize, 16usize, 16usize), (3, 8, 64), (1, 4, 8), (4, 32, 128)] {
        let (kf, ntf, ncf) = (k as f64, nt as f64, nc as f64);
        let nc2 = ncf * ncf;
        let table = [
            (1, 2.0 * kf * ntf * nc2 + kf * nc2),
            (2, 2.5 * kf * ntf * nc2 + 1.25 * kf * nc2),
            (4, 2.75 * kf * ntf * nc2 + 1.375 * kf * nc2),
            (nc, 3.0 * kf * ntf * nc2 + 1.5 * kf * nc2),
        ];
        for (g, expect) in table {
            exact &= sic_complexity(g, k, nt, nc) == expect;
        }
    }

    let (users, antennas, n_c) = (2, 16, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let channel = random_channel(&mut rng, users, antennas, n_c);
    let pre = random_precoder(&mut rng, users, antennas, n_c);
    let symbols = SicSymbols {
        common: vec![Complex64::new(1.0, 0.0); n_c],
        private: vec![vec![Complex64::new(1.0, 0.0); n_c]; users],
    };
    let noise = vec![vec![Complex64::default(); n_c]; users];
    let macs: Vec<f64> = [1, 2, 4, n_c]
        .iter()
        .map(|&g| {
            let plan = make_cluster_plan(n_c, g).unwrap();
            process(&channel, &pre, &plan, &symbols, &noise).unwrap().macs as f64
        })
        .collect();
    let ratios: Vec<f64> = macs.iter().map(|m| m / macs[0]).collect();
    let target = [1.0, 1.25, 1.375, 1.5];
    let ok_ratios = ratios.iter().zip(target).all(|(r, t)| ((r - t) / t).abs() <= MAC_RATIO_TOL);
    Outcome::new(
        exact && ok_ratios,
        format!(
            "closed forms exact: {exact}; counted ratios at N_c=64: {}",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" : ")
        ),
    )
}

/// 6: PSO monotonicity, unit modulus and the two-antenna phase-grid oracle.
fn pso_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut monotone = true;
    let mut worst_modulus: f64 = 0.0;
    let pso = PsoConfig {
        swarm_size: 40,
        iterations: 40,
        ..PsoConfig::default()
    };
    for run in 0..20 {
        let (users, antennas, n_c) = (2, 6, 4);
        let channel = random_channel(&mut rng, users, antennas, n_c);
        let g = [1, 2, 4][run % 3];
        let plan = make_cluster_plan(n_c, g).unwrap();
        let cfg = SystemConfig {
            users,
            tx_antennas: antennas,
            subcarriers: n_c,
            total_power: n_c as f64,
            noise_var: 0.05,
            min_rates: vec![0.0; users],
            clusters: g,
            ..SystemConfig::default()
        };
        let scheme = Scheme::for_channel(SchemeKind::ALL[run % 3], &channel);
        let analog = initialize_analog(&channel);
        let digital = initialize_digital(&channel, &analog, &cfg, &scheme);
        let stage = run_abc_pso(&channel, &digital, &plan, &cfg, &scheme, &pso, run as u64, None).unwrap();
        monotone &= stage.outcome.trace.windows(2).all(|w| w[1] >= w[0]);
        worst_modulus = stage
            .outcome
            .analog
            .iter()
            .fold(worst_modulus, |a, z| a.max((z.norm() - 1.0).abs()));
    }

    // K=1, N_t=2, N_c=1: only the relative phase matters, so a fine grid is exhaustive
    let mut worst_ratio = f64::INFINITY;
    let cfg = SystemConfig {
        users: 1,
        tx_antennas: 2,
        subcarriers: 1,
        total_power: 1.0,
        noise_var: 0.1,
        min_rates: vec![0.0],
        clusters: 1,
        ..SystemConfig::default()
    };
    let plan = make_cluster_plan(1, 1).unwrap();
    let scheme = Scheme::sdma();
    for seed in 0..10u64 {
        let channel = random_channel(&mut rng, 1, 2, 1);
        let digital = vec![DMatrix::from_row_slice(1, 2, &[Complex64::default(), cn(&mut rng) * 0.5])];
        let step = 2.0 * PI / 64.0;
        let grid = (0..64 * 64)
            .map(|idx| {
                let a = DMatrix::from_column_slice(
                    2,
                    1,
                    &[
                        Complex64::from_polar(1.0, (idx / 64) as f64 * step),
                        Complex64::from_polar(1.0, (idx % 64) as f64 * step),
                    ],
                );
                fitness(&a, &digital, &channel, &plan, &cfg, &scheme)
            })
            .fold(0.0, f64::max);
        let stage = run_abc_pso(&channel, &digital, &plan, &cfg, &scheme, &PsoConfig::default(), seed, None).unwrap();
        let found = fitness(&stage.outcome.analog, &digital, &channel, &plan, &cfg, &scheme);
        worst_ratio = worst_ratio.min(found / grid);
        monotone &= stage.outcome.trace.windows(2).all(|w| w[1] >= w[0]);
    }
    Outcome::new(
        monotone && worst_modulus <= UNIT_MODULUS_TOL && worst_ratio >= 1.0 - GRID_GAP,
        format!(
            "G_best monotone: {monotone}; max ||F_RF|-1| {worst_modulus:.1e}; worst PSO/grid fitness {worst_ratio:.4}"
        ),
    )
}

/// 7: AWMSE descent and epoch count at 20 dB.
fn wmmse_descent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let solver = SolverOptions::default();
    let wcfg = WmmseConfig::default();
    let mut worst_rise = f64::NEG_INFINITY;
    for run in 0..20 {
        let (users, antennas, n_c) = (2, 4, 4);
        let channel = random_channel(&mut rng, users, antennas, n_c);
        let g = [1, 2, 4][run % 3];
        let plan = make_cluster_plan(n_c, g).unwrap();
        let cfg = SystemConfig {
            users,
            tx_antennas: antennas,
            subcarriers: n_c,
            total_power: n_c as f64,
            noise_var: 10f64.powf(rng.random_range(-2.5..-0.5)),
            min_rates: vec![0.0; users],
            clusters: g,
            ..SystemConfig::default()
        };
        let scheme = Scheme::for_channel(SchemeKind::ALL[run % 3], &channel);
        let analog = initialize_analog(&channel);
        let digital = initialize_digital(&channel, &analog, &cfg, &scheme);
        let out = run_wmmse(&channel, &analog, &digital, &plan, &cfg, &scheme, &wcfg, &solver).unwrap();
        for w in out.trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }

    let cfg = SystemConfig {
        noise_var: snr_to_noise(20.0, 16.0, 16),
        ..full_system()
    };
    let plan = make_cluster_plan(16, 4).unwrap();
    let mut epochs = Vec::new();
    let mut all_converged = true;
    for trial in 0..20 {
        let channel = trial_channel(&cfg, trial_seed(707, trial)).unwrap();
        let analog = initialize_analog(&channel);
        let digital = initialize_digital(&channel, &analog, &cfg, &Scheme::rsma());
        let out = run_wmmse(&channel, &analog, &digital, &plan, &cfg, &Scheme::rsma(), &wcfg, &solver).unwrap();
        all_converged &= out.converged;
        epochs.push(out.epochs);
    }
    let max_epochs = epochs.iter().copied().max().unwrap_or(0);
    let mean = epochs.iter().sum::<usize>() as f64 / epochs.len() as f64;
    Outcome::new(
        worst_rise <= AWMSE_SLACK && all_converged && max_epochs <= WMMSE_EPOCHS,
        format!(
            "largest AWMSE rise {worst_rise:.1e} over 20 runs; full-scale RSMA G=4 at 20 dB: epochs mean {mean:.1}, max {max_epochs}, all converged {all_converged}"
        ),
    )
}

fn sweep_spec(snr: Vec<f64>, g: Vec<usize>, schemes: Vec<SchemeKind>) -> ExperimentSpec {
    ExperimentSpec {
        system: full_system(),
        pso: PsoConfig {
            swarm_size: SWEEP_PSO.0,
            iterations: SWEEP_PSO.1,
            ..PsoConfig::default()
        },
        optimizer: OptimizerConfig::default(),
        sweep: SweepConfig {
            snr_grid: snr,
            g_grid: g,
            schemes,
            trials: SWEEP_TRIALS,
            master_seed: SWEEP_SEED,
            trace_trials: 0,
        },
        output: OutputConfig::default(),
    }
}

fn rates_of(results: &ExperimentResults, scheme: SchemeKind, g: usize, snr: f64) -> Vec<(usize, f64)> {
    results
        .rows
        .iter()
        .filter(|r| r.scheme == scheme && r.clusters == g && r.snr_db == snr)
        .map(|r| (r.trial, r.sum_rate))
        .collect()
}

fn mean_and_ci(rates: &[(usize, f64)]) -> (f64, f64) {
    let v: Vec<f64> = rates.iter().map(|r| r.1).collect();
    let (m, _, ci) = mean_ci(&v);
    (m, ci.unwrap_or(f64::INFINITY))
}

/// Paired difference `a − b` over trials present in both.
fn paired(a: &[(usize, f64)], b: &[(usize, f64)]) -> (f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .filter_map(|(t, x)| b.iter().find(|(u, _)| u == t).map(|(_, y)| x - y))
        .collect();
    let (m, _, ci) = mean_ci(&d);
    (m, ci.unwrap_or(f64::INFINITY))
}

struct Sweeps {
    g1: ExperimentResults,
    rsma_25: ExperimentResults,
    secs: f64,
}

fn run_sweeps() -> Sweeps {
    let start = Instant::now();
    let g1 = run_experiment(&sweep_spec(vec![5.0, 15.0, 25.0], vec![1], SchemeKind::ALL.to_vec())).unwrap();
    let rsma_25 = run_experiment(&sweep_spec(vec![25.0], vec![4, 16], vec![SchemeKind::Rsma])).unwrap();
    Sweeps {
        g1,
        rsma_25,
        secs: start.elapsed().as_secs_f64(),
    }
}

/// 8: RSMA above SDMA and NOMA by more than the half-width of the paired
/// difference CI; G=4 above G=1.
fn scheme_ordering(s: &Sweeps) -> Outcome {
    let mut pass = s.g1.failures.is_empty();
    let mut parts = Vec::new();
    for snr in [5.0, 15.0, 25.0] {
        let rsma = rates_of(&s.g1, SchemeKind::Rsma, 1, snr);
        let (mr, cr) = mean_and_ci(&rsma);
        let mut line = format!("{snr} dB RSMA {mr:.3}±{cr:.3}");
        for other in [SchemeKind::Sdma, SchemeKind::Noma] {
            let o = rates_of(&s.g1, other, 1, snr);
            let (mo, co) = mean_and_ci(&o);
            let (md, cd) = paired(&rsma, &o);
            pass &= md > cd;
            line += &format!(", {other} {mo:.3}±{co:.3} (paired gap {md:.3}±{cd:.3})");
        }
        parts.push(line);
    }
    let g4 = rates_of(&s.rsma_25, SchemeKind::Rsma, 4, 25.0);
    let g1 = rates_of(&s.g1, SchemeKind::Rsma, 1, 25.0);
    let (m4, _) = mean_and_ci(&g4);
    let (m1, _) = mean_and_ci(&g1);
    pass &= m4 > m1;
    parts.push(format!("25 dB RSMA G=4 {m4:.3} vs G=1 {m1:.3}"));
    parts.push(format!("failures {}", s.g1.failures.len()));
    Outcome::new(pass, parts.join("; "))
}

/// 9: absolute level near the reference values (soft) and gap closure (binding).
fn reference_numbers(s: &Sweeps) -> Outcome {
    let (m4, _) = mean_and_ci(&rates_of(&s.rsma_25, SchemeKind::Rsma, 4, 25.0));
    let (mn, _) = mean_and_ci(&rates_of(&s.rsma_25, SchemeKind::Rsma, 16, 25.0));
    let within = |v: f64, target: f64| (v - target).abs() <= TARGET_BAND * target;
    let absolute = within(m4, TARGET_G4) && within(mn, TARGET_GNC);
    let gap = (mn - m4).abs() / mn;
    let closure = gap <= GAP_CLOSURE && s.rsma_25.failures.is_empty();
    Outcome {
        pass: absolute && closure,
        soft: closure,
        detail: format!(
            "RSMA 25 dB G=4 {m4:.3}, G=N_c {mn:.3} bps/Hz per subcarrier (targets {TARGET_G4}, {TARGET_GNC} ±20%: {}); G=4 within {:.2}% of G=N_c (binding ≤5%: {}); sweeps {:.0} s",
            if absolute { "met" } else { "missed" },
            gap * 100.0,
            if closure { "met" } else { "missed" },
            s.secs
        ),
    }
}

/// 10: rerunning a spec reproduces every output file byte for byte.
fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut spec = ExperimentSpec {
        system: SystemConfig {
            users: 2,
            tx_antennas: 4,
            subcarriers: 4,
            cp_len: 2,
            paths: 8,
            total_power: 4.0,
            ..SystemConfig::default()
        },
        pso: PsoConfig {
            swarm_size: 10,
            iterations: 8,
            ..PsoConfig::default()
        },
        optimizer: OptimizerConfig::default(),
        sweep: SweepConfig {
            snr_grid: vec![5.0, 25.0],
            g_grid: vec![1, 4],
            schemes: SchemeKind::ALL.to_vec(),
            trials: 3,
            master_seed: 10,
            trace_trials: 1,
        },
        output: OutputConfig::default(),
    };
    let mut written = Vec::new();
    for d in &dirs {
        spec.output.dir = d.path().to_path_buf();
        let (_, files) = execute(&spec, &|_, _| {}).unwrap();
        written.push(files);
    }
    let mut identical = written[0].len() == written[1].len() && written[0].len() >= 4;
    for (a, b) in written[0].iter().zip(&written[1]) {
        identical &= fs::read(a).unwrap() == fs::read(b).unwrap();
    }
    Outcome::new(identical, format!("{} files compared across two runs", written[0].len()))
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wants = |i: usize| selected.as_ref().is_none_or(|s| s.contains(&i));
    let sweeps = (wants(8) || wants(9)).then(run_sweeps);

    let criteria: [(usize, &str, Box<dyn Fn() -> Outcome + '_>); 10] = [
        (1, "rate-MSE identity", Box::new(rate_mse_identity)),
        (2, "channel equivalence", Box::new(channel_equivalence)),
        (3, "SIC interference oracle", Box::new(sic_interference)),
        (4, "cluster monotonicity", Box::new(cluster_monotonicity)),
        (5, "complexity table", Box::new(complexity_table)),
        (6, "optimizer sanity", Box::new(pso_sanity)),
        (7, "WMMSE descent", Box::new(wmmse_descent)),
        (8, "scheme ordering", Box::new(|| scheme_ordering(sweeps.as_ref().unwrap()))),
        (9, "reference numbers", Box::new(|| reference_numbers(sweeps.as_ref().unwrap()))),
        (10, "determinism", Box::new(determinism)),
    ];
    let mut binding_failures = 0;
    for (i, name, check) in &criteria {
        if !wants(*i) {
            println!("SKIP {i:>2} {name}");
            continue;
        }
        let out = check();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        let note = if !out.pass && out.soft { " [soft clause only]" } else { "" };
        println!("{tag} {i:>2} {name}: {}{note}", out.detail);
        if !out.pass && !out.soft {
            binding_failures += 1;
        }
    }
    if binding_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
