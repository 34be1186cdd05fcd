//! Digital precoder design by weighted MMSE and the alternating hybrid
//! optimizer.
//!
//! For fixed equalizers `g` and weights `u`, every augmented MSE
//! `ζ = u·ε − log2 u` is a convex quadratic in the digital precoder, so one
//! block update is a convex QCQP. At the optimal `(g, u)` for a given
//! precoder, `ζ = λ − R` with `λ = 1/ln 2 + log2(ln 2)`, which ties the
//! objective to the sum rate.
//!
//! The digital precoder enters the QCQP in real coordinates: each column
//! `F_BB,s,n ∈ C^K` becomes a block `[Re f; Im f]` of `2K` reals, followed by
//! the cap variables of multi-decoder streams and, for RSMA, the common-rate
//! shares `C_{k,n}`.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baselines::{Scheme, SchemeRates};
use crate::channel::{FreqChannel, SystemConfig};
use crate::error::{Error, Result};
use crate::precoder_pso::{run_abc_pso, AnalogFitness, PsoConfig};
use crate::qcqp::{QcqpFailure, QcqpProblem, QuadFn, SolverOptions};
use crate::rsma_model::{
    allocate_common_rate, rate_report, step_power_terms, total_power, ClusterPlan, DecodeStep,
    EffectiveCoefficients, HybridPrecoder,
};

/// `λ = 1/ln 2 + log2(ln 2)`.
pub const LAMBDA: f64 = 0.913_928_667_944_065_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmmseConfig {
    /// Stop once the sum rate changes by less than this fraction between epochs.
    pub tol: f64,
    pub max_epochs: usize,
    /// Try a step past each precoder update, kept only if it raises the sum rate.
    pub extrapolate: bool,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_epochs: 30,
            extrapolate: true,
        }
    }
}

/// Per-step equalizer `g`, MSE `ε` and weight `u`, indexed `[step][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Receivers {
    pub equalizers: Vec<Vec<Complex64>>,
    pub mse: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
}

/// MMSE equalizers `g = c*/T` and the resulting MSEs `ε = 1 − |c|²/T`.
pub fn mmse_equalizers(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    steps: &[DecodeStep],
) -> (Vec<Vec<Complex64>>, Vec<Vec<f64>>) {
    steps
        .iter()
        .map(|step| {
            let (_, interference) = step_power_terms(coeffs, plan, noise_var, step);
            (0..coeffs.subcarriers())
                .map(|n| {
                    let c = coeffs.coeff(step.user, step.stream, n, n);
                    let t = c.norm_sqr() + interference[n];
                    (c.conj() / t, interference[n] / t)
                })
                .unzip()
        })
        .unzip()
}

/// MSE `ε = |g|²T − 2Re{g·c} + 1` for arbitrary equalizers.
pub fn mse_values(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    steps: &[DecodeStep],
    equalizers: &[Vec<Complex64>],
) -> Vec<Vec<f64>> {
    steps
        .iter()
        .zip(equalizers)
        .map(|(step, g)| {
            let (total, _) = step_power_terms(coeffs, plan, noise_var, step);
            (0..coeffs.subcarriers())
                .map(|n| {
                    let c = coeffs.coeff(step.user, step.stream, n, n);
                    g[n].norm_sqr() * total[n] - 2.0 * (g[n] * c).re + 1.0
                })
                .collect()
        })
        .collect()
}

/// `u = 1/(ε·ln 2)`, the minimizer of `u·ε − log2 u`.
pub fn optimal_weights(mse: &[Vec<f64>]) -> Vec<Vec<f64>> {
    mse.iter()
        .map(|row| row.iter().map(|e| 1.0 / (e * LN_2)).collect())
        .collect()
}

pub fn receivers(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    steps: &[DecodeStep],
) -> Receivers {
    let (equalizers, mse) = mmse_equalizers(coeffs, plan, noise_var, steps);
    let weights = optimal_weights(&mse);
    Receivers {
        equalizers,
        mse,
        weights,
    }
}

fn augmented(u: f64, eps: f64) -> f64 {
    u * eps - u.log2()
}

/// Augmented WMMSE objective: for every stream and subcarrier, the largest
/// `ζ` among the users that decode it.
pub fn awmse(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    steps: &[DecodeStep],
    rx: &Receivers,
) -> f64 {
    let mse = mse_values(coeffs, plan, noise_var, steps, &rx.equalizers);
    let n_c = coeffs.subcarriers();
    let mut worst = DMatrix::from_element(coeffs.streams(), n_c, f64::NEG_INFINITY);
    for (i, step) in steps.iter().enumerate() {
        for n in 0..n_c {
            let z = augmented(rx.weights[i][n], mse[i][n]);
            let w = &mut worst[(step.stream, n)];
            *w = w.max(z);
        }
    }
    worst.iter().filter(|v| v.is_finite()).sum()
}

/// Variable layout of the digital-precoder QCQP.
#[derive(Debug, Clone)]
struct Layout {
    users: usize,
    subcarriers: usize,
    streams: Vec<usize>,
    /// Streams whose per-subcarrier term is a cap variable.
    capped: Vec<usize>,
    cap_offset: usize,
    share_offset: Option<usize>,
    dim: usize,
}

impl Layout {
    fn new(users: usize, subcarriers: usize, scheme: &Scheme, steps: &[DecodeStep]) -> Self {
        let streams = scheme.active_streams(users);
        let capped: Vec<usize> = streams
            .iter()
            .copied()
            .filter(|&s| {
                (s == 0 && scheme.uses_common()) || steps.iter().filter(|st| st.stream == s).count() > 1
            })
            .collect();
        let cap_offset = subcarriers * streams.len() * 2 * users;
        let after_caps = cap_offset + capped.len() * subcarriers;
        let share_offset = scheme.uses_common().then_some(after_caps);
        let dim = after_caps + if scheme.uses_common() { users * subcarriers } else { 0 };
        Self {
            users,
            subcarriers,
            streams,
            capped,
            cap_offset,
            share_offset,
            dim,
        }
    }

    fn block_dim(&self) -> usize {
        2 * self.users
    }

    fn block(&self, s: usize, n: usize) -> Option<usize> {
        self.streams
            .iter()
            .position(|&x| x == s)
            .map(|i| n * self.streams.len() + i)
    }

    fn cap(&self, s: usize, n: usize) -> Option<usize> {
        self.capped
            .iter()
            .position(|&x| x == s)
            .map(|i| self.cap_offset + i * self.subcarriers + n)
    }

    fn share(&self, k: usize, n: usize) -> usize {
        self.share_offset.expect("common-rate shares exist") + k * self.subcarriers + n
    }

    fn pack(&self, digital: &[DMatrix<Complex64>], x: &mut [f64]) {
        let k = self.users;
        for n in 0..self.subcarriers {
            for &s in &self.streams {
                let off = self.block(s, n).unwrap() * 2 * k;
                for j in 0..k {
                    x[off + j] = digital[n][(j, s)].re;
                    x[off + k + j] = digital[n][(j, s)].im;
                }
            }
        }
    }

    fn unpack(&self, x: &[f64]) -> Vec<DMatrix<Complex64>> {
        let k = self.users;
        (0..self.subcarriers)
            .map(|n| {
                let mut d = DMatrix::zeros(k, k + 1);
                for &s in &self.streams {
                    let off = self.block(s, n).unwrap() * 2 * k;
                    for j in 0..k {
                        d[(j, s)] = Complex64::new(x[off + j], x[off + k + j]);
                    }
                }
                d
            })
            .collect()
    }
}

/// Dense accumulator for block quadratics.
struct BlockAcc {
    bd: usize,
    blocks: Vec<Option<Vec<f64>>>,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

impl BlockAcc {
    fn new(bd: usize, count: usize) -> Self {
        Self {
            bd,
            blocks: vec![None; count],
            linear: Vec::new(),
            constant: 0.0,
        }
    }

    /// Adds `scale·|bᵀf|²` on block `blk`.
    fn add_rank_one(&mut self, blk: usize, b: &[Complex64], scale: f64) {
        let k = b.len();
        let bd = self.bd;
        let q = self.blocks[blk].get_or_insert_with(|| vec![0.0; bd * bd]);
        // ½zᵀHz with H = 2·[[P, −Q], [Q, P]], P + jQ = conj(b)·bᵀ
        for i in 0..k {
            for j in 0..k {
                let m = b[i].conj() * b[j] * (2.0 * scale);
                q[i * bd + j] += m.re;
                q[(i + k) * bd + k + j] += m.re;
                q[i * bd + k + j] -= m.im;
                q[(i + k) * bd + j] += m.im;
            }
        }
    }

    /// Adds `scale·fᴴMf` for Hermitian `M` on block `blk`.
    fn add_hermitian(&mut self, blk: usize, m: &DMatrix<Complex64>, scale: f64) {
        let k = m.nrows();
        let bd = self.bd;
        let q = self.blocks[blk].get_or_insert_with(|| vec![0.0; bd * bd]);
        for i in 0..k {
            for j in 0..k {
                let v = m[(i, j)] * (2.0 * scale);
                q[i * bd + j] += v.re;
                q[(i + k) * bd + k + j] += v.re;
                q[i * bd + k + j] -= v.im;
                q[(i + k) * bd + j] += v.im;
            }
        }
    }

    /// Adds `Re{aᵀf}` on block `blk`.
    fn add_real_part(&mut self, blk: usize, a: &[Complex64]) {
        let k = a.len();
        let off = blk * self.bd;
        for (j, aj) in a.iter().enumerate() {
            self.linear.push((off + j, aj.re));
            self.linear.push((off + k + j, -aj.im));
        }
    }

    fn add(&mut self, f: &QuadFn) {
        for (b, q) in &f.blocks {
            let bd = self.bd;
            let acc = self.blocks[*b].get_or_insert_with(|| vec![0.0; bd * bd]);
            acc.iter_mut().zip(q).for_each(|(a, v)| *a += v);
        }
        self.linear.extend_from_slice(&f.linear);
        self.constant += f.constant;
    }

    fn finish(self) -> QuadFn {
        let mut linear = self.linear;
        linear.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(linear.len());
        for (i, v) in linear {
            match merged.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => merged.push((i, v)),
            }
        }
        QuadFn {
            blocks: self
                .blocks
                .into_iter()
                .enumerate()
                .filter_map(|(b, q)| q.map(|q| (b, q)))
                .collect(),
            linear: merged,
            constant: self.constant,
        }
    }
}

/// `b_{k,n,n'} = F_RFᵀ·r_{k,n,n'}`, so that `c_{k,s,n,n'} = b_{k,n,n'}ᵀ·F_BB,s,n'`.
struct ReducedChannel {
    users: usize,
    subcarriers: usize,
    data: Vec<Complex64>,
}

impl ReducedChannel {
    fn new(channel: &FreqChannel, analog: &DMatrix<Complex64>) -> Self {
        let (users, n_c, n_t) = (channel.users(), channel.subcarriers(), channel.antennas());
        let cols = analog.ncols();
        let mut data = Vec::with_capacity(users * n_c * n_c * cols);
        for k in 0..users {
            for n in 0..n_c {
                for np in 0..n_c {
                    let row = channel.row(k, n, np);
                    for j in 0..cols {
                        let mut acc = Complex64::default();
                        for m in 0..n_t {
                            acc += row[m] * analog[(m, j)];
                        }
                        data.push(acc);
                    }
                }
            }
        }
        Self {
            users: cols,
            subcarriers: n_c,
            data,
        }
    }

    fn get(&self, k: usize, n: usize, np: usize) -> &[Complex64] {
        let base = ((k * self.subcarriers + n) * self.subcarriers + np) * self.users;
        &self.data[base..base + self.users]
    }
}

/// Builds the convex subproblem for fixed receivers.
struct Subproblem<'a> {
    layout: Layout,
    reduced: ReducedChannel,
    plan: &'a ClusterPlan,
    steps: &'a [DecodeStep],
    cfg: &'a SystemConfig,
    gram: DMatrix<Complex64>,
}

impl<'a> Subproblem<'a> {
    fn block_count(&self) -> usize {
        self.layout.subcarriers * self.layout.streams.len()
    }

    /// `ζ` of decode step `i` on subcarrier `n` as a quadratic.
    fn zeta(&self, i: usize, n: usize, rx: &Receivers) -> QuadFn {
        let step = &self.steps[i];
        let (g, u) = (rx.equalizers[i][n], rx.weights[i][n]);
        let mut acc = BlockAcc::new(self.layout.block_dim(), self.block_count());
        let w = u * g.norm_sqr();
        for &s in &self.layout.streams {
            if step.cancelled.contains(&s) {
                continue;
            }
            for np in 0..self.layout.subcarriers {
                if s == step.stream && np != n && !self.plan.interferes(n, np) {
                    continue;
                }
                if w > 0.0 {
                    let blk = self.layout.block(s, np).unwrap();
                    acc.add_rank_one(blk, self.reduced.get(step.user, n, np), w);
                }
            }
        }
        let a: Vec<Complex64> = self
            .reduced
            .get(step.user, n, n)
            .iter()
            .map(|b| g * b * (-2.0 * u))
            .collect();
        acc.add_real_part(self.layout.block(step.stream, n).unwrap(), &a);
        acc.constant = w * self.cfg.noise_var + u - u.log2();
        acc.finish()
    }

    /// The subproblem and the indices of its QoS constraints.
    fn build(&self, rx: &Receivers) -> (QcqpProblem, std::ops::Range<usize>) {
        let lay = &self.layout;
        let (users, n_c) = (lay.users, lay.subcarriers);
        let bd = lay.block_dim();
        let nb = self.block_count();
        let mut objective = BlockAcc::new(bd, nb);
        let mut constraints = Vec::new();
        // per-user sum of its own stream's terms, for the QoS constraint
        let mut qos: Vec<BlockAcc> = (0..users).map(|_| BlockAcc::new(bd, nb)).collect();

        for &s in &lay.streams {
            for n in 0..n_c {
                if let Some(cap) = lay.cap(s, n) {
                    objective.linear.push((cap, 1.0));
                    if s > 0 {
                        qos[s - 1].linear.push((cap, 1.0));
                    }
                }
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            for n in 0..n_c {
                let z = self.zeta(i, n, rx);
                match lay.cap(step.stream, n) {
                    Some(cap) => {
                        let mut c = z;
                        c.linear.push((cap, -1.0));
                        constraints.push(c);
                    }
                    None => {
                        objective.add(&z);
                        if step.stream > 0 {
                            qos[step.stream - 1].add(&z);
                        }
                    }
                }
            }
        }
        let qos_rows = constraints.len()..constraints.len() + users;
        for (k, mut acc) in qos.into_iter().enumerate() {
            acc.constant += self.cfg.min_rates[k] - n_c as f64 * LAMBDA;
            if lay.share_offset.is_some() {
                for n in 0..n_c {
                    acc.linear.push((lay.share(k, n), -1.0));
                }
            }
            constraints.push(acc.finish());
        }
        if lay.share_offset.is_some() {
            for n in 0..n_c {
                let mut terms = vec![(lay.cap(0, n).unwrap(), 1.0)];
                terms.extend((0..users).map(|k| (lay.share(k, n), 1.0)));
                constraints.push(QuadFn::linear(terms, -LAMBDA));
                for k in 0..users {
                    constraints.push(QuadFn::linear(vec![(lay.share(k, n), -1.0)], 0.0));
                }
            }
        }
        let mut power = BlockAcc::new(bd, nb);
        for blk in 0..nb {
            power.add_hermitian(blk, &self.gram, 1.0);
        }
        power.constant = -self.cfg.total_power;
        constraints.push(power.finish());

        let problem = QcqpProblem {
            dim: lay.dim,
            block_dim: bd,
            objective: objective.finish(),
            constraints,
        };
        (problem, qos_rows)
    }

    /// Starting point from a digital precoder: tight caps plus a margin,
    /// and common shares splitting the remaining common budget.
    fn start(&self, digital: &[DMatrix<Complex64>], problem: &QcqpProblem, rx: &Receivers) -> Vec<f64> {
        let lay = &self.layout;
        let mut x = vec![0.0; lay.dim];
        let p = total_power(&self.gram_root(), digital);
        // the barrier needs a strictly interior start
        let budget = self.cfg.total_power * (1.0 - 1e-6);
        let scale = if p > budget {
            (budget / p).sqrt()
        } else {
            1.0
        };
        let scaled: Vec<_> = digital.iter().map(|d| d * Complex64::new(scale, 0.0)).collect();
        lay.pack(&scaled, &mut x);
        for &s in &lay.capped {
            for n in 0..lay.subcarriers {
                let z = self
                    .steps
                    .iter()
                    .enumerate()
                    .filter(|(_, st)| st.stream == s)
                    .map(|(i, _)| self.zeta(i, n, rx).eval(&x, lay.block_dim()))
                    .fold(f64::NEG_INFINITY, f64::max);
                x[lay.cap(s, n).unwrap()] = z + 1e-7 * (1.0 + z.abs());
            }
        }
        if lay.share_offset.is_some() {
            for n in 0..lay.subcarriers {
                let slack = LAMBDA - x[lay.cap(0, n).unwrap()];
                let each = (slack / (lay.users + 1) as f64).max(1e-9);
                for k in 0..lay.users {
                    x[lay.share(k, n)] = each;
                }
            }
        }
        debug_assert_eq!(problem.dim, x.len());
        x
    }

    fn gram_root(&self) -> DMatrix<Complex64> {
        // total_power(F_RF, ·) only needs F_RFᴴF_RF; its Cholesky factor
        // reproduces the same quadratic form
        match self.gram.clone().cholesky() {
            Some(c) => c.l().adjoint(),
            None => {
                let eig = self.gram.clone().symmetric_eigen();
                let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0)));
                d * eig.eigenvectors.adjoint()
            }
        }
    }
}

/// Common-stream power share when refining a private-only solution.
const PRIVATE_START_COMMON_SHARE: f64 = 0.02;

/// Result of a WMMSE run for a fixed analog precoder.
#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    pub digital: Vec<DMatrix<Complex64>>,
    /// Common-rate shares from the last subproblem, K×N_c (zero without a
    /// common stream).
    pub common_shares: DMatrix<f64>,
    /// Objective after each block update: receivers, then precoder.
    pub trace: Vec<f64>,
    /// Sum rate after each epoch.
    pub sum_rate_trace: Vec<f64>,
    /// KKT residual of each subproblem solve.
    pub kkt_residuals: Vec<f64>,
    /// Epochs run, restoration epochs included.
    pub epochs: usize,
    /// Epochs spent reducing the QoS violation before the first feasible subproblem.
    pub restorations: usize,
    /// Epochs whose update was replaced by an accepted extrapolation.
    pub extrapolations: usize,
    pub converged: bool,
}

/// Runs WMMSE epochs until the objective settles.
#[allow(clippy::too_many_arguments)]
pub fn run_wmmse(
    channel: &FreqChannel,
    analog: &DMatrix<Complex64>,
    digital: &[DMatrix<Complex64>],
    plan: &ClusterPlan,
    cfg: &SystemConfig,
    scheme: &Scheme,
    wcfg: &WmmseConfig,
    solver: &SolverOptions,
) -> Result<WmmseOutcome> {
    let users = channel.users();
    let n_c = channel.subcarriers();
    if analog.shape() != (channel.antennas(), users) || digital.len() != n_c {
        return Err(Error::Dimension("precoders do not match the channel".into()));
    }
    if cfg.min_rates.len() != users {
        return Err(Error::Dimension("one minimum rate per user is required".into()));
    }
    let steps = scheme.decode_steps(users);
    let layout = Layout::new(users, n_c, scheme, &steps);
    let sub = Subproblem {
        reduced: ReducedChannel::new(channel, analog),
        layout,
        plan,
        steps: &steps,
        cfg,
        gram: analog.adjoint() * analog,
    };
    let mut current: Vec<DMatrix<Complex64>> = digital.to_vec();
    if !scheme.uses_common() {
        for d in &mut current {
            d.column_mut(0).fill(Complex64::default());
        }
    }
    let mut out = WmmseOutcome {
        digital: current.clone(),
        common_shares: DMatrix::zeros(users, n_c),
        trace: Vec::new(),
        sum_rate_trace: Vec::new(),
        kkt_residuals: Vec::new(),
        epochs: 0,
        restorations: 0,
        extrapolations: 0,
        converged: false,
    };
    let mut previous = {
        let coeffs = EffectiveCoefficients::compute(channel, analog, &current)?;
        scheme.evaluate(&coeffs, plan, cfg.noise_var).sum_rate
    };
    // QoS restoration: while the current point misses the minimum rates the
    // subproblem is usually infeasible, so the QoS violation is minimized
    // instead until the restriction admits a feasible point
    let mut restoring_from = f64::INFINITY;
    for epoch in 0..wcfg.max_epochs {
        let coeffs = EffectiveCoefficients::compute(channel, analog, &current)?;
        let rx = receivers(&coeffs, plan, cfg.noise_var, &steps);
        let before = awmse(&coeffs, plan, cfg.noise_var, &steps, &rx);
        let (problem, qos_rows) = sub.build(&rx);
        let x0 = sub.start(&current, &problem, &rx);
        let solved = match problem.solve(&x0, solver) {
            Ok(s) => s,
            Err(QcqpFailure::NotConverged(s)) if problem.max_violation(&s.x) <= 0.0 => s,
            Err(QcqpFailure::NotConverged(s)) => {
                return Err(Error::NotConverged {
                    iterations: s.iterations,
                    residual: s.kkt_residual,
                })
            }
            Err(QcqpFailure::Infeasible { .. }) if !out.sum_rate_trace.is_empty() => break,
            Err(QcqpFailure::Infeasible { .. }) => {
                let infeasible = || {
                    let rates = scheme.evaluate(&coeffs, plan, cfg.noise_var);
                    Error::Infeasible {
                        deficits: rate_shortfalls(scheme, &rates, &cfg.min_rates),
                    }
                };
                let values = problem.constraint_values(&x0);
                let soft: Vec<usize> = (0..values.len())
                    .filter(|i| qos_rows.contains(i) || values[*i] >= 0.0)
                    .collect();
                let (x, violation) = problem
                    .least_violation(&x0, &soft, solver)
                    .map_err(|_| infeasible())?;
                // stalled: the violation no longer shrinks by a useful amount
                if violation >= restoring_from - 1e-6 * (1.0 + restoring_from.abs()) {
                    return Err(infeasible());
                }
                restoring_from = violation;
                out.restorations += 1;
                out.epochs = epoch + 1;
                current = sub.layout.unpack(&x);
                let coeffs = EffectiveCoefficients::compute(channel, analog, &current)?;
                previous = scheme.evaluate(&coeffs, plan, cfg.noise_var).sum_rate;
                continue;
            }
        };
        out.trace.push(before);
        out.kkt_residuals.push(solved.kkt_residual);
        out.trace.push(solved.objective);
        let before_update = std::mem::replace(&mut current, sub.layout.unpack(&solved.x));
        if let Some(_) = sub.layout.share_offset {
            out.common_shares = DMatrix::from_fn(users, n_c, |k, n| solved.x[sub.layout.share(k, n)]);
        }
        let coeffs = EffectiveCoefficients::compute(channel, analog, &current)?;
        let mut rate = scheme.evaluate(&coeffs, plan, cfg.noise_var).sum_rate;
        if wcfg.extrapolate {
            // at MMSE receivers the objective is a constant minus the sum
            // rate, so a higher-rate point keeps the trace non-increasing
            let mut best: Option<Vec<DMatrix<Complex64>>> = None;
            for beta in [4.0, 2.0, 1.0, 0.5] {
                let mut trial: Vec<DMatrix<Complex64>> = current
                    .iter()
                    .zip(&before_update)
                    .map(|(new, old)| new + (new - old) * Complex64::new(beta, 0.0))
                    .collect();
                let p = total_power(analog, &trial);
                if p > cfg.total_power {
                    let scale = Complex64::new((cfg.total_power / p).sqrt(), 0.0);
                    trial.iter_mut().for_each(|d| *d *= scale);
                }
                let coeffs = EffectiveCoefficients::compute(channel, analog, &trial)?;
                let rates = scheme.evaluate(&coeffs, plan, cfg.noise_var);
                if rates.sum_rate > rate && scheme.qos_satisfied(&rates, &cfg.min_rates) {
                    best = Some(trial);
                    rate = rates.sum_rate;
                }
            }
            if let Some(trial) = best {
                current = trial;
                out.extrapolations += 1;
            }
        }
        out.sum_rate_trace.push(rate);
        out.epochs = epoch + 1;
        let change = (rate - previous).abs() / previous.abs().max(1e-12);
        previous = rate;
        if change < wcfg.tol {
            out.converged = true;
            break;
        }
    }
    if out.sum_rate_trace.is_empty() {
        let coeffs = EffectiveCoefficients::compute(channel, analog, &current)?;
        let rates = scheme.evaluate(&coeffs, plan, cfg.noise_var);
        return Err(Error::Infeasible {
            deficits: rate_shortfalls(scheme, &rates, &cfg.min_rates),
        });
    }
    out.digital = current;
    Ok(out)
}

/// Per-user shortfalls, net of what the common stream can cover for RSMA.
fn rate_shortfalls(scheme: &Scheme, rates: &SchemeRates, min_rates: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = rates
        .user_rates
        .iter()
        .zip(min_rates)
        .map(|(have, need)| (need - have).max(0.0))
        .collect();
    if !scheme.uses_common() {
        return raw;
    }
    let mut budget = rates.common_total();
    raw.into_iter()
        .map(|d| {
            let take = d.min(budget);
            budget -= take;
            d - take
        })
        .collect()
}

/// Analog initialization: per user, the phases of the principal eigenvector
/// of its aggregate diagonal channel covariance.
pub fn initialize_analog(channel: &FreqChannel) -> DMatrix<Complex64> {
    let (users, n_t, n_c) = (channel.users(), channel.antennas(), channel.subcarriers());
    let mut analog = DMatrix::zeros(n_t, users);
    for k in 0..users {
        let mut cov = DMatrix::<Complex64>::zeros(n_t, n_t);
        for n in 0..n_c {
            let r = channel.row(k, n, n);
            for i in 0..n_t {
                for j in 0..n_t {
                    cov[(i, j)] += r[i].conj() * r[j];
                }
            }
        }
        let eig = cov.symmetric_eigen();
        let top = eig.eigenvalues.imax();
        for m in 0..n_t {
            let z = eig.eigenvectors[(m, top)];
            analog[(m, k)] = if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
        }
    }
    analog
}

/// Digital initialization: regularized zero forcing for private streams,
/// the dominant direction of all users' reduced channels for the common
/// stream, and equal power per active stream and subcarrier summing to the
/// budget.
pub fn initialize_digital(
    channel: &FreqChannel,
    analog: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    scheme: &Scheme,
) -> Vec<DMatrix<Complex64>> {
    let streams = scheme.active_streams(channel.users()).len();
    initialize_digital_split(channel, analog, cfg, scheme, 1.0 / streams as f64)
}

/// As [`initialize_digital`], with the common stream given `common_share`
/// of each subcarrier's power and the private streams splitting the rest.
pub fn initialize_digital_split(
    channel: &FreqChannel,
    analog: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    scheme: &Scheme,
    common_share: f64,
) -> Vec<DMatrix<Complex64>> {
    let (users, n_c) = (channel.users(), channel.subcarriers());
    let reduced = ReducedChannel::new(channel, analog);
    let streams = scheme.active_streams(users);
    let per_subcarrier = cfg.total_power / n_c as f64;
    let (common_power, private_power) = if scheme.uses_common() {
        let c = common_share.clamp(0.0, 1.0);
        (c * per_subcarrier, (1.0 - c) * per_subcarrier / (streams.len() - 1).max(1) as f64)
    } else {
        (0.0, per_subcarrier / streams.len() as f64)
    };
    (0..n_c)
        .map(|n| {
            let mut d = DMatrix::<Complex64>::zeros(users, users + 1);
            // regularized zero forcing on the reduced channel B (rows bᵀ)
            let b = DMatrix::from_fn(users, users, |k, j| reduced.get(k, n, n)[j]);
            let alpha = users as f64 * cfg.noise_var / (cfg.total_power / n_c as f64);
            let gram = &b * b.adjoint() + DMatrix::<Complex64>::identity(users, users) * Complex64::new(alpha, 0.0);
            let rzf = gram
                .try_inverse()
                .map(|inv| b.adjoint() * inv)
                .unwrap_or_else(|| b.adjoint());
            let private: Vec<Vec<Complex64>> = (0..users).map(|k| rzf.column(k).iter().copied().collect()).collect();
            for &s in &streams {
                let dir: Vec<Complex64> = if s == 0 {
                    let mut m = DMatrix::<Complex64>::zeros(users, users);
                    for k in 0..users {
                        let b = reduced.get(k, n, n);
                        for i in 0..users {
                            for j in 0..users {
                                m[(i, j)] += b[i].conj() * b[j];
                            }
                        }
                    }
                    let eig = m.symmetric_eigen();
                    let top = eig.eigenvalues.imax();
                    eig.eigenvectors.column(top).iter().copied().collect()
                } else {
                    private[s - 1].clone()
                };
                let beam_power: f64 = {
                    let f = DMatrix::from_column_slice(users, 1, &dir);
                    (analog * f).iter().map(|z| z.norm_sqr()).sum()
                };
                let target = if s == 0 { common_power } else { private_power };
                let scale = if beam_power > 0.0 {
                    (target / beam_power).sqrt()
                } else {
                    0.0
                };
                for j in 0..users {
                    d[(j, s)] = dir[j] * scale;
                }
            }
            d
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Alternations of analog (PSO) and digital (WMMSE) updates.
    pub outer_rounds: usize,
    pub wmmse: WmmseConfig,
    /// With a common stream, also optimize without it and refine that
    /// solution with a small common stream; the better result is kept.
    pub private_start: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            outer_rounds: 3,
            wmmse: WmmseConfig::default(),
            private_start: true,
        }
    }
}

/// Best hybrid precoder found by the alternating optimizer.
#[derive(Debug, Clone)]
pub struct HybridSolution {
    pub precoder: HybridPrecoder,
    pub rates: SchemeRates,
    pub sum_rate: f64,
    /// QoS met by the returned precoder.
    pub feasible: bool,
    /// Global-best fitness traces, one per PSO run.
    pub pso_traces: Vec<Vec<f64>>,
    /// Objective traces, one per WMMSE run.
    pub wmmse_traces: Vec<Vec<f64>>,
    /// Sum rate per epoch, one per WMMSE run.
    pub rate_traces: Vec<Vec<f64>>,
    /// Epochs used by each WMMSE run.
    pub wmmse_epochs: Vec<usize>,
    pub max_kkt_residual: f64,
    pub fallback_rescales: usize,
}

/// Alternates PSO over `F_RF` and WMMSE over `F_BB`, keeping the best
/// QoS-feasible iterate.
pub fn optimize_hybrid(
    channel: &FreqChannel,
    plan: &ClusterPlan,
    cfg: &SystemConfig,
    scheme: &Scheme,
    pso: &PsoConfig,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<HybridSolution> {
    cfg.validate()?;
    pso.validate()?;
    let solver = SolverOptions::default();
    let mut analog = initialize_analog(channel);
    let mut pso_traces = Vec::new();
    let mut wmmse_traces = Vec::new();
    let mut rate_traces = Vec::new();
    let mut wmmse_epochs = Vec::new();
    let mut max_kkt: f64 = 0.0;
    let mut rescales = 0;
    let mut record = |w: &WmmseOutcome, max_kkt: &mut f64| {
        *max_kkt = w.kkt_residuals.iter().copied().fold(*max_kkt, f64::max);
        wmmse_traces.push(w.trace.clone());
        rate_traces.push(w.sum_rate_trace.clone());
        wmmse_epochs.push(w.epochs);
    };
    let score = |analog: &DMatrix<Complex64>, digital: &[DMatrix<Complex64>]| {
        AnalogFitness::new(channel, digital, plan, cfg, scheme).eval(analog)
    };

    let initial_digital = initialize_digital(channel, &analog, cfg, scheme);
    let mut digital = match run_wmmse(channel, &analog, &initial_digital, plan, cfg, scheme, &opt.wmmse, &solver) {
        Ok(w) => {
            record(&w, &mut max_kkt);
            w.digital
        }
        Err(Error::Infeasible { .. }) | Err(Error::NotConverged { .. }) => initial_digital,
        Err(e) => return Err(e),
    };
    let mut best = (score(&analog, &digital), analog.clone(), digital.clone());

    for round in 0..opt.outer_rounds {
        let round_seed = seed.wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let stage = run_abc_pso(channel, &digital, plan, cfg, scheme, pso, round_seed, Some(&analog))?;
        pso_traces.push(stage.outcome.trace.clone());
        if stage.rescaled {
            rescales += 1;
            digital = stage.digital;
        }
        if score(&stage.outcome.analog, &digital) >= score(&analog, &digital) {
            analog = stage.outcome.analog;
        }
        match run_wmmse(channel, &analog, &digital, plan, cfg, scheme, &opt.wmmse, &solver) {
            Ok(w) => {
                record(&w, &mut max_kkt);
                digital = w.digital;
            }
            Err(Error::Infeasible { .. }) | Err(Error::NotConverged { .. }) => {}
            Err(e) => return Err(e),
        }
        let s = score(&analog, &digital);
        let improvement = (s - best.0) / best.0.abs().max(1e-12);
        if s > best.0 {
            best = (s, analog.clone(), digital.clone());
        }
        if round > 0 && improvement < 1e-3 {
            break;
        }
    }

    if scheme.uses_common() && opt.private_start {
        // Every private-only precoder is also a point of this scheme with an
        // idle common stream, so its optimum is a lower bound worth refining.
        let private_opt = OptimizerConfig {
            private_start: false,
            ..opt.clone()
        };
        let private = optimize_hybrid(channel, plan, cfg, &Scheme::sdma(), pso, &private_opt, seed)?;
        max_kkt = max_kkt.max(private.max_kkt_residual);
        let private_analog = private.precoder.analog;
        let private_digital = private.precoder.digital;
        let keep = Complex64::new((1.0 - PRIVATE_START_COMMON_SHARE).sqrt(), 0.0);
        let common = initialize_digital_split(channel, &private_analog, cfg, scheme, PRIVATE_START_COMMON_SHARE);
        let start: Vec<DMatrix<Complex64>> = private_digital
            .iter()
            .zip(&common)
            .map(|(d, c)| {
                let mut d = d * keep;
                d.set_column(0, &c.column(0));
                d
            })
            .collect();
        let mut candidates = vec![private_digital];
        match run_wmmse(channel, &private_analog, &start, plan, cfg, scheme, &opt.wmmse, &solver) {
            Ok(w) => {
                record(&w, &mut max_kkt);
                candidates.push(w.digital);
            }
            Err(Error::Infeasible { .. }) | Err(Error::NotConverged { .. }) => {}
            Err(e) => return Err(e),
        }
        for digital in candidates {
            let s = score(&private_analog, &digital);
            if s > best.0 {
                best = (s, private_analog.clone(), digital);
            }
        }
    }

    let (_, analog, mut digital) = best;
    if !scheme.uses_common() {
        for d in &mut digital {
            d.column_mut(0).fill(Complex64::default());
        }
    }
    let mut precoder = HybridPrecoder::new(analog, digital)?;
    let coeffs = EffectiveCoefficients::compute(channel, &precoder.analog, &precoder.digital)?;
    let rates = scheme.evaluate(&coeffs, plan, cfg.noise_var);
    let feasible = precoder.total_power() <= cfg.total_power * (1.0 + 1e-9)
        && scheme.qos_satisfied(&rates, &cfg.min_rates);
    if scheme.uses_common() && feasible {
        let report = rate_report(&coeffs, plan, cfg.noise_var);
        if let Ok(alloc) = allocate_common_rate(&report, &cfg.min_rates) {
            precoder.common_alloc = alloc;
        }
    }
    Ok(HybridSolution {
        sum_rate: rates.sum_rate,
        precoder,
        rates,
        feasible,
        pso_traces,
        wmmse_traces,
        rate_traces,
        wmmse_epochs,
        max_kkt_residual: max_kkt,
        fallback_rescales: rescales,
    })
}
