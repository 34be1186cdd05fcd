//! Rate-splitting transmission over the ICI channel and the hybrid SIC
//! receiver's rate accounting.
//!
//! Subcarriers are grouped into ordered clusters. Inside a cluster the
//! receiver decodes in parallel; across clusters it decodes serially, so a
//! subcarrier only suffers own-stream ICI from its own cluster and the
//! clusters decoded after it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};

/// Ordered partition of the subcarriers into SIC clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterPlan {
    clusters: Vec<Vec<usize>>,
    decode_order: Vec<usize>,
    /// Decode rank of the cluster holding each subcarrier.
    rank: Vec<usize>,
}

impl ClusterPlan {
    /// Builds a plan from explicit clusters (0-based subcarrier indices) and a
    /// decode order over cluster indices.
    pub fn new(clusters: Vec<Vec<usize>>, decode_order: Vec<usize>) -> Result<Self> {
        let g = clusters.len();
        if g == 0 {
            return Err(Error::Argument("cluster plan needs at least one cluster".into()));
        }
        let mut order_seen = vec![false; g];
        if decode_order.len() != g {
            return Err(Error::Argument("decode order must list every cluster once".into()));
        }
        for &c in &decode_order {
            if c >= g || std::mem::replace(&mut order_seen[c], true) {
                return Err(Error::Argument("decode order is not a permutation".into()));
            }
        }
        let n_c: usize = clusters.iter().map(Vec::len).sum();
        let mut rank = vec![usize::MAX; n_c];
        for (pos, &c) in decode_order.iter().enumerate() {
            if clusters[c].is_empty() {
                return Err(Error::Argument(format!("cluster {c} is empty")));
            }
            for &n in &clusters[c] {
                if n >= n_c || rank[n] != usize::MAX {
                    return Err(Error::Argument(format!(
                        "subcarrier {n} is out of range or listed twice"
                    )));
                }
                rank[n] = pos;
            }
        }
        Ok(Self {
            clusters,
            decode_order,
            rank,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.rank.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn decode_order(&self) -> &[usize] {
        &self.decode_order
    }

    /// Clusters in the order the receiver decodes them.
    pub fn ordered_clusters(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.decode_order.iter().map(|&c| self.clusters[c].as_slice())
    }

    /// Position in the decode order of the cluster containing `n`.
    pub fn decode_rank(&self, n: usize) -> usize {
        self.rank[n]
    }

    /// Whether subcarrier `np` still interferes with `n` under this plan,
    /// i.e. `np` lies in `n`'s cluster or in one decoded after it.
    #[inline]
    pub fn interferes(&self, n: usize, np: usize) -> bool {
        self.rank[np] >= self.rank[n]
    }

    /// The interference set of subcarrier `n` (includes `n` itself).
    pub fn interference_set(&self, n: usize) -> Vec<usize> {
        (0..self.subcarriers())
            .filter(|&np| self.interferes(n, np))
            .collect()
    }

    /// Number of (later, earlier) subcarrier pairs separated by a serial SIC
    /// boundary: `(N_c² − Σ_g b_g²)/2`.
    pub fn cross_cluster_pairs(&self) -> usize {
        let n = self.subcarriers();
        let within: usize = self.clusters.iter().map(|c| c.len() * c.len()).sum();
        (n * n - within) / 2
    }
}

/// Contiguous, evenly sized clusters decoded in ascending order. When `G`
/// does not divide `N_c` the first `N_c mod G` clusters get one extra subcarrier.
pub fn make_cluster_plan(subcarriers: usize, clusters: usize) -> Result<ClusterPlan> {
    if clusters == 0 || clusters > subcarriers {
        return Err(Error::Argument(format!(
            "cluster count {clusters} outside 1..={subcarriers}"
        )));
    }
    let base = subcarriers / clusters;
    let extra = subcarriers % clusters;
    let mut start = 0;
    let parts = (0..clusters)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let part: Vec<usize> = (start..start + len).collect();
            start += len;
            part
        })
        .collect();
    ClusterPlan::new(parts, (0..clusters).collect())
}

/// Analog precoder, per-subcarrier digital precoders and common-rate split.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    /// `F_RF`, N_t×K.
    pub analog: DMatrix<Complex64>,
    /// `F_BB,n`, K×(K+1); column 0 is the common stream, column `k+1` user `k`'s private stream.
    pub digital: Vec<DMatrix<Complex64>>,
    /// `C_{k,n}`, K×N_c.
    pub common_alloc: DMatrix<f64>,
}

impl HybridPrecoder {
    pub fn new(analog: DMatrix<Complex64>, digital: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let k = analog.ncols();
        for (n, d) in digital.iter().enumerate() {
            if d.shape() != (k, k + 1) {
                return Err(Error::Dimension(format!(
                    "digital precoder {n} is {:?}, expected {k}x{}",
                    d.shape(),
                    k + 1
                )));
            }
        }
        let n_c = digital.len();
        Ok(Self {
            analog,
            digital,
            common_alloc: DMatrix::zeros(k, n_c),
        })
    }

    pub fn users(&self) -> usize {
        self.analog.ncols()
    }

    pub fn subcarriers(&self) -> usize {
        self.digital.len()
    }

    /// `Σ_n ‖F_RF·F_BB,n‖_F²`.
    pub fn total_power(&self) -> f64 {
        total_power(&self.analog, &self.digital)
    }

    /// Largest deviation of an analog entry's modulus from one.
    pub fn modulus_error(&self) -> f64 {
        self.analog
            .iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn common_is_zero(&self) -> bool {
        self.digital
            .iter()
            .all(|d| d.column(0).iter().all(|c| c.norm_sqr() == 0.0))
    }
}

pub fn total_power(analog: &DMatrix<Complex64>, digital: &[DMatrix<Complex64>]) -> f64 {
    digital
        .iter()
        .map(|d| (analog * d).iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum()
}

/// Equivalent transmission coefficients `c_{k,s,n,n'} = h_{k,n,n'}ᴴ·F_RF·F_BB,s,n'`.
///
/// Stream `s = 0` is the common stream (`w`), `s = k'+1` the private stream of
/// user `k'` (`v`).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficients {
    users: usize,
    streams: usize,
    subcarriers: usize,
    data: Vec<Complex64>,
}

impl EffectiveCoefficients {
    pub fn zeros(users: usize, subcarriers: usize) -> Self {
        let streams = users + 1;
        Self {
            users,
            streams,
            subcarriers,
            data: vec![Complex64::default(); users * streams * subcarriers * subcarriers],
        }
    }

    /// Computes all coefficients for an analog/digital pair.
    pub fn compute(
        channel: &FreqChannel,
        analog: &DMatrix<Complex64>,
        digital: &[DMatrix<Complex64>],
    ) -> Result<Self> {
        let users = channel.users();
        let n_c = channel.subcarriers();
        let n_t = channel.antennas();
        if analog.shape() != (n_t, users) {
            return Err(Error::Dimension(format!(
                "analog precoder is {:?}, expected {n_t}x{users}",
                analog.shape()
            )));
        }
        if digital.len() != n_c {
            return Err(Error::Dimension(format!(
                "{} digital precoders for {n_c} subcarriers",
                digital.len()
            )));
        }
        if let Some(d) = digital.iter().find(|d| d.shape() != (users, users + 1)) {
            return Err(Error::Dimension(format!(
                "digital precoder is {:?}, expected {users}x{}",
                d.shape(),
                users + 1
            )));
        }
        let beams = PrecodedBeams::new(analog, digital);
        let mut out = Self::zeros(users, n_c);
        out.fill(channel, &beams);
        Ok(out)
    }

    pub(crate) fn fill(&mut self, channel: &FreqChannel, beams: &PrecodedBeams) {
        let (n_c, streams) = (self.subcarriers, self.streams);
        for k in 0..self.users {
            for n in 0..n_c {
                for np in 0..n_c {
                    let row = channel.row(k, n, np);
                    for s in 0..streams {
                        let beam = beams.beam(s, np);
                        let c = row
                            .iter()
                            .zip(beam)
                            .fold(Complex64::default(), |acc, (r, x)| acc + r * x);
                        self.data[((k * streams + s) * n_c + n) * n_c + np] = c;
                    }
                }
            }
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    #[inline]
    pub fn coeff(&self, k: usize, s: usize, n: usize, np: usize) -> Complex64 {
        self.data[((k * self.streams + s) * self.subcarriers + n) * self.subcarriers + np]
    }

    pub fn set(&mut self, k: usize, s: usize, n: usize, np: usize, value: Complex64) {
        let idx = ((k * self.streams + s) * self.subcarriers + n) * self.subcarriers + np;
        self.data[idx] = value;
    }

    /// Common-stream coefficient `w_{k,n,n'}`.
    #[inline]
    pub fn w(&self, k: usize, n: usize, np: usize) -> Complex64 {
        self.coeff(k, 0, n, np)
    }

    /// Private-stream coefficient `v_{k,k',n,n'}`.
    #[inline]
    pub fn v(&self, k: usize, kp: usize, n: usize, np: usize) -> Complex64 {
        self.coeff(k, kp + 1, n, np)
    }
}

/// Precoded transmit beams `x_{s,n} = F_RF·F_BB,s,n`, stored contiguously.
pub(crate) struct PrecodedBeams {
    antennas: usize,
    streams: usize,
    data: Vec<Complex64>,
}

impl PrecodedBeams {
    pub(crate) fn new(analog: &DMatrix<Complex64>, digital: &[DMatrix<Complex64>]) -> Self {
        let antennas = analog.nrows();
        let users = analog.ncols();
        let streams = users + 1;
        let mut data = vec![Complex64::default(); digital.len() * streams * antennas];
        for (n, d) in digital.iter().enumerate() {
            for s in 0..streams {
                let base = (n * streams + s) * antennas;
                for m in 0..antennas {
                    let mut acc = Complex64::default();
                    for j in 0..users {
                        acc += analog[(m, j)] * d[(j, s)];
                    }
                    data[base + m] = acc;
                }
            }
        }
        Self {
            antennas,
            streams,
            data,
        }
    }

    #[inline]
    pub(crate) fn beam(&self, s: usize, n: usize) -> &[Complex64] {
        let base = (n * self.streams + s) * self.antennas;
        &self.data[base..base + self.antennas]
    }

    pub(crate) fn power(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `effective_coeffs` for a full hybrid precoder.
pub fn effective_coeffs(
    channel: &FreqChannel,
    precoder: &HybridPrecoder,
) -> Result<EffectiveCoefficients> {
    EffectiveCoefficients::compute(channel, &precoder.analog, &precoder.digital)
}

/// Received power `T` and interference-plus-noise `I` per user and subcarrier (K×N_c).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTerms {
    pub total: DMatrix<f64>,
    pub interference: DMatrix<f64>,
    /// Desired-signal power `|w_{k,n,n}|²` or `|v_{k,k,n,n}|²`.
    pub desired: DMatrix<f64>,
}

/// Power terms when decoding the common stream.
pub fn common_power_terms(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
) -> PowerTerms {
    let (users, n_c) = (coeffs.users(), coeffs.subcarriers());
    let mut total = DMatrix::zeros(users, n_c);
    let mut interference = DMatrix::zeros(users, n_c);
    let mut desired = DMatrix::zeros(users, n_c);
    for k in 0..users {
        for n in 0..n_c {
            let mut ici = 0.0;
            for np in 0..n_c {
                if np != n && plan.interferes(n, np) {
                    ici += coeffs.w(k, n, np).norm_sqr();
                }
            }
            let mut private = 0.0;
            for np in 0..n_c {
                for kp in 0..users {
                    private += coeffs.v(k, kp, n, np).norm_sqr();
                }
            }
            let i = ici + private + noise_var;
            let d = coeffs.w(k, n, n).norm_sqr();
            interference[(k, n)] = i;
            desired[(k, n)] = d;
            total[(k, n)] = d + i;
        }
    }
    PowerTerms {
        total,
        interference,
        desired,
    }
}

/// Power terms when decoding user `k`'s private stream after the common
/// stream has been cancelled.
pub fn private_power_terms(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
) -> PowerTerms {
    let (users, n_c) = (coeffs.users(), coeffs.subcarriers());
    let mut total = DMatrix::zeros(users, n_c);
    let mut interference = DMatrix::zeros(users, n_c);
    let mut desired = DMatrix::zeros(users, n_c);
    for k in 0..users {
        for n in 0..n_c {
            let mut ici = 0.0;
            for np in 0..n_c {
                if np != n && plan.interferes(n, np) {
                    ici += coeffs.v(k, k, n, np).norm_sqr();
                }
            }
            let mut others = 0.0;
            for np in 0..n_c {
                for kp in (0..users).filter(|&kp| kp != k) {
                    others += coeffs.v(k, kp, n, np).norm_sqr();
                }
            }
            let i = ici + others + noise_var;
            let d = coeffs.v(k, k, n, n).norm_sqr();
            interference[(k, n)] = i;
            desired[(k, n)] = d;
            total[(k, n)] = d + i;
        }
    }
    PowerTerms {
        total,
        interference,
        desired,
    }
}

/// SINRs and achievable rates of the RSMA hybrid-SIC receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `R_{c,k,n}`, K×N_c.
    pub common_rate_kn: DMatrix<f64>,
    /// `R_{c,n} = min_k R_{c,k,n}`.
    pub common_rate: Vec<f64>,
    /// `R_{k,n}`, K×N_c.
    pub private_rate: DMatrix<f64>,
    pub common_sinr: DMatrix<f64>,
    pub private_sinr: DMatrix<f64>,
    pub common_terms: PowerTerms,
    pub private_terms: PowerTerms,
    pub sum_rate: f64,
}

impl RateReport {
    /// Per-user total private rate `Σ_n R_{k,n}`.
    pub fn private_totals(&self) -> Vec<f64> {
        self.private_rate
            .row_iter()
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Per-user rate including an allocated common share.
    pub fn user_totals(&self, common_alloc: &DMatrix<f64>) -> Vec<f64> {
        self.private_totals()
            .into_iter()
            .enumerate()
            .map(|(k, p)| p + common_alloc.row(k).iter().sum::<f64>())
            .collect()
    }
}

fn sinr_and_rate(terms: &PowerTerms) -> (DMatrix<f64>, DMatrix<f64>) {
    let sinr = terms.desired.zip_map(&terms.interference, |d, i| d / i);
    let rate = sinr.map(|g| (1.0 + g).log2());
    (sinr, rate)
}

pub fn rate_report(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
) -> RateReport {
    let common_terms = common_power_terms(coeffs, plan, noise_var);
    let private_terms = private_power_terms(coeffs, plan, noise_var);
    let (common_sinr, common_rate_kn) = sinr_and_rate(&common_terms);
    let (private_sinr, private_rate) = sinr_and_rate(&private_terms);
    let common_rate: Vec<f64> = common_rate_kn
        .column_iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let sum_rate = common_rate.iter().sum::<f64>() + private_rate.sum();
    RateReport {
        common_rate_kn,
        common_rate,
        private_rate,
        common_sinr,
        private_sinr,
        common_terms,
        private_terms,
        sum_rate,
    }
}

/// Per-user shortfall `max(R_min − Σ_n R_{k,n}, 0)`.
pub fn rate_deficits(report: &RateReport, min_rates: &[f64]) -> Vec<f64> {
    report
        .private_totals()
        .iter()
        .zip(min_rates)
        .map(|(have, need)| (need - have).max(0.0))
        .collect()
}

/// Whether the common rate can cover every user's private-rate shortfall.
pub fn common_rate_feasible(report: &RateReport, min_rates: &[f64]) -> bool {
    let demand: f64 = rate_deficits(report, min_rates).iter().sum();
    demand <= report.common_rate.iter().sum::<f64>()
}

/// Splits each subcarrier's common rate among users.
///
/// Deficits are filled greedily, user by user and subcarrier by subcarrier;
/// whatever remains goes to user 0, so the whole common rate is assigned.
pub fn allocate_common_rate(report: &RateReport, min_rates: &[f64]) -> Result<DMatrix<f64>> {
    let users = report.private_rate.nrows();
    let n_c = report.common_rate.len();
    if min_rates.len() != users {
        return Err(Error::Dimension(format!(
            "{} minimum rates for {users} users",
            min_rates.len()
        )));
    }
    let deficits = rate_deficits(report, min_rates);
    if !common_rate_feasible(report, min_rates) {
        return Err(Error::Infeasible { deficits });
    }
    let mut budget = report.common_rate.clone();
    let mut alloc = DMatrix::zeros(users, n_c);
    for (k, &deficit) in deficits.iter().enumerate() {
        let mut need = deficit;
        for n in 0..n_c {
            if need <= 0.0 {
                break;
            }
            let take = need.min(budget[n]);
            alloc[(k, n)] += take;
            budget[n] -= take;
            need -= take;
        }
    }
    for n in 0..n_c {
        alloc[(0, n)] += budget[n];
    }
    Ok(alloc)
}

/// Operation count of the hybrid SIC receiver with `G` clusters:
/// `((3G−1)/G)·K·N_t·N_c² + ((3G−1)/(2G))·K·N_c²`.
///
/// The fully serial receiver (`G = N_c`) is reported with the serial-SIC
/// coefficients `3` and `3/2`, the large-`N_c` limit of the hybrid formula.
pub fn sic_complexity(clusters: usize, users: usize, antennas: usize, subcarriers: usize) -> f64 {
    let k = users as f64;
    let nc2 = (subcarriers * subcarriers) as f64;
    let factor = if clusters == subcarriers && subcarriers > 1 {
        3.0
    } else {
        let g = clusters as f64;
        (3.0 * g - 1.0) / g
    };
    factor * k * antennas as f64 * nc2 + factor / 2.0 * k * nc2
}

/// One step of a receiver's successive decoding chain.
///
/// User `user` decodes stream `stream` on every subcarrier after fully
/// cancelling the streams in `cancelled`. Own-stream ICI is limited to the
/// subcarrier's interference set; every other uncancelled stream interferes
/// from all subcarriers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeStep {
    pub user: usize,
    pub stream: usize,
    pub cancelled: Vec<usize>,
}

/// `(T, I)` per subcarrier for one decode step.
pub fn step_power_terms(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    step: &DecodeStep,
) -> (Vec<f64>, Vec<f64>) {
    let n_c = coeffs.subcarriers();
    let k = step.user;
    let mut total = vec![0.0; n_c];
    let mut interference = vec![0.0; n_c];
    for n in 0..n_c {
        let mut i = noise_var;
        for s in 0..coeffs.streams() {
            if step.cancelled.contains(&s) {
                continue;
            }
            for np in 0..n_c {
                if s == step.stream && (np == n || !plan.interferes(n, np)) {
                    continue;
                }
                i += coeffs.coeff(k, s, n, np).norm_sqr();
            }
        }
        interference[n] = i;
        total[n] = coeffs.coeff(k, step.stream, n, n).norm_sqr() + i;
    }
    (total, interference)
}

/// The RSMA decode chain: every user decodes the common stream, then its own
/// private stream with the common stream cancelled.
pub fn rsma_decode_steps(users: usize) -> Vec<DecodeStep> {
    let mut steps: Vec<DecodeStep> = (0..users)
        .map(|k| DecodeStep {
            user: k,
            stream: 0,
            cancelled: vec![],
        })
        .collect();
    steps.extend((0..users).map(|k| DecodeStep {
        user: k,
        stream: k + 1,
        cancelled: vec![0],
    }));
    steps
}
