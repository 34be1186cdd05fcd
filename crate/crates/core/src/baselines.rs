//! Multiple-access schemes sharing the hybrid SIC rate machinery.
//!
//! Each scheme is a decode chain over the `K+1` stream slots of
//! [`EffectiveCoefficients`]: RSMA uses the common slot, SDMA and NOMA keep
//! it zero. A stream decoded by several users is limited to the weakest of
//! them on each subcarrier.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::rsma_model::{
    effective_coeffs, rsma_decode_steps, step_power_terms, ClusterPlan, DecodeStep,
    EffectiveCoefficients, HybridPrecoder,
};

/// Slack on rate comparisons for QoS checks.
pub const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SchemeKind {
    Rsma,
    Sdma,
    Noma,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Rsma, SchemeKind::Sdma, SchemeKind::Noma];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Rsma => "RSMA",
            SchemeKind::Sdma => "SDMA",
            SchemeKind::Noma => "NOMA",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RSMA" => Ok(SchemeKind::Rsma),
            "SDMA" => Ok(SchemeKind::Sdma),
            "NOMA" => Ok(SchemeKind::Noma),
            _ => Err(Error::Config(format!("unknown scheme `{s}`"))),
        }
    }
}

/// A scheme together with its decode order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// NOMA message order, first-decoded message first. Empty otherwise.
    pub noma_order: Vec<usize>,
}

impl Scheme {
    pub fn rsma() -> Self {
        Self {
            kind: SchemeKind::Rsma,
            noma_order: Vec::new(),
        }
    }

    pub fn sdma() -> Self {
        Self {
            kind: SchemeKind::Sdma,
            noma_order: Vec::new(),
        }
    }

    pub fn noma(order: Vec<usize>) -> Self {
        Self {
            kind: SchemeKind::Noma,
            noma_order: order,
        }
    }

    /// Builds the scheme for a channel, ordering NOMA users by gain.
    pub fn for_channel(kind: SchemeKind, channel: &FreqChannel) -> Self {
        match kind {
            SchemeKind::Rsma => Self::rsma(),
            SchemeKind::Sdma => Self::sdma(),
            SchemeKind::Noma => Self::noma(noma_order_by_gain(channel)),
        }
    }

    pub fn uses_common(&self) -> bool {
        self.kind == SchemeKind::Rsma
    }

    /// Stream slots carrying data.
    pub fn active_streams(&self, users: usize) -> Vec<usize> {
        let first = if self.uses_common() { 0 } else { 1 };
        (first..=users).collect()
    }

    pub fn decode_steps(&self, users: usize) -> Vec<DecodeStep> {
        match self.kind {
            SchemeKind::Rsma => rsma_decode_steps(users),
            SchemeKind::Sdma => (0..users)
                .map(|k| DecodeStep {
                    user: k,
                    stream: k + 1,
                    cancelled: vec![],
                })
                .collect(),
            SchemeKind::Noma => noma_decode_steps(&self.noma_order),
        }
    }

    /// Rates under this scheme's decode chain.
    pub fn evaluate(
        &self,
        coeffs: &EffectiveCoefficients,
        plan: &ClusterPlan,
        noise_var: f64,
    ) -> SchemeRates {
        evaluate_steps(coeffs, plan, noise_var, &self.decode_steps(coeffs.users()))
    }

    /// Whether the rates can meet the per-user minimums. For RSMA the common
    /// rate may be split to cover private-rate deficits.
    pub fn qos_satisfied(&self, rates: &SchemeRates, min_rates: &[f64]) -> bool {
        let deficit: f64 = rates
            .user_rates
            .iter()
            .zip(min_rates)
            .map(|(have, need)| (need - have).max(0.0))
            .sum();
        if self.uses_common() {
            deficit <= rates.common_total() + RATE_TOL
        } else {
            rates
                .user_rates
                .iter()
                .zip(min_rates)
                .all(|(have, need)| *have + RATE_TOL >= *need)
        }
    }
}

/// Per-stream and per-step rates of one decode chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRates {
    /// Achievable rate of each stream slot per subcarrier, (K+1)×N_c.
    pub stream_rate: DMatrix<f64>,
    /// Rate each decode step supports, per subcarrier.
    pub step_rates: Vec<Vec<f64>>,
    /// Private-stream totals per user (common share excluded).
    pub user_rates: Vec<f64>,
    pub sum_rate: f64,
}

impl SchemeRates {
    pub fn common_total(&self) -> f64 {
        self.stream_rate.row(0).sum()
    }
}

/// Rates of an arbitrary decode chain.
pub fn evaluate_steps(
    coeffs: &EffectiveCoefficients,
    plan: &ClusterPlan,
    noise_var: f64,
    steps: &[DecodeStep],
) -> SchemeRates {
    let (users, n_c) = (coeffs.users(), coeffs.subcarriers());
    let mut stream_rate = DMatrix::from_element(users + 1, n_c, f64::INFINITY);
    let mut decoded = vec![false; users + 1];
    let step_rates: Vec<Vec<f64>> = steps
        .iter()
        .map(|step| {
            let (_, interference) = step_power_terms(coeffs, plan, noise_var, step);
            decoded[step.stream] = true;
            (0..n_c)
                .map(|n| {
                    let desired = coeffs.coeff(step.user, step.stream, n, n).norm_sqr();
                    let r = (1.0 + desired / interference[n]).log2();
                    let slot = &mut stream_rate[(step.stream, n)];
                    *slot = slot.min(r);
                    r
                })
                .collect()
        })
        .collect();
    for (s, _) in decoded.iter().enumerate().filter(|(_, d)| !**d) {
        stream_rate.row_mut(s).fill(0.0);
    }
    let user_rates = (0..users).map(|k| stream_rate.row(k + 1).sum()).collect();
    SchemeRates {
        sum_rate: stream_rate.sum(),
        stream_rate,
        step_rates,
        user_rates,
    }
}

/// NOMA chain: the user at position `p` of `order` decodes the messages of
/// positions `0..=p` in turn, cancelling each after decoding it.
pub fn noma_decode_steps(order: &[usize]) -> Vec<DecodeStep> {
    let mut steps = Vec::new();
    for (p, &user) in order.iter().enumerate() {
        for q in 0..=p {
            steps.push(DecodeStep {
                user,
                stream: order[q] + 1,
                cancelled: order[..q].iter().map(|&u| u + 1).collect(),
            });
        }
    }
    steps
}

/// Users sorted by ascending channel energy: the weakest user's message is
/// decoded first, so SIC capability grows with channel gain.
pub fn noma_order_by_gain(channel: &FreqChannel) -> Vec<usize> {
    let energy: Vec<f64> = (0..channel.users())
        .map(|k| {
            (0..channel.subcarriers())
                .flat_map(|n| (0..channel.subcarriers()).map(move |np| (n, np)))
                .map(|(n, np)| channel.row(k, n, np).iter().map(|c| c.norm_sqr()).sum::<f64>())
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..channel.users()).collect();
    order.sort_by(|&a, &b| energy[a].total_cmp(&energy[b]).then(a.cmp(&b)));
    order
}

/// SDMA rates: private streams only, each treating the others as noise.
pub fn sdma_rate_report(
    channel: &FreqChannel,
    precoder: &HybridPrecoder,
    plan: &ClusterPlan,
    noise_var: f64,
) -> Result<SchemeRates> {
    if !precoder.common_is_zero() {
        return Err(Error::Argument("SDMA precoder has a non-zero common column".into()));
    }
    let coeffs = effective_coeffs(channel, precoder)?;
    Ok(Scheme::sdma().evaluate(&coeffs, plan, noise_var))
}

/// NOMA rates with the message order derived from channel gains.
pub fn noma_rate_report(
    channel: &FreqChannel,
    precoder: &HybridPrecoder,
    plan: &ClusterPlan,
    noise_var: f64,
) -> Result<SchemeRates> {
    if !precoder.common_is_zero() {
        return Err(Error::Argument("NOMA precoder has a non-zero common column".into()));
    }
    let coeffs = effective_coeffs(channel, precoder)?;
    Ok(Scheme::noma(noma_order_by_gain(channel)).evaluate(&coeffs, plan, noise_var))
}
