//! Symbol-level hybrid SIC receiver with a multiply-accumulate counter.
//!
//! Runs one OFDM symbol through the frequency-domain channel and applies the
//! receiver's cancellation schedule with genie-decoded symbols (perfect SIC).
//! Its residuals realize the interference terms of the rate model, and its
//! counter realizes the receiver's operation count:
//!
//! * each stage (common, then private) forms its N_c×N_c coefficient table,
//!   `N_t` MACs per entry;
//! * after a cluster is decoded, its leakage onto every later cluster is
//!   regenerated from the channel vectors (`N_t` MACs per pair) and
//!   subtracted (one MAC per pair), in both stages;
//! * the remaining common-stream leakage is subtracted before the private
//!   stage, one MAC per pair.

use num_complex::Complex64;

use crate::channel::FreqChannel;
use crate::error::{Error, Result};
use crate::rsma_model::{ClusterPlan, HybridPrecoder, PrecodedBeams};

/// Unit-power data symbols for one OFDM symbol.
#[derive(Debug, Clone)]
pub struct SicSymbols {
    /// `d_{c,n}`.
    pub common: Vec<Complex64>,
    /// `d_{k,n}`, indexed `[k][n]`.
    pub private: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone)]
pub struct SicOutput {
    /// Interference plus noise left on each subcarrier when user `k` decodes
    /// the common stream, `[k][n]`.
    pub common_residual: Vec<Vec<Complex64>>,
    /// Same for the private stream.
    pub private_residual: Vec<Vec<Complex64>>,
    /// Multiply-accumulate operations spent by all users.
    pub macs: u64,
}

#[inline]
fn dot(row: &[Complex64], beam: &[Complex64], macs: &mut u64) -> Complex64 {
    *macs += row.len() as u64;
    row.iter()
        .zip(beam)
        .fold(Complex64::default(), |acc, (r, x)| acc + r * x)
}

/// Processes one received OFDM symbol for every user.
///
/// `noise[k][n]` is the frequency-domain noise sample of user `k`.
pub fn process(
    channel: &FreqChannel,
    precoder: &HybridPrecoder,
    plan: &ClusterPlan,
    symbols: &SicSymbols,
    noise: &[Vec<Complex64>],
) -> Result<SicOutput> {
    let users = channel.users();
    let n_c = channel.subcarriers();
    if precoder.users() != users || precoder.subcarriers() != n_c || plan.subcarriers() != n_c {
        return Err(Error::Dimension("receiver inputs disagree on K or N_c".into()));
    }
    if symbols.common.len() != n_c
        || symbols.private.len() != users
        || noise.len() != users
        || noise.iter().any(|z| z.len() != n_c)
    {
        return Err(Error::Dimension("symbol or noise block has the wrong shape".into()));
    }
    let beams = PrecodedBeams::new(&precoder.analog, &precoder.digital);
    let streams = users + 1;
    let stream_symbol = |s: usize, n: usize| {
        if s == 0 {
            symbols.common[n]
        } else {
            symbols.private[s - 1][n]
        }
    };

    let mut macs = 0u64;
    let mut common_residual = Vec::with_capacity(users);
    let mut private_residual = Vec::with_capacity(users);
    let ordered: Vec<&[usize]> = plan.ordered_clusters().collect();

    for k in 0..users {
        // physical channel, not part of the receiver's budget
        let mut sink = 0u64;
        let received: Vec<Complex64> = (0..n_c)
            .map(|n| {
                let mut y = noise[k][n];
                for np in 0..n_c {
                    for s in 0..streams {
                        y += dot(channel.row(k, n, np), beams.beam(s, np), &mut sink)
                            * stream_symbol(s, np);
                    }
                }
                y
            })
            .collect();

        let mut y = received;
        let mut residuals = [Vec::new(), Vec::new()];
        for (stage, stream) in [0, k + 1].into_iter().enumerate() {
            let table: Vec<Complex64> = (0..n_c * n_c)
                .map(|idx| dot(channel.row(k, idx / n_c, idx % n_c), beams.beam(stream, idx % n_c), &mut macs))
                .collect();
            let mut cancelled = vec![false; n_c * n_c];
            for (pos, cluster) in ordered.iter().enumerate() {
                for later in ordered.iter().skip(pos + 1) {
                    for &n in later.iter() {
                        for &np in cluster.iter() {
                            let leak = dot(channel.row(k, n, np), beams.beam(stream, np), &mut macs);
                            y[n] -= leak * stream_symbol(stream, np);
                            macs += 1;
                            cancelled[n * n_c + np] = true;
                        }
                    }
                }
            }
            residuals[stage] = (0..n_c)
                .map(|n| y[n] - table[n * n_c + n] * stream_symbol(stream, n))
                .collect();
            if stage == 0 {
                for n in 0..n_c {
                    for np in 0..n_c {
                        if !cancelled[n * n_c + np] {
                            y[n] -= table[n * n_c + np] * stream_symbol(0, np);
                            macs += 1;
                        }
                    }
                }
            }
        }
        let [c, p] = residuals;
        common_residual.push(c);
        private_residual.push(p);
    }
    Ok(SicOutput {
        common_residual,
        private_residual,
        macs,
    })
}
