//! Doubly-dispersive MIMO-OFDM channel.
//!
//! Each user sees `N_p` paths, each with a complex gain, a delay, a Doppler
//! shift and a departure angle on a half-wavelength ULA. The time-domain
//! channel between antenna `m` and user `k` acts on one CP-extended OFDM
//! symbol; its frequency-domain equivalent `F·B·H̃·A·Fᴴ` carries the
//! inter-carrier interference in its off-diagonal entries.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounded speed of light (m/s) used for the Doppler bound.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// System-level parameters shared by every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of single-antenna users `K` (also the number of RF chains).
    pub users: usize,
    /// Transmit antennas `N_t`.
    pub tx_antennas: usize,
    /// Subcarriers `N_c`.
    pub subcarriers: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Cyclic-prefix length in samples.
    pub cp_len: usize,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Paths per user.
    pub paths: usize,
    /// Maximum relative speed in m/s.
    pub max_speed: f64,
    /// Raised-cosine roll-off.
    pub rolloff: f64,
    /// Total transmit power budget across all subcarriers.
    pub total_power: f64,
    /// Noise variance per frequency-domain sample.
    pub noise_var: f64,
    /// Per-user minimum rate over all subcarriers (bps/Hz).
    pub min_rates: Vec<f64>,
    /// Number of SIC clusters `G`.
    pub clusters: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            users: 2,
            tx_antennas: 16,
            subcarriers: 16,
            subcarrier_spacing: 15e3,
            cp_len: 6,
            carrier_freq: 4e9,
            paths: 50,
            max_speed: 100.0,
            rolloff: 0.4,
            total_power: 16.0,
            noise_var: 0.01,
            min_rates: vec![0.0; 2],
            clusters: 4,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.users == 0 {
            return fail("users must be at least 1".into());
        }
        if self.tx_antennas < self.users {
            return fail(format!(
                "tx_antennas ({}) must be at least users ({})",
                self.tx_antennas, self.users
            ));
        }
        if self.subcarriers == 0 {
            return fail("subcarriers must be at least 1".into());
        }
        if self.clusters == 0 || self.clusters > self.subcarriers {
            return fail(format!(
                "clusters must lie in 1..={}, got {}",
                self.subcarriers, self.clusters
            ));
        }
        if !(self.subcarrier_spacing > 0.0) {
            return fail("subcarrier_spacing must be positive".into());
        }
        if !(self.total_power > 0.0) {
            return fail("total_power must be positive".into());
        }
        if !(self.noise_var > 0.0) {
            return fail("noise_var must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return fail(format!("rolloff must lie in [0, 1], got {}", self.rolloff));
        }
        if self.paths == 0 {
            return fail("paths must be at least 1".into());
        }
        if self.max_speed < 0.0 || self.carrier_freq < 0.0 {
            return fail("max_speed and carrier_freq must be non-negative".into());
        }
        if self.min_rates.len() != self.users {
            return fail(format!(
                "min_rates has {} entries, expected {}",
                self.min_rates.len(),
                self.users
            ));
        }
        if self.min_rates.iter().any(|r| !(*r >= 0.0)) {
            return fail("min_rates must be non-negative".into());
        }
        Ok(())
    }

    /// `F_s = N_c·Δf`.
    pub fn sampling_rate(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing
    }

    /// `ν_max = v·f_c / c`.
    pub fn max_doppler(&self) -> f64 {
        self.max_speed * self.carrier_freq / SPEED_OF_LIGHT
    }

    /// Samples per CP-extended OFDM symbol.
    pub fn symbol_len(&self) -> usize {
        self.subcarriers + self.cp_len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Hz.
    pub doppler: f64,
    /// Angle of departure in radians.
    pub angle: f64,
}

/// Per-user multipath parameters, `paths[k][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<Vec<PathParams>>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.paths.len()
    }
}

/// Unitary DFT matrix, `[F]_{p,q} = e^{-j2πpq/N}/√N`.
pub fn build_dft_matrix(n: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |p, q| {
        let idx = (p * q) % n;
        Complex64::from_polar(scale, -2.0 * PI * idx as f64 / n as f64)
    })
}

/// CP-addition `A` ((N+L)×N) and CP-removal `B` (N×(N+L)) matrices.
pub fn build_cp_matrices(n: usize, cp: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let one = Complex64::new(1.0, 0.0);
    let mut add = DMatrix::zeros(n + cp, n);
    for r in 0..n + cp {
        // first `cp` output samples repeat the tail of the symbol
        let src = if r < cp { n - cp + r } else { r - cp };
        add[(r, src % n)] = one;
    }
    let mut remove = DMatrix::zeros(n, n + cp);
    for r in 0..n {
        remove[(r, r + cp)] = one;
    }
    (add, remove)
}

/// Diagonal of the Doppler matrix `Δ^ν`: `e^{j2πνn/F_s}` for `n = 0..size`.
pub fn doppler_diagonal(doppler: f64, size: usize, fs: f64) -> Vec<Complex64> {
    (0..size)
        .map(|n| Complex64::from_polar(1.0, 2.0 * PI * doppler * n as f64 / fs))
        .collect()
}

pub fn doppler_matrix(doppler: f64, size: usize, fs: f64) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(doppler_diagonal(
        doppler, size, fs,
    )))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Raised-cosine impulse response with roll-off `beta` and symbol period `period`.
pub fn raised_cosine(t: f64, beta: f64, period: f64) -> f64 {
    let x = t / period;
    if beta > 0.0 {
        let denom = 1.0 - (2.0 * beta * x).powi(2);
        if denom.abs() < 1e-10 {
            return PI / 4.0 * sinc(1.0 / (2.0 * beta));
        }
        sinc(x) * (PI * beta * x).cos() / denom
    } else {
        sinc(x)
    }
}

/// Delay matrix `[Γ_τ]_{p,q} = g((p−q)/F_s − τ)`.
pub fn delay_matrix(
    delay: f64,
    size: usize,
    fs: f64,
    pulse: impl Fn(f64) -> f64,
) -> DMatrix<Complex64> {
    DMatrix::from_fn(size, size, |p, q| {
        Complex64::new(pulse((p as f64 - q as f64) / fs - delay), 0.0)
    })
}

/// Draws one channel realization.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let fs = cfg.sampling_rate();
    let nu_max = cfg.max_doppler();
    let std = (0.5 / cfg.paths as f64).sqrt();
    let gauss = Normal::new(0.0, std).expect("finite std");
    let paths = (0..cfg.users)
        .map(|_| {
            (0..cfg.paths)
                .map(|_| {
                    let gain = Complex64::new(gauss.sample(rng), gauss.sample(rng));
                    let delay = rng.random::<f64>() * 4.0 / fs;
                    let doppler = (2.0 * rng.random::<f64>() - 1.0) * nu_max;
                    let angle = (rng.random::<f64>() - 0.5) * PI;
                    PathParams {
                        gain,
                        delay,
                        doppler,
                        angle,
                    }
                })
                .collect()
        })
        .collect();
    ChannelRealization { paths }
}

fn steering(angle: f64, antenna: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI * antenna as f64 * angle.sin())
}

/// `Δ^ν·Γ_τ` for one path.
fn path_matrix(path: &PathParams, cfg: &SystemConfig) -> DMatrix<Complex64> {
    let fs = cfg.sampling_rate();
    let size = cfg.symbol_len();
    let beta = cfg.rolloff;
    let mut gamma = delay_matrix(path.delay, size, fs, |t| raised_cosine(t, beta, 1.0 / fs));
    let diag = doppler_diagonal(path.doppler, size, fs);
    for (p, d) in diag.iter().enumerate() {
        let mut row = gamma.row_mut(p);
        row *= *d;
    }
    gamma
}

/// Time-domain channel `H̃_{k,m}` between antenna `antenna` and `user` (0-based).
pub fn time_domain_channel(
    real: &ChannelRealization,
    cfg: &SystemConfig,
    user: usize,
    antenna: usize,
) -> DMatrix<Complex64> {
    let size = cfg.symbol_len();
    let mut h = DMatrix::zeros(size, size);
    for path in &real.paths[user] {
        h += path_matrix(path, cfg) * (path.gain * steering(path.angle, antenna));
    }
    h
}

/// Frequency-domain equivalent `F·B·H̃·A·Fᴴ`.
pub fn freq_equiv_channel(
    time_domain: &DMatrix<Complex64>,
    n: usize,
    cp: usize,
) -> DMatrix<Complex64> {
    let f = build_dft_matrix(n);
    let (add, remove) = build_cp_matrices(n, cp);
    &f * remove * time_domain * add * f.adjoint()
}

/// Equivalent frequency-domain channel for all users and antennas.
///
/// Stores `[H_{k,m}]_{n,n'}` contiguously over `m`, so that the channel row
/// `r = [H_{k,1}]_{n,n'} … [H_{k,N_t}]_{n,n'}` satisfies `h_{k,n,n'}ᴴ·x = r·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    users: usize,
    antennas: usize,
    subcarriers: usize,
    coeffs: Vec<Complex64>,
}

impl FreqChannel {
    /// Builds the channel from per-user, per-antenna N_c×N_c matrices `mats[k][m]`.
    pub fn from_matrices(mats: &[Vec<DMatrix<Complex64>>]) -> Result<Self> {
        let users = mats.len();
        let antennas = mats.first().map_or(0, Vec::len);
        let subcarriers = mats
            .first()
            .and_then(|m| m.first())
            .map_or(0, |m| m.nrows());
        if users == 0 || antennas == 0 || subcarriers == 0 {
            return Err(Error::Dimension("empty channel".into()));
        }
        let mut coeffs = vec![Complex64::default(); users * subcarriers * subcarriers * antennas];
        for (k, per_user) in mats.iter().enumerate() {
            if per_user.len() != antennas {
                return Err(Error::Dimension(format!(
                    "user {k} has {} antenna matrices, expected {antennas}",
                    per_user.len()
                )));
            }
            for (m, mat) in per_user.iter().enumerate() {
                if mat.shape() != (subcarriers, subcarriers) {
                    return Err(Error::Dimension(format!(
                        "H[{k}][{m}] is {:?}, expected {subcarriers}x{subcarriers}",
                        mat.shape()
                    )));
                }
                for n in 0..subcarriers {
                    for np in 0..subcarriers {
                        let idx = ((k * subcarriers + n) * subcarriers + np) * antennas + m;
                        coeffs[idx] = mat[(n, np)];
                    }
                }
            }
        }
        Ok(Self {
            users,
            antennas,
            subcarriers,
            coeffs,
        })
    }

    /// Synthesizes the frequency-domain channel of a realization.
    ///
    /// Uses linearity over paths: each path contributes
    /// `h·e^{jπm·sinθ}·F·B·Δ^ν·Γ_τ·A·Fᴴ`, and the N_c×N_c core is shared by all antennas.
    pub fn from_realization(real: &ChannelRealization, cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        if real.users() != cfg.users {
            return Err(Error::Dimension(format!(
                "realization has {} users, config {}",
                real.users(),
                cfg.users
            )));
        }
        let (users, antennas, nc) = (cfg.users, cfg.tx_antennas, cfg.subcarriers);
        let f = build_dft_matrix(nc);
        let (add, remove) = build_cp_matrices(nc, cfg.cp_len);
        let left = &f * remove;
        let right = add * f.adjoint();
        let mut coeffs = vec![Complex64::default(); users * nc * nc * antennas];
        let mut weights = vec![Complex64::default(); antennas];
        for (k, paths) in real.paths.iter().enumerate() {
            if paths.len() != cfg.paths {
                return Err(Error::Dimension(format!(
                    "user {k} has {} paths, expected {}",
                    paths.len(),
                    cfg.paths
                )));
            }
            for path in paths {
                let core = &left * path_matrix(path, cfg) * &right;
                for (m, w) in weights.iter_mut().enumerate() {
                    *w = path.gain * steering(path.angle, m);
                }
                for n in 0..nc {
                    for np in 0..nc {
                        let c = core[(n, np)];
                        let base = ((k * nc + n) * nc + np) * antennas;
                        for (dst, w) in coeffs[base..base + antennas].iter_mut().zip(&weights) {
                            *dst += c * w;
                        }
                    }
                }
            }
        }
        Ok(Self {
            users,
            antennas,
            subcarriers: nc,
            coeffs,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    /// `[H_{k,m}]_{n,n'}` over all antennas `m`.
    #[inline]
    pub fn row(&self, k: usize, n: usize, np: usize) -> &[Complex64] {
        let base = ((k * self.subcarriers + n) * self.subcarriers + np) * self.antennas;
        &self.coeffs[base..base + self.antennas]
    }

    /// The channel vector `h_{k,n,n'}` (conjugate of [`Self::row`]).
    pub fn h(&self, k: usize, n: usize, np: usize) -> Vec<Complex64> {
        self.row(k, n, np).iter().map(|c| c.conj()).collect()
    }

    pub fn matrix(&self, k: usize, m: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.subcarriers, self.subcarriers, |n, np| {
            self.row(k, n, np)[m]
        })
    }

    /// Fraction of the channel energy that sits off the diagonal (ICI share).
    pub fn ici_energy_fraction(&self) -> f64 {
        let mut diag = 0.0;
        let mut total = 0.0;
        for k in 0..self.users {
            for n in 0..self.subcarriers {
                for np in 0..self.subcarriers {
                    let e: f64 = self.row(k, n, np).iter().map(|c| c.norm_sqr()).sum();
                    total += e;
                    if n == np {
                        diag += e;
                    }
                }
            }
        }
        if total > 0.0 {
            1.0 - diag / total
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frob(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn dft_small_cases() {
        let f1 = build_dft_matrix(1);
        assert_abs_diff_eq!(f1[(0, 0)].re, 1.0);
        let f2 = build_dft_matrix(2);
        let s = 1.0 / 2f64.sqrt();
        for (idx, expected) in [(0, s), (1, s), (2, s), (3, -s)] {
            let (r, c) = (idx / 2, idx % 2);
            assert_abs_diff_eq!(f2[(r, c)].re, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(f2[(r, c)].im, 0.0, epsilon = 1e-15);
        }
        let f8 = build_dft_matrix(8);
        let err = &f8 * f8.adjoint() - DMatrix::identity(8, 8);
        assert!(frob(&err) < 1e-12);
    }

    #[test]
    fn cp_matrices() {
        let (a, b) = build_cp_matrices(4, 0);
        assert_eq!(a, DMatrix::identity(4, 4));
        assert_eq!(b, DMatrix::identity(4, 4));

        let (a, _) = build_cp_matrices(3, 1);
        let x = nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ]);
        let y = a * x;
        let got: Vec<f64> = y.iter().map(|c| c.re).collect();
        assert_eq!(got, vec![3.0, 1.0, 2.0, 3.0]);

        for (n, l) in [(1, 0), (4, 2), (8, 8), (16, 6)] {
            let (a, b) = build_cp_matrices(n, l);
            assert_eq!(b * a, DMatrix::identity(n, n));
        }
    }

    #[test]
    fn doppler_values() {
        let d = doppler_matrix(0.0, 5, 240e3);
        assert_eq!(d, DMatrix::identity(5, 5));
        let d = doppler_diagonal(240e3, 2, 240e3);
        assert_abs_diff_eq!(d[1].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1].im, 0.0, epsilon = 1e-12);
        let d = doppler_diagonal(100.0, 4, 240e3);
        let phase = 2.0 * PI * 300.0 / 240_000.0;
        assert_abs_diff_eq!(d[3].re, phase.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(d[3].im, phase.sin(), epsilon = 1e-15);
    }

    #[test]
    fn raised_cosine_values() {
        let t = 1e-3;
        assert_abs_diff_eq!(raised_cosine(0.0, 0.4, t), 1.0);
        for k in [-3i32, -1, 1, 2, 5] {
            assert_abs_diff_eq!(raised_cosine(k as f64 * t, 0.4, t), 0.0, epsilon = 1e-15);
        }
        // L'Hôpital limit at t = T/(2β): (π/4)·sinc(1/(2β)) = (π/4)·sin(1.25π)/(1.25π)
        let limit = PI / 4.0 * (1.25 * PI).sin() / (1.25 * PI);
        assert_abs_diff_eq!(raised_cosine(t / 0.8, 0.4, t), limit, epsilon = 1e-15);
        // continuity at the removable singularity
        let near = raised_cosine(t / 0.8 * (1.0 + 1e-7), 0.4, t);
        assert_abs_diff_eq!(near, limit, epsilon = 1e-6);
        assert!(raised_cosine(-t / 0.8, 0.4, t).is_finite());
    }

    #[test]
    fn delay_matrix_integer_shifts() {
        let fs = 240e3;
        let pulse = |t: f64| raised_cosine(t, 0.4, 1.0 / fs);
        let g0 = delay_matrix(0.0, 6, fs, pulse);
        assert!(frob(&(g0 - DMatrix::identity(6, 6))) < 1e-12);
        let g1 = delay_matrix(1.0 / fs, 6, fs, pulse);
        for p in 0..6 {
            for q in 0..6 {
                let expected = if p == q + 1 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(g1[(p, q)].re, expected, epsilon = 1e-12);
            }
        }
        let gh = delay_matrix(0.5 / fs, 4, fs, pulse);
        for p in 0..4 {
            for q in 0..4 {
                let t = (p as f64 - q as f64 - 0.5) / fs;
                assert_abs_diff_eq!(gh[(p, q)].re, pulse(t), epsilon = 1e-15);
            }
        }
    }

    fn single_path(delay: f64, doppler: f64, angle: f64) -> (ChannelRealization, SystemConfig) {
        let cfg = SystemConfig {
            users: 1,
            tx_antennas: 2,
            subcarriers: 8,
            cp_len: 3,
            paths: 1,
            min_rates: vec![0.0],
            clusters: 1,
            ..SystemConfig::default()
        };
        let real = ChannelRealization {
            paths: vec![vec![PathParams {
                gain: Complex64::new(1.0, 0.0),
                delay,
                doppler,
                angle,
            }]],
        };
        (real, cfg)
    }

    #[test]
    fn time_domain_flat_and_steering() {
        let (real, cfg) = single_path(0.0, 0.0, 0.0);
        for m in 0..2 {
            let h = time_domain_channel(&real, &cfg, 0, m);
            assert!(frob(&(h - DMatrix::identity(11, 11))) < 1e-12);
        }
        let (real, cfg) = single_path(1.3 / cfg.sampling_rate(), 400.0, PI / 2.0);
        let base = time_domain_channel(&real, &cfg, 0, 0);
        let second = time_domain_channel(&real, &cfg, 0, 1);
        assert!(frob(&(second + &base)) < 1e-12 * frob(&base).max(1.0));
    }

    #[test]
    fn time_domain_linear_in_paths() {
        let (mut real, cfg) = single_path(0.7e-6, 300.0, 0.3);
        let mut cfg2 = cfg.clone();
        cfg2.paths = 2;
        let other = PathParams {
            gain: Complex64::new(0.2, -0.5),
            delay: 2.2e-6,
            doppler: -800.0,
            angle: -0.9,
        };
        let a = time_domain_channel(&real, &cfg, 0, 1);
        let b = time_domain_channel(
            &ChannelRealization {
                paths: vec![vec![other]],
            },
            &cfg,
            0,
            1,
        );
        real.paths[0].push(other);
        let both = time_domain_channel(&real, &cfg2, 0, 1);
        assert!(frob(&(both - a - b)) < 1e-12);
    }

    #[test]
    fn freq_equivalent_identity_and_circulant() {
        let h = freq_equiv_channel(&DMatrix::identity(11, 11), 8, 3);
        assert!(frob(&(h - DMatrix::identity(8, 8))) < 1e-12);

        // two-sample delay within the CP, no Doppler: circulant, hence diagonal
        let (real, cfg) = single_path(2.0 / 120e3, 0.0, 0.0);
        assert_abs_diff_eq!(cfg.sampling_rate(), 120e3);
        let ht = time_domain_channel(&real, &cfg, 0, 0);
        let hf = freq_equiv_channel(&ht, 8, 3);
        let off: f64 = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .map(|(r, c)| hf[(r, c)].norm_sqr())
            .sum();
        assert!(off.sqrt() < 1e-10, "off-diagonal mass {off}");
    }

    #[test]
    fn sampled_channel_statistics() {
        let cfg = SystemConfig::default();
        let nu_max = cfg.max_doppler();
        assert_abs_diff_eq!(nu_max, 100.0 * 4e9 / SPEED_OF_LIGHT);
        assert!((nu_max - 1333.3).abs() < 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut energy = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let real = sample_channel(&cfg, &mut rng);
            assert_eq!(real.paths.len(), cfg.users);
            for user in &real.paths {
                assert_eq!(user.len(), cfg.paths);
                for p in user {
                    assert!(p.doppler.abs() <= nu_max);
                    assert!(p.delay >= 0.0 && p.delay <= 4.0 / cfg.sampling_rate());
                    assert!(p.angle.abs() <= PI / 2.0);
                }
            }
            energy += real.paths[0].iter().map(|p| p.gain.norm_sqr()).sum::<f64>();
        }
        let mean = energy / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean path energy {mean}");

        let a = sample_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn freq_channel_matches_direct_product() {
        let cfg = SystemConfig {
            users: 2,
            tx_antennas: 3,
            subcarriers: 8,
            cp_len: 4,
            paths: 5,
            min_rates: vec![0.0; 2],
            clusters: 2,
            ..SystemConfig::default()
        };
        let real = sample_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(11));
        let fc = FreqChannel::from_realization(&real, &cfg).unwrap();
        for k in 0..2 {
            for m in 0..3 {
                let direct = freq_equiv_channel(&time_domain_channel(&real, &cfg, k, m), 8, 4);
                assert!(frob(&(direct - fc.matrix(k, m))) < 1e-12);
            }
        }
        let h = fc.h(1, 2, 5);
        for (m, v) in h.iter().enumerate() {
            assert_eq!(*v, fc.matrix(1, m)[(2, 5)].conj());
        }
        // the default speed produces visible ICI
        assert!(fc.ici_energy_fraction() > 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig {
            clusters: 17,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            tx_antennas: 1,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            min_rates: vec![0.0],
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
