//! Analog precoder search by particle swarm optimization over complex
//! matrices, with annulus boundary compression toward unit modulus.
//!
//! Each particle owns a ChaCha8 stream keyed by its index, so a run is
//! reproducible for a given seed regardless of evaluation order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::Scheme;
use crate::channel::{FreqChannel, SystemConfig};
use crate::error::{Error, Result};
use crate::rsma_model::{ClusterPlan, DecodeStep, EffectiveCoefficients, PrecodedBeams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    /// Swarm size `I`.
    pub swarm_size: usize,
    /// Iterations `T_max`.
    pub iterations: usize,
    pub cognitive: f64,
    pub social: f64,
    pub inertia_max: f64,
    pub inertia_min: f64,
    /// Standard deviation of the initial complex velocities.
    pub velocity_std: f64,
    /// Seed particle 0 with the incumbent analog precoder when one is given.
    pub warm_start: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 400,
            iterations: 100,
            cognitive: 1.4,
            social: 1.4,
            inertia_max: 0.9,
            inertia_min: 0.4,
            velocity_std: 0.1,
            warm_start: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 || self.iterations == 0 {
            return Err(Error::Config("swarm_size and iterations must be positive".into()));
        }
        let finite = [
            self.cognitive,
            self.social,
            self.inertia_max,
            self.inertia_min,
            self.velocity_std,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("PSO coefficients must be finite and non-negative".into()));
        }
        if self.inertia_min > self.inertia_max {
            return Err(Error::Config("inertia_min exceeds inertia_max".into()));
        }
        Ok(())
    }

    /// Linearly decreasing inertia `ω(t)`.
    pub fn inertia(&self, t: usize) -> f64 {
        self.inertia_max - (self.inertia_max - self.inertia_min) * t as f64 / self.iterations as f64
    }
}

/// Swarm positions, velocities and bests.
#[derive(Debug, Clone)]
pub struct PsoState {
    pub positions: Vec<DMatrix<Complex64>>,
    pub velocities: Vec<DMatrix<Complex64>>,
    pub personal_best: Vec<DMatrix<Complex64>>,
    pub personal_fitness: Vec<f64>,
    pub global_best: DMatrix<Complex64>,
    pub global_fitness: f64,
    rngs: Vec<ChaCha8Rng>,
}

fn random_phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
}

impl PsoState {
    /// Random swarm: moduli `U[0,1]`, uniform phases, complex Gaussian
    /// velocities. Particle 0 starts at `incumbent` when given.
    pub fn initialize(
        rows: usize,
        cols: usize,
        cfg: &PsoConfig,
        seed: u64,
        incumbent: Option<&DMatrix<Complex64>>,
    ) -> Self {
        let vel = Normal::new(0.0, cfg.velocity_std / std::f64::consts::SQRT_2)
            .expect("velocity std validated");
        let mut rngs = Vec::with_capacity(cfg.swarm_size);
        let mut positions = Vec::with_capacity(cfg.swarm_size);
        let mut velocities = Vec::with_capacity(cfg.swarm_size);
        for l in 0..cfg.swarm_size {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let pos = DMatrix::from_fn(rows, cols, |_, _| {
                let r = rng.random::<f64>();
                r * random_phase(&mut rng)
            });
            let v = DMatrix::from_fn(rows, cols, |_, _| {
                Complex64::new(vel.sample(&mut rng), vel.sample(&mut rng))
            });
            positions.push(match (l, incumbent) {
                (0, Some(inc)) => inc.clone(),
                _ => pos,
            });
            velocities.push(v);
            rngs.push(rng);
        }
        Self {
            personal_best: positions.clone(),
            personal_fitness: vec![f64::NEG_INFINITY; cfg.swarm_size],
            global_best: positions[0].clone(),
            global_fitness: f64::NEG_INFINITY,
            positions,
            velocities,
            rngs,
        }
    }

    /// Evaluates every particle and updates personal and global bests.
    /// Returns the fitness values in particle order.
    pub fn evaluate<F: FnMut(&DMatrix<Complex64>) -> f64>(&mut self, fitness: &mut F) -> Vec<f64> {
        let values: Vec<f64> = self.positions.iter().map(|p| fitness(p)).collect();
        for (l, &f) in values.iter().enumerate() {
            if f > self.personal_fitness[l] {
                self.personal_fitness[l] = f;
                self.personal_best[l].copy_from(&self.positions[l]);
            }
            if f > self.global_fitness {
                self.global_fitness = f;
                self.global_best.copy_from(&self.positions[l]);
            }
        }
        values
    }

    /// Velocity and position update with fresh `β1, β2 ~ U[0,1]` per entry.
    pub fn step(&mut self, inertia: f64, cognitive: f64, social: f64) {
        let g = &self.global_best;
        for l in 0..self.positions.len() {
            let rng = &mut self.rngs[l];
            let (a, v, p) = (&mut self.positions[l], &mut self.velocities[l], &self.personal_best[l]);
            for i in 0..a.len() {
                let b1: f64 = rng.random();
                let b2: f64 = rng.random();
                v[i] = inertia * v[i] + cognitive * b1 * (p[i] - a[i]) + social * b2 * (g[i] - a[i]);
                a[i] += v[i];
            }
        }
    }

    /// Pulls positions into the annulus `t/T_max ≤ |a| ≤ 1` and lifts
    /// personal bests to the inner radius.
    pub fn compress(&mut self, t: usize, t_max: usize) {
        let inner = t as f64 / t_max as f64;
        for l in 0..self.positions.len() {
            let rng = &mut self.rngs[l];
            for a in self.positions[l].iter_mut() {
                *a = clamp_modulus(*a, inner, 1.0, rng);
            }
            for p in self.personal_best[l].iter_mut() {
                *p = clamp_modulus(*p, inner, f64::INFINITY, rng);
            }
        }
    }
}

fn clamp_modulus(z: Complex64, inner: f64, outer: f64, rng: &mut ChaCha8Rng) -> Complex64 {
    let r = z.norm();
    if r < inner {
        if r == 0.0 {
            inner * random_phase(rng)
        } else {
            z * (inner / r)
        }
    } else if r > outer {
        z / r
    } else {
        z
    }
}

/// `pso_step` on a whole swarm.
pub fn pso_step(state: &mut PsoState, inertia: f64, cognitive: f64, social: f64) {
    state.step(inertia, cognitive, social);
}

/// `boundary_compress` on a whole swarm.
pub fn boundary_compress(state: &mut PsoState, t: usize, t_max: usize) {
    state.compress(t, t_max);
}

/// Entry-wise phase projection; zero entries map to phase zero.
pub fn project_unit_modulus(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    m.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

#[derive(Debug, Clone)]
pub struct PsoOutcome {
    /// Global best projected to unit modulus.
    pub analog: DMatrix<Complex64>,
    /// Fitness of the global best before projection.
    pub best_fitness: f64,
    /// Global-best fitness after initialization and after each iteration.
    pub trace: Vec<f64>,
    /// Every particle scored zero at initialization.
    pub initial_all_zero: bool,
    pub evaluations: usize,
}

impl PsoOutcome {
    pub fn feasible(&self) -> bool {
        self.best_fitness > 0.0
    }
}

/// Runs the swarm against an arbitrary fitness.
pub fn run_pso<F: FnMut(&DMatrix<Complex64>) -> f64>(
    rows: usize,
    cols: usize,
    cfg: &PsoConfig,
    seed: u64,
    incumbent: Option<&DMatrix<Complex64>>,
    mut fitness: F,
) -> PsoOutcome {
    let incumbent = incumbent.filter(|_| cfg.warm_start);
    let mut state = PsoState::initialize(rows, cols, cfg, seed, incumbent);
    let initial = state.evaluate(&mut fitness);
    let initial_all_zero = initial.iter().all(|f| *f <= 0.0);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(state.global_fitness);
    for t in 1..=cfg.iterations {
        state.step(cfg.inertia(t), cfg.cognitive, cfg.social);
        state.compress(t, cfg.iterations);
        state.evaluate(&mut fitness);
        trace.push(state.global_fitness);
    }
    PsoOutcome {
        analog: project_unit_modulus(&state.global_best),
        best_fitness: state.global_fitness,
        trace,
        initial_all_zero,
        evaluations: cfg.swarm_size * (cfg.iterations + 1),
    }
}

/// Scores analog candidates for a fixed digital precoder: the scheme's sum
/// rate when the power budget and QoS hold, zero otherwise.
pub struct AnalogFitness<'a> {
    channel: &'a FreqChannel,
    digital: &'a [DMatrix<Complex64>],
    plan: &'a ClusterPlan,
    steps: Vec<DecodeStep>,
    scheme: &'a Scheme,
    noise_var: f64,
    total_power: f64,
    min_rates: &'a [f64],
    coeffs: EffectiveCoefficients,
}

impl<'a> AnalogFitness<'a> {
    pub fn new(
        channel: &'a FreqChannel,
        digital: &'a [DMatrix<Complex64>],
        plan: &'a ClusterPlan,
        cfg: &'a SystemConfig,
        scheme: &'a Scheme,
    ) -> Self {
        Self {
            channel,
            digital,
            plan,
            steps: scheme.decode_steps(channel.users()),
            scheme,
            noise_var: cfg.noise_var,
            total_power: cfg.total_power,
            min_rates: &cfg.min_rates,
            coeffs: EffectiveCoefficients::zeros(channel.users(), channel.subcarriers()),
        }
    }

    pub fn power(&self, analog: &DMatrix<Complex64>) -> f64 {
        PrecodedBeams::new(analog, self.digital).power()
    }

    pub fn eval(&mut self, analog: &DMatrix<Complex64>) -> f64 {
        let beams = PrecodedBeams::new(analog, self.digital);
        if beams.power() > self.total_power * (1.0 + 1e-9) {
            return 0.0;
        }
        self.coeffs.fill(self.channel, &beams);
        let rates =
            crate::baselines::evaluate_steps(&self.coeffs, self.plan, self.noise_var, &self.steps);
        if self.scheme.qos_satisfied(&rates, self.min_rates) {
            rates.sum_rate
        } else {
            0.0
        }
    }
}

/// `fitness(F_RF)` for a fixed digital precoder.
pub fn fitness(
    analog: &DMatrix<Complex64>,
    digital: &[DMatrix<Complex64>],
    channel: &FreqChannel,
    plan: &ClusterPlan,
    cfg: &SystemConfig,
    scheme: &Scheme,
) -> f64 {
    AnalogFitness::new(channel, digital, plan, cfg, scheme).eval(analog)
}

/// Result of the analog stage, including the digital precoder it was run
/// against (rescaled if the swarm started fully infeasible).
#[derive(Debug, Clone)]
pub struct AnalogStage {
    pub outcome: PsoOutcome,
    pub digital: Vec<DMatrix<Complex64>>,
    pub rescaled: bool,
}

/// Optimizes `F_RF` for a fixed `F_BB`.
///
/// If no initial particle is feasible, `F_BB` is scaled so every initial
/// particle meets the power budget and the swarm is rerun once; if that
/// also fails the outcome is flagged infeasible.
#[allow(clippy::too_many_arguments)]
pub fn run_abc_pso(
    channel: &FreqChannel,
    digital: &[DMatrix<Complex64>],
    plan: &ClusterPlan,
    cfg: &SystemConfig,
    scheme: &Scheme,
    pso: &PsoConfig,
    seed: u64,
    incumbent: Option<&DMatrix<Complex64>>,
) -> Result<AnalogStage> {
    pso.validate()?;
    let (rows, cols) = (channel.antennas(), channel.users());
    if digital.len() != channel.subcarriers()
        || digital.iter().any(|d| d.shape() != (cols, cols + 1))
    {
        return Err(Error::Dimension("digital precoders do not match the channel".into()));
    }
    let run = |digital: &[DMatrix<Complex64>]| {
        let mut fit = AnalogFitness::new(channel, digital, plan, cfg, scheme);
        run_pso(rows, cols, pso, seed, incumbent, |a| fit.eval(a))
    };
    let outcome = run(digital);
    if !outcome.initial_all_zero {
        return Ok(AnalogStage {
            outcome,
            digital: digital.to_vec(),
            rescaled: false,
        });
    }
    let fit = AnalogFitness::new(channel, digital, plan, cfg, scheme);
    let state = PsoState::initialize(rows, cols, pso, seed, incumbent.filter(|_| pso.warm_start));
    let max_power = state
        .positions
        .iter()
        .map(|p| fit.power(p))
        .fold(0.0, f64::max);
    if max_power <= 0.0 {
        return Ok(AnalogStage {
            outcome,
            digital: digital.to_vec(),
            rescaled: false,
        });
    }
    let scale = (cfg.total_power / (max_power * (1.0 + 1e-6))).sqrt().min(1.0);
    let scaled: Vec<_> = digital.iter().map(|d| d * Complex64::new(scale, 0.0)).collect();
    let outcome = run(&scaled);
    Ok(AnalogStage {
        outcome,
        digital: scaled,
        rescaled: true,
    })
}
