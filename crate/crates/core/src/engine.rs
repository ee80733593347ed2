//! Monte-Carlo trajectories of the kicked walk with spontaneous emission.
//!
//! Each kick pulse draws emission times, splits the kick phase at those
//! times and applies the effective collapse in between. Trajectories start
//! from the ratchet state at a quasimomentum drawn from a Gaussian and use
//! their own RNG stream: `ChaCha8Rng::seed_from_u64(seed)` with the stream
//! set to the trajectory index.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::params::{derive, DerivedParams, PhysicsParams};
use crate::se::{apply_collapse, draw_se_times, sample_recoil_u, select_channel, CollapseMode, SeChannelWeights, SeEvent};
use crate::walk::{
    apply_coin, apply_free_evolution, default_n_max, momentum_distribution, ratchet_state, Channel, CoinMatrix, LadderSpacing,
    MomentumDistribution, SpectralGrid, WalkerState,
};
use crate::{Error, Result};

/// Sub-steps per kick used unless configured otherwise.
pub const DEFAULT_SUBSTEPS: usize = 4096;
/// Trajectories per ensemble unless configured otherwise.
pub const DEFAULT_TRAJECTORIES: usize = 1000;
/// Trajectories summed per work unit before the ordered reduction.
const CHUNK: usize = 8;
/// Accepted deviation of the averaged distribution from unit norm.
const ENSEMBLE_NORM_TOLERANCE: f64 = 1e-8;

/// How emission times are placed within the kick.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventTiming {
    /// The kick phase is split exactly at each emission time.
    #[default]
    Exact,
    /// Emission times are moved to the nearest sub-step boundary.
    Snap,
}

/// Coin rotation `[[cos α, i e^{iχ} sin α], [i e^{-iχ} sin α, cos α]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoinSpec {
    pub alpha: f64,
    pub chi: f64,
}

impl Default for CoinSpec {
    fn default() -> Self {
        CoinSpec { alpha: std::f64::consts::FRAC_PI_4, chi: 0.0 }
    }
}

impl CoinSpec {
    pub fn matrix(&self) -> CoinMatrix {
        CoinMatrix::rotation(self.alpha, self.chi)
    }
}

/// Everything that determines an ensemble run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub physics: PhysicsParams,
    pub steps: usize,
    /// Grid half-width; `None` picks `ceil(10 + 2 k T)`.
    pub n_max: Option<usize>,
    pub substeps: usize,
    pub trajectories: usize,
    /// Full width at half maximum of the quasimomentum distribution.
    pub beta_fwhm: f64,
    pub beta_center: f64,
    pub coin: CoinSpec,
    pub collapse: CollapseMode,
    pub spacing: LadderSpacing,
    pub timing: EventTiming,
    /// Free evolution during the pulse, split symmetrically per sub-step.
    pub finite_pulse_kinetics: bool,
    /// Apply `Φ_dyn` as a relative channel phase before each coin instead of
    /// assuming it compensated.
    #[serde(default)]
    pub apply_dynamical_phase: bool,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(physics: PhysicsParams, steps: usize) -> Self {
        RunConfig {
            physics,
            steps,
            n_max: None,
            substeps: DEFAULT_SUBSTEPS,
            trajectories: DEFAULT_TRAJECTORIES,
            beta_fwhm: 0.0,
            beta_center: 0.0,
            coin: CoinSpec::default(),
            collapse: CollapseMode::MeanCos,
            spacing: LadderSpacing::Unit,
            timing: EventTiming::Exact,
            finite_pulse_kinetics: false,
            apply_dynamical_phase: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        if self.substeps == 0 {
            return Err(Error::InvalidParams("substeps must be at least 1".into()));
        }
        if self.trajectories == 0 {
            return Err(Error::InvalidParams("trajectories must be at least 1".into()));
        }
        if !(self.beta_fwhm >= 0.0 && self.beta_fwhm.is_finite()) {
            return Err(Error::InvalidParams("beta_fwhm must be finite and non-negative".into()));
        }
        if !self.beta_center.is_finite() {
            return Err(Error::InvalidParams("beta_center must be finite".into()));
        }
        if self.collapse == CollapseMode::ExactCos && self.spacing != LadderSpacing::Half {
            return Err(Error::ModeMismatch { mode: self.collapse.name() });
        }
        if self.finite_pulse_kinetics {
            match self.physics.kick_period {
                Some(p) if p > self.physics.tau_p => {}
                _ => {
                    return Err(Error::InvalidParams(
                        "finite-pulse kinetics needs a kick_period longer than tau_p".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// σ of the quasimomentum Gaussian.
    pub fn beta_sigma(&self) -> f64 {
        self.beta_fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }
}

/// A validated configuration with its derived quantities.
#[derive(Clone, Debug)]
pub struct Simulation {
    config: RunConfig,
    derived: DerivedParams,
    weights: SeChannelWeights,
    coin: CoinMatrix,
    n_max: usize,
    grid: SpectralGrid,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let derived = derive(&config.physics)?;
        let weights = SeChannelWeights::new(&config.physics, &derived);
        let coin = config.coin.matrix();
        let k = derived.effective_kicks();
        let n_max = config.n_max.unwrap_or_else(|| default_n_max(k[0].abs().max(k[1].abs()), config.steps));
        let grid = SpectralGrid::new(n_max, config.spacing);
        Ok(Simulation { config, derived, weights, coin, n_max, grid })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn derived(&self) -> &DerivedParams {
        &self.derived
    }

    pub fn weights(&self) -> &SeChannelWeights {
        &self.weights
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn kick_spec(&self) -> KickSpec {
        let k = self.derived.effective_kicks();
        let p = &self.config.physics;
        let kinetic = if self.config.finite_pulse_kinetics {
            p.kick_period.map(|period| p.tau * p.tau_p / period)
        } else {
            None
        };
        KickSpec {
            strengths: [k[0], -k[1]],
            tau_p: p.tau_p,
            substeps: self.config.substeps,
            timing: self.config.timing,
            kinetic_tau: kinetic,
            mode: self.config.collapse,
        }
    }

    /// Free-evolution phase scale applied after the pulse.
    fn free_tau(&self) -> f64 {
        let p = &self.config.physics;
        match (self.config.finite_pulse_kinetics, p.kick_period) {
            (true, Some(period)) => p.tau * (1.0 - p.tau_p / period),
            _ => p.tau,
        }
    }
}

/// Parameters of one kick pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickSpec {
    /// Signed phase strengths: channel `m` gets `exp(i s_m cos θ)` over the pulse.
    pub strengths: [f64; 2],
    pub tau_p: f64,
    pub substeps: usize,
    pub timing: EventTiming,
    /// Free-evolution phase scale accumulated during the pulse, if modelled.
    pub kinetic_tau: Option<f64>,
    pub mode: CollapseMode,
}

/// Applies one kick pulse with the given emission events, in time order.
pub fn kick_with_events(
    state: &mut WalkerState,
    grid: &SpectralGrid,
    spec: &KickSpec,
    events: &[SeEvent],
    weights: &SeChannelWeights,
) -> Result<()> {
    if spec.substeps == 0 {
        return Err(Error::InvalidParams("substeps must be at least 1".into()));
    }
    let n = spec.substeps;
    let boundary = |t: f64| -> usize {
        let b = (t / spec.tau_p * n as f64).round();
        (b.max(0.0) as usize).min(n)
    };
    match spec.kinetic_tau {
        None => {
            // Kick factors commute, so the phase between events is applied at once.
            let mut done = 0.0;
            for ev in events {
                let at = match spec.timing {
                    EventTiming::Exact => ev.t / spec.tau_p,
                    EventTiming::Snap => boundary(ev.t) as f64 / n as f64,
                };
                partial_kick(state, grid, spec, at - done)?;
                done = at;
                apply_collapse(state, ev, weights, spec.mode)?;
            }
            partial_kick(state, grid, spec, 1.0 - done)?;
        }
        Some(kinetic) => {
            let mut next = 0;
            let frac = 1.0 / n as f64;
            for s in 0..n {
                while next < events.len() && boundary(events[next].t) == s {
                    apply_collapse(state, &events[next], weights, spec.mode)?;
                    next += 1;
                }
                partial_kick(state, grid, spec, frac / 2.0)?;
                apply_free_evolution(state, kinetic * frac);
                partial_kick(state, grid, spec, frac / 2.0)?;
            }
            for ev in &events[next..] {
                apply_collapse(state, ev, weights, spec.mode)?;
            }
        }
    }
    state.renormalize()?;
    Ok(())
}

fn partial_kick(state: &mut WalkerState, grid: &SpectralGrid, spec: &KickSpec, fraction: f64) -> Result<()> {
    if fraction <= 0.0 {
        return Ok(());
    }
    grid.kick(state, [spec.strengths[0] * fraction, spec.strengths[1] * fraction])
}

/// Draws the emission events of one pulse: times, then channel and recoil
/// per event.
pub fn draw_events<R: Rng + ?Sized>(rng: &mut R, weights: &SeChannelWeights, tau_p: f64) -> Result<Vec<SeEvent>> {
    let times = draw_se_times(rng, weights.gamma(), tau_p);
    times
        .into_iter()
        .map(|t| {
            let channel = select_channel(rng, weights)?;
            let u = sample_recoil_u(rng);
            SeEvent::new(t, channel, u, tau_p)
        })
        .collect()
}

/// One kick pulse with randomly drawn emissions; returns the event count.
pub fn kick_with_se<R: Rng + ?Sized>(
    state: &mut WalkerState,
    grid: &SpectralGrid,
    spec: &KickSpec,
    weights: &SeChannelWeights,
    rng: &mut R,
) -> Result<usize> {
    let events = draw_events(rng, weights, spec.tau_p)?;
    kick_with_events(state, grid, spec, &events, weights)?;
    Ok(events.len())
}

/// Output of a single trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub beta: f64,
    pub distributions: Vec<MomentumDistribution>,
    pub events: usize,
}

/// Runs `T` repetitions of kick, coin and free evolution from the ratchet
/// state at quasimomentum `beta`, recording `P(n; t)` for `t = 0..=T`.
pub fn run_trajectory<R: Rng + ?Sized>(
    sim: &Simulation,
    beta: f64,
    rng: &mut R,
    mut on_step: impl FnMut(usize),
) -> Result<TrajectoryResult> {
    let mut state = ratchet_state(sim.n_max, beta, sim.config.spacing)?;
    let spec = sim.kick_spec();
    let free_tau = sim.free_tau();
    let dyn_phase = sim
        .config
        .apply_dynamical_phase
        .then(|| Complex64::from_polar(1.0, sim.derived.phi_dyn));
    let mut distributions = Vec::with_capacity(sim.config.steps + 1);
    distributions.push(momentum_distribution(&state, 0));
    let mut events = 0;
    for t in 1..=sim.config.steps {
        events += kick_with_se(&mut state, &sim.grid, &spec, &sim.weights, rng)?;
        if let Some(phase) = dyn_phase {
            state.channel_mut(Channel::Two).iter_mut().for_each(|a| *a *= phase);
        }
        apply_coin(&mut state, &sim.coin);
        apply_free_evolution(&mut state, free_tau);
        distributions.push(momentum_distribution(&state, t));
        on_step(t);
    }
    Ok(TrajectoryResult { beta, distributions, events })
}

/// The RNG of trajectory `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Quasimomentum and full trajectory for index `index`.
pub fn run_indexed_trajectory(
    sim: &Simulation,
    index: usize,
    on_step: impl FnMut(usize),
) -> Result<TrajectoryResult> {
    let mut rng = trajectory_rng(sim.config.seed, index);
    let beta = if sim.config.beta_fwhm > 0.0 {
        let normal = Normal::new(sim.config.beta_center, sim.config.beta_sigma())
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        normal.sample(&mut rng)
    } else {
        sim.config.beta_center
    };
    run_trajectory(sim, beta, &mut rng, on_step)
}

/// Reproducible description of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub derived: DerivedParams,
    pub seed: u64,
    pub trajectories: usize,
    pub steps: usize,
    pub n_max: usize,
    pub substeps: usize,
    pub version: String,
}

/// Averaged distributions and per-trajectory statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    pub distributions: Vec<MomentumDistribution>,
    pub event_counts: Vec<usize>,
    pub betas: Vec<f64>,
    pub metadata: RunMetadata,
    pub elapsed: Duration,
}

impl EnsembleResult {
    pub fn total_events(&self) -> usize {
        self.event_counts.iter().sum()
    }

    pub fn mean_events_per_kick(&self) -> f64 {
        let kicks = self.metadata.steps * self.event_counts.len();
        if kicks == 0 {
            0.0
        } else {
            self.total_events() as f64 / kicks as f64
        }
    }
}

struct Partial {
    sums: Vec<MomentumDistribution>,
    events: Vec<usize>,
    betas: Vec<f64>,
}

impl Partial {
    fn empty(sim: &Simulation) -> Self {
        Partial {
            sums: (0..=sim.config.steps).map(|t| MomentumDistribution::zeros(sim.n_max, t)).collect(),
            events: Vec::new(),
            betas: Vec::new(),
        }
    }

    fn add(&mut self, run: &TrajectoryResult) {
        for (s, d) in self.sums.iter_mut().zip(&run.distributions) {
            s.accumulate(d, 1.0);
        }
        self.events.push(run.events);
        self.betas.push(run.beta);
    }

    fn merge(&mut self, other: Partial) {
        for (s, d) in self.sums.iter_mut().zip(&other.sums) {
            s.accumulate(d, 1.0);
        }
        self.events.extend(other.events);
        self.betas.extend(other.betas);
    }
}

/// Runs the trajectories `indices` in the given order and sums them.
/// Exposed so that order independence can be checked.
pub fn run_ordered(sim: &Simulation, indices: &[usize]) -> Result<Vec<MomentumDistribution>> {
    let mut acc = Partial::empty(sim);
    for &i in indices {
        acc.add(&run_indexed_trajectory(sim, i, |_| {})?);
    }
    let n = indices.len().max(1) as f64;
    acc.sums.iter_mut().for_each(|s| s.scale(1.0 / n));
    Ok(acc.sums)
}

/// Runs the full ensemble on the current rayon pool. `progress` receives
/// `(step, trajectory)` after every step of every trajectory.
pub fn run_ensemble(sim: &Simulation, progress: Option<&(dyn Fn(usize, usize) + Sync)>) -> Result<EnsembleResult> {
    let start = Instant::now();
    let n = sim.config.trajectories;
    let chunks: Vec<std::ops::Range<usize>> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    let partials: Vec<Result<Partial>> = chunks
        .into_par_iter()
        .map(|range| {
            let mut acc = Partial::empty(sim);
            for i in range {
                let run = run_indexed_trajectory(sim, i, |t| {
                    if let Some(cb) = progress {
                        cb(t, i);
                    }
                })?;
                acc.add(&run);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Partial::empty(sim);
    for p in partials {
        total.merge(p?);
    }
    total.sums.iter_mut().for_each(|s| s.scale(1.0 / n as f64));
    for d in &total.sums {
        let dev = (d.total() - 1.0).abs();
        if dev > ENSEMBLE_NORM_TOLERANCE {
            return Err(Error::Internal(format!("averaged distribution at step {} off by {dev:.3e}", d.step)));
        }
    }
    Ok(EnsembleResult {
        distributions: total.sums,
        event_counts: total.events,
        betas: total.betas,
        metadata: RunMetadata {
            derived: sim.derived.clone(),
            seed: sim.config.seed,
            trajectories: n,
            steps: sim.config.steps,
            n_max: sim.n_max,
            substeps: sim.config.substeps,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        elapsed: start.elapsed(),
    })
}

/// Runs the ensemble on a dedicated pool of `threads` workers.
pub fn run_ensemble_with_threads(
    sim: &Simulation,
    threads: usize,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<EnsembleResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_ensemble(sim, progress))
}
