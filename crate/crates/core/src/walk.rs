//! Closed-system walk: walker state, spectral kick, coin and free evolution.
//!
//! A [`WalkerState`] holds one amplitude ladder per internal level. Ladder
//! index `j` carries physical momentum `p = spacing * j + beta`. Kicks are
//! diagonal in the angle θ conjugate to `p` and are applied by transforming a
//! ladder onto a power-of-two θ grid and back.
//!
//! Channel 1 is kicked with `exp(+i k₁ cos θ)` and channel 2 with
//! `exp(-i k₂ cos θ)`. Starting from the ratchet state channel 1 drifts
//! towards negative momentum (by k₁/2 per kick on average) and channel 2
//! towards positive momentum.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::params::RESONANT_TAU;
use crate::{Error, Result};

/// Largest tolerated population on the outermost ladder sites.
pub const BOUNDARY_TOLERANCE: f64 = 1e-8;

const UNITARITY_TOLERANCE: f64 = 1e-12;

/// Momentum spacing between neighbouring ladder sites.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderSpacing {
    /// Integer momenta, quasimomentum in `[0, 1)`.
    #[default]
    Unit,
    /// Half-integer momenta, quasimomentum in `[0, 1/2)`. Needed to represent
    /// single-photon recoils exactly.
    Half,
}

impl LadderSpacing {
    pub fn value(self) -> f64 {
        match self {
            LadderSpacing::Unit => 1.0,
            LadderSpacing::Half => 0.5,
        }
    }

    /// Ladder sites per unit of momentum.
    pub fn sites_per_unit(self) -> usize {
        match self {
            LadderSpacing::Unit => 1,
            LadderSpacing::Half => 2,
        }
    }
}

/// Internal level of the walker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
        }
    }

    pub fn other(self) -> Channel {
        match self {
            Channel::One => Channel::Two,
            Channel::Two => Channel::One,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::One => "1",
            Channel::Two => "2",
        })
    }
}

/// Two internal channels of complex amplitudes over a momentum ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkerState {
    beta: f64,
    spacing: LadderSpacing,
    n_max: usize,
    amps: [Vec<Complex64>; 2],
}

impl WalkerState {
    /// Empty state (all amplitudes zero) with quasimomentum 0.
    pub fn zeros(n_max: usize, spacing: LadderSpacing) -> Self {
        let len = 2 * n_max * spacing.sites_per_unit() + 1;
        WalkerState {
            beta: 0.0,
            spacing,
            n_max,
            amps: [vec![Complex64::default(); len], vec![Complex64::default(); len]],
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spacing(&self) -> LadderSpacing {
        self.spacing
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Largest ladder index `j`.
    pub fn half_width(&self) -> usize {
        self.n_max * self.spacing.sites_per_unit()
    }

    /// Ladder indices in storage order.
    pub fn ladder(&self) -> impl Iterator<Item = i64> + '_ {
        let h = self.half_width() as i64;
        -h..=h
    }

    pub fn channel(&self, ch: Channel) -> &[Complex64] {
        &self.amps[ch.index()]
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut [Complex64] {
        &mut self.amps[ch.index()]
    }

    pub fn channels_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        let [a, b] = &mut self.amps;
        (a, b)
    }

    /// Amplitude at ladder index `j`, zero outside the grid.
    pub fn amplitude(&self, ch: Channel, j: i64) -> Complex64 {
        self.slot(j)
            .map(|i| self.amps[ch.index()][i])
            .unwrap_or_default()
    }

    pub fn set_amplitude(&mut self, ch: Channel, j: i64, value: Complex64) {
        let i = self.slot(j).expect("ladder index outside grid");
        self.amps[ch.index()][i] = value;
    }

    fn slot(&self, j: i64) -> Option<usize> {
        let h = self.half_width() as i64;
        (-h..=h).contains(&j).then(|| (j + h) as usize)
    }

    /// Physical momentum of ladder index `j`.
    pub fn momentum(&self, j: i64) -> f64 {
        self.spacing.value() * j as f64 + self.beta
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().flatten().map(|a| a.norm_sqr()).sum()
    }

    pub fn channel_norm_sqr(&self, ch: Channel) -> f64 {
        self.amps[ch.index()].iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the norm before rescaling.
    pub fn renormalize(&mut self) -> Result<f64> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(Error::Internal(format!("cannot renormalize state of norm {norm}")));
        }
        let inv = 1.0 / norm;
        self.amps.iter_mut().flatten().for_each(|a| *a *= inv);
        Ok(norm)
    }

    /// Mean physical momentum.
    pub fn mean_momentum(&self) -> f64 {
        let norm = self.norm_sqr();
        self.ladder()
            .enumerate()
            .map(|(i, j)| {
                let w = self.amps[0][i].norm_sqr() + self.amps[1][i].norm_sqr();
                w * self.momentum(j)
            })
            .sum::<f64>()
            / norm
    }

    /// Largest population on the two outermost sites of either channel.
    pub fn boundary_occupation(&self) -> f64 {
        self.amps
            .iter()
            .flat_map(|a| [a[0].norm_sqr(), a[a.len() - 1].norm_sqr()])
            .fold(0.0, f64::max)
    }

    pub fn check_boundary(&self) -> Result<()> {
        let occupation = self.boundary_occupation();
        if occupation < BOUNDARY_TOLERANCE {
            Ok(())
        } else {
            Err(Error::GridTooSmall { n_max: self.n_max, occupation })
        }
    }

    /// Shifts every physical momentum by `delta_p`. The quasimomentum is
    /// folded back into its zone and the remainder carried into the ladder.
    pub fn shift_momentum(&mut self, delta_p: f64) -> Result<()> {
        let s = self.spacing.value();
        let raw = self.beta + delta_p;
        let carry = (raw / s).floor();
        let mut beta = raw - carry * s;
        let mut carry = carry as i64;
        if beta >= s {
            // rounding at the top edge of the zone
            beta -= s;
            carry += 1;
        }
        self.beta = beta.max(0.0);
        self.shift_ladder(carry)
    }

    /// Moves every amplitude from index `j` to `j + carry`.
    pub fn shift_ladder(&mut self, carry: i64) -> Result<()> {
        if carry == 0 {
            return Ok(());
        }
        let len = self.amps[0].len();
        let mut lost = 0.0;
        for a in self.amps.iter_mut() {
            let shift = carry.unsigned_abs() as usize;
            if shift >= len {
                lost += a.iter().map(|x| x.norm_sqr()).sum::<f64>();
                a.iter_mut().for_each(|x| *x = Complex64::default());
                continue;
            }
            if carry > 0 {
                lost += a[len - shift..].iter().map(|x| x.norm_sqr()).sum::<f64>();
                a.rotate_right(shift);
                a[..shift].iter_mut().for_each(|x| *x = Complex64::default());
            } else {
                lost += a[..shift].iter().map(|x| x.norm_sqr()).sum::<f64>();
                a.rotate_left(shift);
                a[len - shift..].iter_mut().for_each(|x| *x = Complex64::default());
            }
        }
        if lost >= BOUNDARY_TOLERANCE {
            return Err(Error::GridTooSmall { n_max: self.n_max, occupation: lost });
        }
        Ok(())
    }
}

/// The θ grid and transform plans for one ladder size.
#[derive(Clone)]
pub struct SpectralGrid {
    size: usize,
    half_width: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// cos θ at each grid point; θ is the angle conjugate to momentum.
    cos_theta: Vec<f64>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("size", &self.size)
            .field("half_width", &self.half_width)
            .finish()
    }
}

impl SpectralGrid {
    /// Grid for ladders of `n_max` with the given spacing: the smallest power
    /// of two at least `4 * (half_width + 1)`.
    pub fn new(n_max: usize, spacing: LadderSpacing) -> Self {
        let half_width = n_max * spacing.sites_per_unit();
        let size = (4 * (half_width + 1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        let per_unit = spacing.sites_per_unit() as f64;
        let cos_theta = (0..size)
            .map(|l| (per_unit * 2.0 * PI * l as f64 / size as f64).cos())
            .collect();
        SpectralGrid {
            size,
            half_width,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            cos_theta,
        }
    }

    pub fn for_state(state: &WalkerState) -> Self {
        Self::new(state.n_max(), state.spacing())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Multiplies `ladder` by `exp(i * strength * cos θ)`.
    ///
    /// Returns the population pushed outside the ladder, which is discarded.
    pub fn apply_cos_phase(&self, ladder: &mut [Complex64], strength: f64) -> f64 {
        if strength == 0.0 {
            return 0.0;
        }
        assert_eq!(ladder.len(), 2 * self.half_width + 1);
        let m = self.size;
        let h = self.half_width as i64;
        let mut buf = vec![Complex64::default(); m];
        for (i, a) in ladder.iter().enumerate() {
            let j = i as i64 - h;
            buf[j.rem_euclid(m as i64) as usize] = *a;
        }
        self.forward.process(&mut buf);
        // The forward transform evaluates ψ(-θ); cos is even.
        for (x, c) in buf.iter_mut().zip(&self.cos_theta) {
            *x *= Complex64::cis(strength * c);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / m as f64;
        let mut kept = vec![false; m];
        for (i, a) in ladder.iter_mut().enumerate() {
            let j = i as i64 - h;
            let slot = j.rem_euclid(m as i64) as usize;
            *a = buf[slot] * scale;
            kept[slot] = true;
        }
        buf.iter()
            .zip(&kept)
            .filter(|(_, k)| !**k)
            .map(|(x, _)| x.norm_sqr() * scale * scale)
            .sum()
    }

    /// Applies `exp(i s₁ cos θ)` to channel 1 and `exp(i s₂ cos θ)` to channel 2.
    pub fn kick(&self, state: &mut WalkerState, strengths: [f64; 2]) -> Result<()> {
        let n_max = state.n_max();
        let mut spill = 0.0;
        for (a, s) in state.amps.iter_mut().zip(strengths) {
            spill += self.apply_cos_phase(a, s);
        }
        if spill >= BOUNDARY_TOLERANCE {
            return Err(Error::GridTooSmall { n_max, occupation: spill });
        }
        state.check_boundary()
    }
}

/// A 2×2 unitary acting on the internal levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoinMatrix([[Complex64; 2]; 2]);

impl CoinMatrix {
    pub fn new(m: [[Complex64; 2]; 2]) -> Result<Self> {
        let dev = unitarity_deviation(&m);
        if dev > UNITARITY_TOLERANCE {
            return Err(Error::NonUnitaryCoin(dev));
        }
        Ok(CoinMatrix(m))
    }

    /// The 50:50 beam splitter `(1/√2) [[1, i], [i, 1]]`.
    pub fn balanced() -> Self {
        Self::rotation(PI / 4.0, 0.0)
    }

    /// `[[cos α, i e^{iχ} sin α], [i e^{-iχ} sin α, cos α]]`; α = π/4, χ = 0
    /// is [`CoinMatrix::balanced`].
    pub fn rotation(alpha: f64, chi: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        let i = Complex64::i();
        CoinMatrix([
            [Complex64::new(c, 0.0), i * Complex64::cis(chi) * s],
            [i * Complex64::cis(-chi) * s, Complex64::new(c, 0.0)],
        ])
    }

    pub fn entries(&self) -> &[[Complex64; 2]; 2] {
        &self.0
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }
}

fn unitarity_deviation(m: &[[Complex64; 2]; 2]) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let dot: Complex64 = (0..2).map(|k| m[k][r].conj() * m[k][c]).sum();
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((dot - target).norm());
        }
    }
    dev
}

/// Per-channel and total momentum populations on the integer grid.
///
/// Bin `n` collects the ladder sites whose physical momentum rounds to `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumDistribution {
    pub step: usize,
    pub n_min: i64,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub p_total: Vec<f64>,
}

impl MomentumDistribution {
    /// All-zero distribution covering `[-(n_max + 1), n_max + 1]`.
    pub fn zeros(n_max: usize, step: usize) -> Self {
        let len = 2 * n_max + 3;
        MomentumDistribution {
            step,
            n_min: -(n_max as i64 + 1),
            p1: vec![0.0; len],
            p2: vec![0.0; len],
            p_total: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.p_total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_total.is_empty()
    }

    pub fn n_values(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len() as i64).map(move |i| self.n_min + i)
    }

    /// Total probability at momentum class `n`, zero outside the grid.
    pub fn total_at(&self, n: i64) -> f64 {
        let i = n - self.n_min;
        if i < 0 || i as usize >= self.len() {
            0.0
        } else {
            self.p_total[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.p_total.iter().sum()
    }

    /// `self += weight * other`; grids must match.
    pub fn accumulate(&mut self, other: &MomentumDistribution, weight: f64) {
        assert_eq!(self.n_min, other.n_min);
        assert_eq!(self.len(), other.len());
        for (dst, src) in [
            (&mut self.p1, &other.p1),
            (&mut self.p2, &other.p2),
            (&mut self.p_total, &other.p_total),
        ] {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += weight * s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in [&mut self.p1, &mut self.p2, &mut self.p_total] {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// L1 distance between total distributions, over the union of both grids.
    pub fn l1_distance(&self, other: &MomentumDistribution) -> f64 {
        l1_on_union(self.n_min, &self.p_total, other.n_min, &other.p_total)
    }

    /// L1 distance between the partial distributions of one channel.
    pub fn channel_l1_distance(&self, other: &MomentumDistribution, ch: Channel) -> f64 {
        let pick = |d: &MomentumDistribution| match ch {
            Channel::One => d.p1.clone(),
            Channel::Two => d.p2.clone(),
        };
        l1_on_union(self.n_min, &pick(self), other.n_min, &pick(other))
    }

    /// Largest elementwise difference of the total distributions.
    pub fn max_abs_difference(&self, other: &MomentumDistribution) -> f64 {
        let lo = self.n_min.min(other.n_min);
        let hi = (self.n_min + self.len() as i64).max(other.n_min + other.len() as i64);
        (lo..hi)
            .map(|n| (self.total_at(n) - other.total_at(n)).abs())
            .fold(0.0, f64::max)
    }
}

fn l1_on_union(min_a: i64, a: &[f64], min_b: i64, b: &[f64]) -> f64 {
    let at = |min: i64, v: &[f64], n: i64| {
        let i = n - min;
        if i < 0 || i as usize >= v.len() {
            0.0
        } else {
            v[i as usize]
        }
    };
    let lo = min_a.min(min_b);
    let hi = (min_a + a.len() as i64).max(min_b + b.len() as i64);
    (lo..hi).map(|n| (at(min_a, a, n) - at(min_b, b, n)).abs()).sum()
}

/// The ratchet initial state `(|1⟩+|2⟩)/√2 ⊗ (|p=β⟩ − i|p=β+1⟩)/√2`.
///
/// `beta` may be any real number; it is folded into the canonical
/// quasimomentum range with the integer part carried into the ladder.
pub fn ratchet_state(n_max: usize, beta: f64, spacing: LadderSpacing) -> Result<WalkerState> {
    if n_max < 2 {
        return Err(Error::InvalidParams(format!("n_max must be at least 2, got {n_max}")));
    }
    if !beta.is_finite() {
        return Err(Error::InvalidParams("beta must be finite".into()));
    }
    let mut state = WalkerState::zeros(n_max, spacing);
    let one = spacing.sites_per_unit() as i64;
    let amp = 0.5;
    for ch in [Channel::One, Channel::Two] {
        state.set_amplitude(ch, 0, Complex64::new(amp, 0.0));
        state.set_amplitude(ch, one, Complex64::new(0.0, -amp));
    }
    state.shift_momentum(beta)?;
    Ok(state)
}

/// Mixes the internal levels at every momentum site.
pub fn apply_coin(state: &mut WalkerState, coin: &CoinMatrix) {
    let (a, b) = state.channels_mut();
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let [nx, ny] = coin.apply([*x, *y]);
        *x = nx;
        *y = ny;
    }
}

/// The conditional kick: `exp(+i k₁ cos θ)` on channel 1, `exp(-i k₂ cos θ)` on channel 2.
pub fn apply_ideal_kick(state: &mut WalkerState, grid: &SpectralGrid, k1: f64, k2: f64) -> Result<()> {
    grid.kick(state, [k1, -k2])
}

/// Phase factor `exp(-i tau p² / 2)` evaluated with the phase reduced modulo
/// 2π before the trigonometric call, so that resonant phases are exact.
pub fn free_phase(tau: f64, p: f64) -> Complex64 {
    let turns = ((tau / RESONANT_TAU) * p * p).rem_euclid(1.0);
    Complex64::cis(-2.0 * PI * turns)
}

/// Free evolution over one kick period.
pub fn apply_free_evolution(state: &mut WalkerState, tau: f64) {
    let phases: Vec<Complex64> = state.ladder().map(|j| free_phase(tau, state.momentum(j))).collect();
    for a in state.amps.iter_mut() {
        a.iter_mut().zip(&phases).for_each(|(x, f)| *x *= f);
    }
}

/// One ideal walk step: kick, coin, free evolution.
pub fn walk_step_ideal(
    state: &mut WalkerState,
    grid: &SpectralGrid,
    k1: f64,
    k2: f64,
    coin: &CoinMatrix,
    tau: f64,
) -> Result<()> {
    apply_ideal_kick(state, grid, k1, k2)?;
    apply_coin(state, coin);
    apply_free_evolution(state, tau);
    Ok(())
}

/// Runs the ideal walk from the ratchet state, returning `P(n; t)` for
/// `t = 0..=steps`.
pub fn ideal_walk(
    n_max: usize,
    beta: f64,
    k: [f64; 2],
    coin: &CoinMatrix,
    tau: f64,
    steps: usize,
) -> Result<Vec<MomentumDistribution>> {
    let mut state = ratchet_state(n_max, beta, LadderSpacing::Unit)?;
    let grid = SpectralGrid::for_state(&state);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(momentum_distribution(&state, 0));
    for t in 1..=steps {
        walk_step_ideal(&mut state, &grid, k[0], k[1], coin, tau)?;
        out.push(momentum_distribution(&state, t));
    }
    Ok(out)
}

/// `P_m(n) = |a_m(n)|²` binned on the integer grid, and their sum.
pub fn momentum_distribution(state: &WalkerState, step: usize) -> MomentumDistribution {
    let mut dist = MomentumDistribution::zeros(state.n_max(), step);
    let last = dist.len() as i64 - 1;
    for (i, j) in state.ladder().enumerate() {
        let bin = (state.momentum(j) + 0.5).floor() as i64 - dist.n_min;
        let bin = bin.clamp(0, last) as usize;
        let w1 = state.amps[0][i].norm_sqr();
        let w2 = state.amps[1][i].norm_sqr();
        dist.p1[bin] += w1;
        dist.p2[bin] += w2;
    }
    for (t, (a, b)) in dist.p_total.iter_mut().zip(dist.p1.iter().zip(&dist.p2)) {
        *t = a + b;
    }
    dist
}

/// Default grid half-width for a walk of `steps` kicks of strength `k`.
pub fn default_n_max(k: f64, steps: usize) -> usize {
    (10.0 + 2.0 * k.abs() * steps as f64).ceil() as usize
}
