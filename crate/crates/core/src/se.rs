//! Spontaneous-emission primitives: event times, decay channel, recoil
//! projection and the effective collapse applied to a walker.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::params::{DerivedParams, PhysicsParams, PHOTON_RECOIL};
use crate::walk::{Channel, LadderSpacing, WalkerState};
use crate::{Error, Result};

/// Emission events kept per kick; further events are statistically irrelevant.
pub const MAX_EVENTS_PER_KICK: usize = 3;

/// How the `cos(θ/2)` factor of the collapse operator is treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseMode {
    /// Replace `cos(θ/2)` by its mean `1/√2`.
    #[default]
    MeanCos,
    /// Apply `cos(θ/2)` as the average of ±1/2 momentum shifts. Requires a
    /// half-integer ladder.
    ExactCos,
}

impl CollapseMode {
    pub fn name(self) -> &'static str {
        match self {
            CollapseMode::MeanCos => "mean_cos",
            CollapseMode::ExactCos => "exact_cos",
        }
    }
}

/// Decay rates and the internal part of the effective collapse operators.
///
/// Both collapse operators share the row `[c₁, c₂]` with
/// `c₁ = Ω / (2(Δ₁ − iγ/2))` and `c₂ = Ω / (2(−Δ₂ − iγ/2))`; they differ only
/// in the target level and the `√γ_m` prefactor.
#[derive(Clone, Debug, PartialEq)]
pub struct SeChannelWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub internal: [Complex64; 2],
}

impl SeChannelWeights {
    pub fn new(params: &PhysicsParams, derived: &DerivedParams) -> Self {
        let half_gamma = Complex64::new(0.0, derived.gamma / 2.0);
        let omega = Complex64::new(params.omega, 0.0);
        let c1 = omega / (2.0 * (Complex64::new(params.delta1, 0.0) - half_gamma));
        let c2 = omega / (2.0 * (Complex64::new(-params.delta2, 0.0) - half_gamma));
        SeChannelWeights {
            gamma1: derived.gamma1,
            gamma2: derived.gamma2,
            internal: [c1, c2],
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// Internal coefficients scaled to unit root-mean-square magnitude.
    pub fn normalized_internal(&self) -> [Complex64; 2] {
        let [c1, c2] = self.internal;
        let rms = ((c1.norm_sqr() + c2.norm_sqr()) / 2.0).sqrt();
        [c1 / rms, c2 / rms]
    }
}

/// A sampled emission event during one kick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeEvent {
    /// Time since the start of the pulse.
    pub t: f64,
    /// Level the atom decays into.
    pub channel: Channel,
    /// Recoil direction projected on the walk axis.
    pub u: f64,
}

impl SeEvent {
    pub fn new(t: f64, channel: Channel, u: f64, tau_p: f64) -> Result<Self> {
        if !(0.0..tau_p).contains(&t) {
            return Err(Error::InvalidParams(format!("event time {t} outside [0, {tau_p})")));
        }
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::InvalidParams(format!("recoil projection {u} outside [-1, 1]")));
        }
        Ok(SeEvent { t, channel, u })
    }
}

/// Up to three emission times within a pulse, in ascending order.
///
/// Successive inter-arrival times are exponential with rate `gamma`;
/// generation stops at the first time past `tau_p`.
pub fn draw_se_times<R: Rng + ?Sized>(rng: &mut R, gamma: f64, tau_p: f64) -> Vec<f64> {
    let mut times = Vec::new();
    if !(gamma > 0.0) {
        return times;
    }
    let exp = Exp::new(gamma).expect("positive rate");
    let mut t = 0.0;
    while times.len() < MAX_EVENTS_PER_KICK {
        t += exp.sample(rng);
        if t >= tau_p {
            break;
        }
        times.push(t);
    }
    times
}

/// Density `(3/8)(1 + u²)` of the recoil projection on the walk axis.
pub fn recoil_density(u: f64) -> f64 {
    if (-1.0..=1.0).contains(&u) {
        0.375 * (1.0 + u * u)
    } else {
        0.0
    }
}

/// Cumulative distribution `(u³ + 3u + 4) / 8` of the recoil projection.
pub fn recoil_cdf(u: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    (u * u * u + 3.0 * u + 4.0) / 8.0
}

/// Draws a recoil projection by inverting [`recoil_cdf`] with Newton's method.
pub fn sample_recoil_u<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    invert_recoil_cdf(rng.random::<f64>())
}

pub(crate) fn invert_recoil_cdf(r: f64) -> f64 {
    let target = 8.0 * r - 4.0;
    let mut u = 2.0 * r - 1.0;
    for _ in 0..50 {
        let step = (u * u * u + 3.0 * u - target) / (3.0 * (u * u + 1.0));
        u -= step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    u.clamp(-1.0, 1.0)
}

/// Picks the decay channel with probability `γ_m / γ`.
pub fn select_channel<R: Rng + ?Sized>(rng: &mut R, weights: &SeChannelWeights) -> Result<Channel> {
    let gamma = weights.gamma();
    if !(gamma > 0.0) {
        return Err(Error::NoDecayChannel);
    }
    if rng.random::<f64>() * gamma < weights.gamma1 {
        Ok(Channel::One)
    } else {
        Ok(Channel::Two)
    }
}

/// Result of a collapse, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseOutcome {
    /// Norm of the state after the collapse operator, before renormalization.
    pub weight: f64,
}

/// Applies the effective collapse operator for `event` and renormalizes.
///
/// The internal part projects onto `event.channel` with amplitude
/// `c₁ a₁(j) + c₂ a₂(j)`. The external part is the recoil shift of all
/// momenta by `-u/2`, preceded either by the scalar `1/√2` (mean mode) or by
/// the exact `cos(θ/2)` ladder average (exact mode).
pub fn apply_collapse(
    state: &mut WalkerState,
    event: &SeEvent,
    weights: &SeChannelWeights,
    mode: CollapseMode,
) -> Result<CollapseOutcome> {
    if mode == CollapseMode::ExactCos && state.spacing() != LadderSpacing::Half {
        return Err(Error::ModeMismatch { mode: mode.name() });
    }
    let [c1, c2] = weights.internal;
    let target = event.channel;
    {
        let (a1, a2) = state.channels_mut();
        for (x, y) in a1.iter_mut().zip(a2.iter_mut()) {
            let projected = c1 * *x + c2 * *y;
            match target {
                Channel::One => {
                    *x = projected;
                    *y = Complex64::default();
                }
                Channel::Two => {
                    *x = Complex64::default();
                    *y = projected;
                }
            }
        }
    }
    match mode {
        CollapseMode::MeanCos => {
            state
                .channel_mut(target)
                .iter_mut()
                .for_each(|a| *a *= FRAC_1_SQRT_2);
        }
        CollapseMode::ExactCos => apply_half_cos(state, target)?,
    }
    state.shift_momentum(-PHOTON_RECOIL * event.u)?;
    let weight = state.norm_sqr().sqrt();
    if !(weight > 0.0) {
        return Err(Error::Internal(
            "collapse annihilated the state (dark internal superposition)".into(),
        ));
    }
    state.renormalize()?;
    state.check_boundary()?;
    Ok(CollapseOutcome { weight })
}

/// `cos(θ/2) = (e^{iθ/2} + e^{-iθ/2}) / 2` on a half-integer ladder: the
/// average of shifts by one site in either direction.
fn apply_half_cos(state: &mut WalkerState, ch: Channel) -> Result<()> {
    let n_max = state.n_max();
    let a = state.channel_mut(ch);
    let len = a.len();
    let lost = 0.25 * (a[0].norm_sqr() + a[len - 1].norm_sqr());
    let old = a.to_vec();
    for (j, slot) in a.iter_mut().enumerate() {
        let below = if j > 0 { old[j - 1] } else { Complex64::default() };
        let above = if j + 1 < len { old[j + 1] } else { Complex64::default() };
        *slot = 0.5 * (below + above);
    }
    if lost >= crate::walk::BOUNDARY_TOLERANCE {
        return Err(Error::GridTooSmall { n_max, occupation: lost });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, invert_for_targets};
    use crate::walk::ratchet_state;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const TAU_P: f64 = 380e-9;
    const DRAWS: usize = 1_000_000;

    fn weights(p_se: f64, ratio: [f64; 2]) -> SeChannelWeights {
        let params = invert_for_targets(1.45, p_se, TAU_P, 26e-9, ratio).unwrap();
        SeChannelWeights::new(&params, &derive(&params).unwrap())
    }

    /// Truncated Poisson: counts above three are folded into three.
    fn truncated_poisson(lambda: f64) -> [f64; 4] {
        let e = (-lambda).exp();
        let p0 = e;
        let p1 = lambda * e;
        let p2 = lambda * lambda / 2.0 * e;
        [p0, p1, p2, 1.0 - p0 - p1 - p2]
    }

    #[test]
    fn no_rate_no_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(draw_se_times(&mut rng, 0.0, TAU_P).is_empty());
        }
    }

    #[test]
    fn event_times_sorted_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let t = draw_se_times(&mut rng, 10.0 / TAU_P, TAU_P);
            assert!(t.len() <= MAX_EVENTS_PER_KICK);
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.iter().all(|x| *x < TAU_P));
        }
    }

    #[test]
    fn event_probability_at_p037() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gamma = 0.037 / TAU_P;
        let hits = (0..DRAWS).filter(|_| !draw_se_times(&mut rng, gamma, TAU_P).is_empty()).count();
        let p = 1.0 - (-0.037f64).exp();
        assert_abs_diff_eq!(p, 0.03632, epsilon = 1e-5);
        let sigma = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((hits as f64 / DRAWS as f64 - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn mean_count_at_p011() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gamma = 0.11 / TAU_P;
        let total: usize = (0..DRAWS).map(|_| draw_se_times(&mut rng, gamma, TAU_P).len()).sum();
        let probs = truncated_poisson(0.11);
        let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second: f64 = probs.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
        assert!(0.11 - mean > 0.0 && 0.11 - mean < 3e-4);
        let sigma = ((second - mean * mean) / DRAWS as f64).sqrt();
        assert!((total as f64 / DRAWS as f64 - mean).abs() < 3.0 * sigma);
    }

    #[test]
    fn recoil_density_normalized() {
        // (3/8)(2 + 2/3)
        assert_abs_diff_eq!(0.375 * (2.0 + 2.0 / 3.0), 1.0, epsilon = 1e-15);
        assert_eq!(recoil_cdf(-1.0), 0.0);
        assert_eq!(recoil_cdf(1.0), 1.0);
        assert_eq!(recoil_cdf(0.0), 0.5);
    }

    #[test]
    fn newton_inverts_cdf() {
        for i in 0..=1000 {
            let r = i as f64 / 1000.0;
            assert_abs_diff_eq!(recoil_cdf(invert_recoil_cdf(r)), r, epsilon = 1e-12);
        }
    }

    #[test]
    fn recoil_median_and_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u: Vec<f64> = (0..DRAWS).map(|_| sample_recoil_u(&mut rng)).collect();
        let m2 = u.iter().map(|x| x * x).sum::<f64>() / DRAWS as f64;
        assert!((m2 - 0.4).abs() < 0.003, "E[u^2] = {m2}");
        u.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(u[DRAWS / 2].abs() < 0.002);
    }

    #[test]
    fn recoil_chi_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bins = 50;
        let mut counts = vec![0usize; bins];
        for _ in 0..DRAWS {
            let u = sample_recoil_u(&mut rng);
            let b = (((u + 1.0) / 2.0) * bins as f64).floor().min(bins as f64 - 1.0) as usize;
            counts[b] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                let lo = -1.0 + 2.0 * b as f64 / bins as f64;
                let hi = lo + 2.0 / bins as f64;
                let expected = DRAWS as f64 * (recoil_cdf(hi) - recoil_cdf(lo));
                (c as f64 - expected).powi(2) / expected
            })
            .sum();
        let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 = {chi2}, critical = {critical}");
    }

    #[test]
    fn channel_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (ratio, p1) in [([50.0, 50.0], 0.5), ([99.0, 1.0], 0.99)] {
            let w = weights(0.037, ratio);
            let ones = (0..DRAWS)
                .filter(|_| select_channel(&mut rng, &w).unwrap() == Channel::One)
                .count();
            let sigma = (p1 * (1.0 - p1) / DRAWS as f64).sqrt();
            assert!((ones as f64 / DRAWS as f64 - p1).abs() < 3.0 * sigma);
        }
        let only_one = SeChannelWeights { gamma2: 0.0, ..weights(0.037, [1.0, 1.0]) };
        assert!((0..1000).all(|_| select_channel(&mut rng, &only_one).unwrap() == Channel::One));
        let none = SeChannelWeights { gamma1: 0.0, gamma2: 0.0, ..only_one };
        assert!(matches!(select_channel(&mut rng, &none), Err(Error::NoDecayChannel)));
    }

    #[test]
    fn dark_limit_coefficients() {
        let params = PhysicsParams {
            omega: 1e8,
            delta1: 1e9,
            delta2: 1e9,
            tau_p: TAU_P,
            tau: crate::params::RESONANT_TAU,
            tau_se: f64::INFINITY,
            kick_period: None,
            branching: None,
        };
        let w = SeChannelWeights::new(&params, &derive(&params).unwrap());
        let [c1, c2] = w.internal;
        assert_abs_diff_eq!(c1.norm(), c2.norm(), epsilon = 1e-12 * c1.norm());
        assert_abs_diff_eq!((c1 + c2).norm(), 0.0, epsilon = 1e-12 * c1.norm());
    }

    #[test]
    fn collapse_projects_single_channel_state() {
        let w = weights(0.037, [1.0, 1.0]);
        let mut s = ratchet_state(8, 0.0, LadderSpacing::Unit).unwrap();
        s.channel_mut(Channel::Two).iter_mut().for_each(|a| *a = Complex64::default());
        s.renormalize().unwrap();
        let before = crate::walk::momentum_distribution(&s, 0);
        let ev = SeEvent::new(0.0, Channel::Two, 0.0, TAU_P).unwrap();
        apply_collapse(&mut s, &ev, &w, CollapseMode::MeanCos).unwrap();
        let after = crate::walk::momentum_distribution(&s, 0);
        assert_eq!(s.beta(), 0.0);
        assert_abs_diff_eq!(s.channel_norm_sqr(Channel::Two), 1.0, epsilon = 1e-12);
        assert_eq!(s.channel_norm_sqr(Channel::One), 0.0);
        for (a, b) in before.p1.iter().zip(&after.p2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn collapse_matches_dense_internal_map() {
        let w = weights(0.11, [1.0, 1.0]);
        let mut s = ratchet_state(8, 0.0, LadderSpacing::Unit).unwrap();
        // give the channels different amplitudes so the state is not dark
        s.channel_mut(Channel::Two).iter_mut().for_each(|a| *a *= Complex64::new(0.3, 0.8));
        s.renormalize().unwrap();
        let orig = s.clone();
        let ev = SeEvent::new(1e-7, Channel::One, 0.0, TAU_P).unwrap();
        apply_collapse(&mut s, &ev, &w, CollapseMode::MeanCos).unwrap();

        // dense 2x2 operator |1><1| c1 + |1><2| c2 applied site by site
        let [c1, c2] = w.internal;
        let m = [[c1, c2], [Complex64::default(), Complex64::default()]];
        let mut expected = orig.clone();
        let mut norm = 0.0;
        for j in orig.ladder() {
            let v = [orig.amplitude(Channel::One, j), orig.amplitude(Channel::Two, j)];
            let r = [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
            norm += r[0].norm_sqr() + r[1].norm_sqr();
            expected.set_amplitude(Channel::One, j, r[0]);
            expected.set_amplitude(Channel::Two, j, r[1]);
        }
        let scale = 1.0 / norm.sqrt();
        for j in orig.ladder() {
            let diff = s.amplitude(Channel::One, j) - expected.amplitude(Channel::One, j) * scale;
            assert_abs_diff_eq!(diff.norm(), 0.0, epsilon = 1e-13);
        }
        assert_eq!(s.channel_norm_sqr(Channel::Two), 0.0);
    }

    #[test]
    fn recoil_shift_folds_quasimomentum() {
        let w = weights(0.037, [1.0, 1.0]);
        let mut s = ratchet_state(8, 0.0, LadderSpacing::Unit).unwrap();
        s.channel_mut(Channel::Two).iter_mut().for_each(|a| *a = Complex64::default());
        s.renormalize().unwrap();
        let ev = SeEvent::new(0.0, Channel::One, 0.6, TAU_P).unwrap();
        apply_collapse(&mut s, &ev, &w, CollapseMode::MeanCos).unwrap();
        assert_abs_diff_eq!(s.beta(), 0.7, epsilon = 1e-15);
        // |n=0> moved to ladder index -1
        assert_abs_diff_eq!(s.amplitude(Channel::One, -1).norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitude(Channel::One, 0).norm_sqr(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn recoil_changes_mean_momentum_by_half_u() {
        let w = weights(0.11, [1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let mut s = ratchet_state(10, rng.random::<f64>(), LadderSpacing::Unit).unwrap();
            s.channel_mut(Channel::One).iter_mut().for_each(|a| *a = Complex64::default());
            s.renormalize().unwrap();
            let u = sample_recoil_u(&mut rng);
            let before = s.mean_momentum();
            let ev = SeEvent::new(0.0, Channel::Two, u, TAU_P).unwrap();
            apply_collapse(&mut s, &ev, &w, CollapseMode::MeanCos).unwrap();
            assert_abs_diff_eq!(s.mean_momentum() - before + u / 2.0, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_mode_needs_half_ladder() {
        let w = weights(0.037, [1.0, 1.0]);
        let mut s = ratchet_state(8, 0.0, LadderSpacing::Unit).unwrap();
        let ev = SeEvent::new(0.0, Channel::One, 0.2, TAU_P).unwrap();
        assert!(matches!(
            apply_collapse(&mut s, &ev, &w, CollapseMode::ExactCos),
            Err(Error::ModeMismatch { .. })
        ));
    }

    #[test]
    fn exact_mode_on_half_ladder() {
        let w = weights(0.037, [1.0, 1.0]);
        let mut s = WalkerState::zeros(6, LadderSpacing::Half);
        s.set_amplitude(Channel::One, 0, Complex64::new(1.0, 0.0));
        let ev = SeEvent::new(0.0, Channel::One, 0.4, TAU_P).unwrap();
        apply_collapse(&mut s, &ev, &w, CollapseMode::ExactCos).unwrap();
        // ±1/2 recoil from cos(θ/2), then -0.2: momenta 0.3 and -0.7
        assert_abs_diff_eq!(s.beta(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(Channel::One, -2).norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitude(Channel::One, 0).norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_momentum(), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn event_validation() {
        assert!(SeEvent::new(TAU_P, Channel::One, 0.0, TAU_P).is_err());
        assert!(SeEvent::new(0.0, Channel::One, 1.5, TAU_P).is_err());
    }
}
