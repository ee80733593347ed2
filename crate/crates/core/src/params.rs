//! Physical parameters of the kicked Λ system and the quantities derived
//! from them in closed form.
//!
//! Frequencies and detunings are angular (rad/s), times in seconds. The
//! walk itself runs in dimensionless kicked-rotor units: momentum is counted
//! in two-photon recoils, so one emitted photon shifts momentum by
//! [`PHOTON_RECOIL`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Momentum kick of a single photon recoil in walk units.
pub const PHOTON_RECOIL: f64 = 0.5;

/// Dimensionless kick period at the full Talbot resonance.
pub const RESONANT_TAU: f64 = 4.0 * std::f64::consts::PI;

/// Coupling ratio Ω/Δ used when a target has no spontaneous emission and
/// the detuning is otherwise unconstrained.
pub const NO_SE_COUPLING_RATIO: f64 = 0.1;

/// Laser and atom parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Rabi frequency Ω.
    pub omega: f64,
    /// Detuning of level |1⟩.
    pub delta1: f64,
    /// Detuning of level |2⟩.
    pub delta2: f64,
    /// Kick pulse duration.
    pub tau_p: f64,
    /// Dimensionless kick period (free-evolution phase scale).
    pub tau: f64,
    /// Excited-state lifetime. `f64::INFINITY` switches emission off.
    pub tau_se: f64,
    /// Physical kick period, used for the dynamical phase and finite-pulse
    /// kinetics. `None` means it is not modelled.
    #[serde(default)]
    pub kick_period: Option<f64>,
    /// Optional branching ratio γ₁:γ₂ replacing the detuning-determined split
    /// while keeping the total rate.
    #[serde(default)]
    pub branching: Option<[f64; 2]>,
}

/// Closed-form quantities derived from [`PhysicsParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub k1: f64,
    pub k2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma: f64,
    pub p_se: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub phi_dyn: f64,
}

impl DerivedParams {
    /// Light-shift corrected kick strengths (ξ₁k₁, ξ₂k₂).
    pub fn effective_kicks(&self) -> [f64; 2] {
        [self.xi1 * self.k1, self.xi2 * self.k2]
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !self.omega.is_finite() {
            return bad("omega must be finite");
        }
        if self.delta1 == 0.0 || self.delta2 == 0.0 {
            return bad("detunings must be non-zero (kick strength undefined)");
        }
        if !(self.delta1.is_finite() && self.delta2.is_finite()) {
            return bad("detunings must be finite");
        }
        if !(self.tau_p > 0.0 && self.tau_p.is_finite()) {
            return bad("tau_p must be positive");
        }
        if !(self.tau_se > 0.0) {
            return bad("tau_se must be positive");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if let Some(t) = self.kick_period {
            if !(t > 0.0 && t.is_finite()) {
                return bad("kick_period must be positive");
            }
        }
        if let Some([r1, r2]) = self.branching {
            if !(r1 >= 0.0 && r2 >= 0.0 && r1 + r2 > 0.0) {
                return bad("branching ratio components must be non-negative and not both zero");
            }
        }
        if self.tau_se > self.tau_p / 10.0 && self.tau_se.is_finite() {
            log::warn!(
                "tau_se = {:e} s is not much shorter than tau_p = {:e} s; the effective description assumes tau_se << tau_p",
                self.tau_se,
                self.tau_p
            );
        }
        Ok(())
    }
}

/// Kick strengths, emission rates, light-shift factors and dynamical phase.
pub fn derive(params: &PhysicsParams) -> Result<DerivedParams> {
    params.validate()?;
    let omega2 = params.omega * params.omega;
    let k1 = omega2 * params.tau_p / (8.0 * params.delta1);
    let k2 = omega2 * params.tau_p / (8.0 * params.delta2);
    let mut gamma1 = k1 / (params.tau_p * params.tau_se * params.delta1);
    let mut gamma2 = k2 / (params.tau_p * params.tau_se * params.delta2);
    let mut gamma = gamma1 + gamma2;
    if let Some([r1, r2]) = params.branching {
        let total = r1 + r2;
        gamma1 = gamma * (r1 / total);
        gamma2 = gamma * (r2 / total);
        gamma = gamma1 + gamma2;
    }
    let p_se = gamma * params.tau_p;
    if p_se >= 1.0 {
        return Err(Error::InvalidParams(format!(
            "emission probability per kick p_se = {p_se} must be below 1"
        )));
    }
    let xi = |delta: f64| 1.0 / (1.0 + gamma * gamma / (4.0 * delta * delta));
    let xi1 = xi(params.delta1);
    let xi2 = xi(params.delta2);
    let phi_dyn =
        xi1 * k1 + xi2 * k2 + (params.delta1 + params.delta2) * params.kick_period.unwrap_or(0.0);
    Ok(DerivedParams {
        k1,
        k2,
        gamma1,
        gamma2,
        gamma,
        p_se,
        xi1,
        xi2,
        phi_dyn,
    })
}

/// Physical parameters reproducing a symmetric kick strength `k` and an
/// emission probability `p_se`, with `Δ₁ = Δ₂`.
///
/// `ratio` is the γ₁:γ₂ split; anything other than an even split is stored
/// as an explicit branching ratio, since equal detunings force γ₁ = γ₂.
pub fn invert_for_targets(
    k: f64,
    p_se: f64,
    tau_p: f64,
    tau_se: f64,
    ratio: [f64; 2],
) -> Result<PhysicsParams> {
    invert_for_biased_targets([k, k], p_se, tau_p, tau_se, Some(ratio))
}

/// Like [`invert_for_targets`] for independent kick strengths.
///
/// With a common Ω, `Δ_m = Ω²τ_p/(8k_m)` and the total rate fixes
/// `Ω² = 8(k₁²+k₂²)/(τ_SE τ_p² γ)`. `ratio = None` keeps the split implied by
/// the detunings (γ₁/γ₂ = k₁²/k₂²).
pub fn invert_for_biased_targets(
    k: [f64; 2],
    p_se: f64,
    tau_p: f64,
    tau_se: f64,
    ratio: Option<[f64; 2]>,
) -> Result<PhysicsParams> {
    if !(k[0] > 0.0 && k[1] > 0.0) || !k.iter().all(|x| x.is_finite()) {
        return Err(Error::Infeasible(format!(
            "kick strengths must be positive, got {k:?} (p_se = {p_se} cannot be realised)"
        )));
    }
    if !(0.0..1.0).contains(&p_se) {
        return Err(Error::Infeasible(format!("p_se = {p_se} outside [0, 1)")));
    }
    if !(tau_p > 0.0 && tau_se > 0.0) {
        return Err(Error::Infeasible("tau_p and tau_se must be positive".into()));
    }
    if let Some([r1, r2]) = ratio {
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(Error::Infeasible(format!(
                "ratio components must be positive, got {r1}:{r2}"
            )));
        }
    }
    let (omega, tau_se) = if p_se == 0.0 {
        // The detuning is free; pin it through the weak-coupling ratio of the
        // stronger kick and switch emission off.
        let kmax = k[0].max(k[1]);
        let delta = 8.0 * kmax / (NO_SE_COUPLING_RATIO * NO_SE_COUPLING_RATIO * tau_p);
        (NO_SE_COUPLING_RATIO * delta, f64::INFINITY)
    } else {
        let gamma = p_se / tau_p;
        let omega2 = 8.0 * (k[0] * k[0] + k[1] * k[1]) / (tau_se * tau_p * tau_p * gamma);
        (omega2.sqrt(), tau_se)
    };
    let omega2 = omega * omega;
    let delta1 = omega2 * tau_p / (8.0 * k[0]);
    let delta2 = omega2 * tau_p / (8.0 * k[1]);
    let branching = match ratio {
        Some([r1, r2]) if r1 * k[1] * k[1] != r2 * k[0] * k[0] => Some([r1, r2]),
        _ => None,
    };
    Ok(PhysicsParams {
        omega,
        delta1,
        delta2,
        tau_p,
        tau: RESONANT_TAU,
        tau_se,
        kick_period: None,
        branching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TAU_P: f64 = 380e-9;
    const TAU_SE: f64 = 26e-9;

    fn base() -> PhysicsParams {
        PhysicsParams {
            omega: 3.0e8,
            delta1: 3.0e9,
            delta2: 3.0e9,
            tau_p: TAU_P,
            tau: RESONANT_TAU,
            tau_se: TAU_SE,
            kick_period: None,
            branching: None,
        }
    }

    #[test]
    fn zero_coupling() {
        let d = derive(&PhysicsParams { omega: 0.0, ..base() }).unwrap();
        assert_eq!((d.k1, d.k2, d.gamma, d.p_se), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((d.xi1, d.xi2), (1.0, 1.0));
    }

    #[test]
    fn detuning_scaling() {
        let a = derive(&base()).unwrap();
        let b = derive(&PhysicsParams { delta1: 6.0e9, ..base() }).unwrap();
        assert_relative_eq!(b.k1, a.k1 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(b.gamma1, a.gamma1 / 4.0, max_relative = 1e-15);
        assert_eq!(b.k2, a.k2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(derive(&PhysicsParams { delta1: 0.0, ..base() }).is_err());
        assert!(derive(&PhysicsParams { tau_p: 0.0, ..base() }).is_err());
        // strong coupling, short lifetime: p_se >= 1
        assert!(derive(&PhysicsParams { omega: 1e10, tau_se: 1e-9, ..base() }).is_err());
        assert!(invert_for_targets(0.0, 0.1, TAU_P, TAU_SE, [1.0, 1.0]).is_err());
        assert!(invert_for_targets(1.45, 1.0, TAU_P, TAU_SE, [1.0, 1.0]).is_err());
        assert!(invert_for_targets(1.45, 0.1, TAU_P, TAU_SE, [0.0, 1.0]).is_err());
    }

    #[test]
    fn fig3_targets_round_trip() {
        // Inverting k = Ω²τ_p/(8Δ) and γ = 2k/(τ_p τ_SE Δ) by hand:
        // Δ = 2k/(p τ_SE), Ω = sqrt(8kΔ/τ_p).
        let (k, p) = (1.45, 0.037);
        let delta = 2.0 * k / (p * TAU_SE);
        let omega = (8.0 * k * delta / TAU_P).sqrt();
        let params = PhysicsParams { omega, delta1: delta, delta2: delta, ..base() };
        let d = derive(&params).unwrap();
        assert_relative_eq!(d.k1, k, max_relative = 1e-14);
        assert_relative_eq!(d.k2, k, max_relative = 1e-14);
        assert_relative_eq!(d.p_se, p, max_relative = 1e-14);

        let inv = invert_for_targets(k, p, TAU_P, TAU_SE, [1.0, 1.0]).unwrap();
        assert_relative_eq!(inv.delta1, delta, max_relative = 1e-14);
        assert_relative_eq!(inv.omega, omega, max_relative = 1e-14);
        assert_eq!(inv.delta1, inv.delta2);
        assert!(inv.branching.is_none());
    }

    #[test]
    fn no_se_target() {
        let p = invert_for_targets(1.45, 0.0, TAU_P, TAU_SE, [1.0, 1.0]).unwrap();
        assert!(p.delta1.is_finite());
        let d = derive(&p).unwrap();
        assert_eq!(d.gamma, 0.0);
        assert_eq!(d.p_se, 0.0);
        assert_relative_eq!(d.k1, 1.45, max_relative = 1e-12);
    }

    #[test]
    fn p011_even_split() {
        let d = derive(&invert_for_targets(1.45, 0.11, TAU_P, TAU_SE, [50.0, 50.0]).unwrap()).unwrap();
        assert_relative_eq!(d.k1, 1.45, max_relative = 1e-12);
        assert_relative_eq!(d.p_se, 0.11, max_relative = 1e-12);
        assert_relative_eq!(d.gamma1, d.gamma2, max_relative = 1e-12);
    }

    #[test]
    fn biased_split_99_1() {
        let d = derive(&invert_for_targets(1.45, 0.037, TAU_P, TAU_SE, [99.0, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(d.gamma1 / d.gamma2, 99.0, max_relative = 1e-12);
        assert_relative_eq!(d.p_se, 0.037, max_relative = 1e-12);
    }

    #[test]
    fn p_se_is_gamma_tau_p() {
        let p = base();
        let d = derive(&p).unwrap();
        assert_eq!(d.p_se, d.gamma * p.tau_p);
    }

    #[test]
    fn phase_correction() {
        let p = PhysicsParams { kick_period: Some(1e-4), ..base() };
        let d = derive(&p).unwrap();
        let expected = d.xi1 * d.k1 + d.xi2 * d.k2 + 6.0e9 * 1e-4;
        assert_relative_eq!(d.phi_dyn, expected, max_relative = 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derive_inverts_targets(
            k in 0.05f64..5.0,
            p in 0.0f64..0.5,
            r1 in 0.01f64..100.0,
            r2 in 0.01f64..100.0,
            tau_p in 1e-7f64..1e-5,
            tau_se in 1e-9f64..5e-8,
        ) {
            let params = invert_for_targets(k, p, tau_p, tau_se, [r1, r2]).unwrap();
            let d = derive(&params).unwrap();
            prop_assert!(((d.k1 - k) / k).abs() < 1e-12);
            prop_assert!(((d.k2 - k) / k).abs() < 1e-12);
            if p == 0.0 {
                prop_assert_eq!(d.p_se, 0.0);
            } else {
                prop_assert!(((d.p_se - p) / p).abs() < 1e-12);
                prop_assert!(((d.gamma1 / d.gamma2) / (r1 / r2) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn xi_in_unit_interval_and_decreasing(
            delta in 1e6f64..1e10,
            s1 in 1e-9f64..1e-3,
            s2 in 1e-9f64..1e-3,
        ) {
            // γ ∝ 1/τ_SE at fixed Δ, so a shorter lifetime means a larger rate.
            let at = |tau_se: f64| {
                let p = PhysicsParams { omega: 0.1 * delta, delta1: delta, delta2: delta, tau_se, ..base() };
                derive(&p)
            };
            let (long, short) = if s1 > s2 { (s1, s2) } else { (s2, s1) };
            if let (Ok(weak), Ok(strong)) = (at(long), at(short)) {
                prop_assert!(strong.gamma >= weak.gamma);
                prop_assert!(strong.xi1 > 0.0 && strong.xi1 <= 1.0);
                prop_assert!(strong.xi1 <= weak.xi1);
            }
        }
    }
}
