use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::dense_walk::{DenseWalk, DenseWalkConfig};
use crate::engine::trajectory_rng;
use crate::walk::MomentumDistribution;
use crate::{Error, Result};

/// Coarse propagation steps per pulse.
const COARSE_STEPS: usize = 256;
/// Bisection depth inside a coarse step when a jump is detected.
const REFINE_LEVELS: usize = 12;

/// No-jump propagators `exp(−i G h / 2^j)` for `h = 1 / COARSE_STEPS`.
struct Propagators {
    levels: Vec<DMatrix<Complex64>>,
}

impl Propagators {
    fn new(walk: &DenseWalk) -> Self {
        let g = walk.effective_hamiltonian();
        let h = 1.0 / COARSE_STEPS as f64;
        let levels = (0..=REFINE_LEVELS)
            .map(|j| (g * Complex64::new(0.0, -h / (1u64 << j) as f64)).exp())
            .collect();
        Propagators { levels }
    }
}

/// One trajectory of the standard norm-threshold unraveling of the dense
/// walk master equation. Returns `|ψ|²` binned for `t = 0..=steps`.
pub fn mcwf_standard<R: Rng + ?Sized>(
    config: &DenseWalkConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<MomentumDistribution>> {
    let walk = DenseWalk::new(config)?;
    let props = Propagators::new(&walk);
    mcwf_trajectory(&walk, &props, &walk.unitary_part(), steps, rng)
}

/// Averages `trajectories` runs; run `i` uses stream `i` of `seed`.
pub fn mcwf_ensemble(
    config: &DenseWalkConfig,
    steps: usize,
    trajectories: usize,
    seed: u64,
) -> Result<Vec<MomentumDistribution>> {
    let walk = DenseWalk::new(config)?;
    let props = Propagators::new(&walk);
    let u = walk.unitary_part();
    let empty = || -> Vec<MomentumDistribution> {
        (0..=steps).map(|t| MomentumDistribution::zeros(config.n_max, t)).collect()
    };
    let chunk = 64;
    let starts: Vec<usize> = (0..trajectories).step_by(chunk).collect();
    let partials: Vec<Result<Vec<MomentumDistribution>>> = starts
        .into_par_iter()
        .map(|s| {
            let mut acc = empty();
            for i in s..(s + chunk).min(trajectories) {
                let run = mcwf_trajectory(&walk, &props, &u, steps, &mut trajectory_rng(seed, i))?;
                for (a, d) in acc.iter_mut().zip(&run) {
                    a.accumulate(d, 1.0);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut acc = empty();
    for p in partials {
        for (a, d) in acc.iter_mut().zip(&p?) {
            a.accumulate(d, 1.0);
        }
    }
    acc.iter_mut().for_each(|a| a.scale(1.0 / trajectories.max(1) as f64));
    Ok(acc)
}

fn mcwf_trajectory<R: Rng + ?Sized>(
    walk: &DenseWalk,
    props: &Propagators,
    unitary: &DMatrix<Complex64>,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<MomentumDistribution>> {
    let cfg = walk.config();
    let rate = cfg.decay[0] + cfg.decay[1];
    let mut psi = DVector::from_vec(walk.ratchet());
    let mut out = vec![walk.distribution(&populations(&psi), 0)];
    let mut threshold: f64 = rng.random();
    for t in 1..=steps {
        for _ in 0..COARSE_STEPS {
            let next = &props.levels[0] * &psi;
            if rate == 0.0 || next.norm_squared() >= threshold {
                psi = next;
                continue;
            }
            // Locate the crossing on the dyadic grid, jump, then finish the
            // coarse step from the jump time.
            let mut done = 0u64;
            for j in 1..=REFINE_LEVELS {
                let trial = &props.levels[j] * &psi;
                if trial.norm_squared() >= threshold {
                    psi = trial;
                    done += 1 << (REFINE_LEVELS - j);
                }
            }
            psi = &props.levels[REFINE_LEVELS] * &psi;
            done += 1;
            jump(walk, &mut psi, rng)?;
            threshold = rng.random();
            let mut remaining = (1u64 << REFINE_LEVELS) - done;
            for j in (1..=REFINE_LEVELS).rev() {
                if remaining & 1 == 1 {
                    psi = &props.levels[j] * &psi;
                }
                remaining >>= 1;
            }
            if remaining & 1 == 1 {
                psi = &props.levels[0] * &psi;
            }
        }
        // Renormalizing rescales the remaining threshold, keeping the
        // first-passage time distribution across pulse boundaries.
        let n2 = psi.norm_squared();
        threshold /= n2;
        psi /= Complex64::new(n2.sqrt(), 0.0);
        psi = unitary * psi;
        out.push(walk.distribution(&populations(&psi), t));
    }
    Ok(out)
}

fn jump<R: Rng + ?Sized>(walk: &DenseWalk, psi: &mut DVector<Complex64>, rng: &mut R) -> Result<()> {
    let cfg = walk.config();
    let len = walk.ladder_len();
    let rate = cfg.decay[0] + cfg.decay[1];
    let channel = if rng.random::<f64>() * rate < cfg.decay[0] { 0 } else { 1 };
    let node = pick(rng, &walk.quadrature().weights);
    let phi = walk.recoil(&walk.project(psi.as_slice()), node);
    psi.fill(Complex64::default());
    for (i, v) in phi.into_iter().enumerate() {
        psi[channel * len + i] = v;
    }
    let norm = psi.norm();
    if !(norm > 0.0) {
        return Err(Error::Internal("jump annihilated the trajectory".into()));
    }
    *psi /= Complex64::new(norm, 0.0);
    Ok(())
}

fn populations(psi: &DVector<Complex64>) -> Vec<f64> {
    psi.iter().map(|a| a.norm_sqr()).collect()
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

/// Three-sigma L1 bound for an `n`-sample histogram estimate of `reference`.
pub fn statistical_l1_bound(reference: &MomentumDistribution, samples: usize) -> f64 {
    let var: f64 = reference.p_total.iter().map(|p| p * (1.0 - p)).sum();
    3.0 * var.sqrt() / (samples as f64).sqrt()
}
