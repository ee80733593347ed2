use std::f64::consts::PI;

use num_complex::Complex64;

use super::lindblad::{DensityMatrix, Generator};
use super::quadrature::QuadratureRule;
use super::sparse::CMatrix;
use crate::params::{DerivedParams, PhysicsParams};
use crate::se::SeChannelWeights;
use crate::walk::{free_phase, CoinMatrix, MomentumDistribution};
use crate::{Error, Result};

/// Largest grid half-width the dense oracles accept.
pub const MAX_DENSE_N_MAX: usize = 8;

/// Inputs of the dense walk oracles.
///
/// Momenta are `n + beta` for `n ∈ [-n_max, n_max]`, and the angle θ lives
/// on the matching periodic grid of `2 n_max + 1` points. Each kick pulse
/// lasts one time unit; `decay[m]` is `γ_m τ_p`.
#[derive(Clone, Debug)]
pub struct DenseWalkConfig {
    pub n_max: usize,
    pub beta: f64,
    pub kicks: [f64; 2],
    pub decay: [f64; 2],
    pub internal: [Complex64; 2],
    pub coin: CoinMatrix,
    pub tau: f64,
    pub quadrature_nodes: usize,
}

impl DenseWalkConfig {
    /// Closed walk with kick strengths `k`.
    pub fn closed(n_max: usize, beta: f64, k: [f64; 2], coin: CoinMatrix, tau: f64) -> Self {
        DenseWalkConfig {
            n_max,
            beta,
            kicks: k,
            decay: [0.0; 2],
            internal: [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            coin,
            tau,
            quadrature_nodes: QuadratureRule::DEFAULT_NODES,
        }
    }

    /// Open walk for the physical parameter set.
    pub fn from_params(
        params: &PhysicsParams,
        derived: &DerivedParams,
        n_max: usize,
        beta: f64,
        coin: CoinMatrix,
        tau: f64,
    ) -> Self {
        let weights = SeChannelWeights::new(params, derived);
        DenseWalkConfig {
            n_max,
            beta,
            kicks: derived.effective_kicks(),
            decay: [derived.gamma1 * params.tau_p, derived.gamma2 * params.tau_p],
            internal: weights.normalized_internal(),
            coin,
            tau,
            quadrature_nodes: QuadratureRule::DEFAULT_NODES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max > MAX_DENSE_N_MAX {
            return Err(Error::CostGuard(format!(
                "dense oracle needs n_max <= {MAX_DENSE_N_MAX}, got {}",
                self.n_max
            )));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParams("dense oracle needs n_max >= 1".into()));
        }
        if self.decay.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidParams("decay rates must be finite and non-negative".into()));
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::InvalidParams("quadrature needs at least one node".into()));
        }
        Ok(())
    }
}

/// Precomputed operators of the dense walk on `2 × (2 n_max + 1)` states.
#[derive(Clone, Debug)]
pub struct DenseWalk {
    config: DenseWalkConfig,
    len: usize,
    /// `F[j, n] = e^{i n θ_j} / √D`.
    fourier: CMatrix,
    /// `e^{-i u θ_j / 2} cos(θ_j / 2)` per quadrature node, and the weights.
    recoil_factors: Vec<Vec<Complex64>>,
    quadrature: QuadratureRule,
    kernel: CMatrix,
    g: CMatrix,
    g_adj: CMatrix,
    bound: f64,
}

impl DenseWalk {
    pub fn new(config: &DenseWalkConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_max as i64;
        let len = 2 * config.n_max + 1;
        let theta: Vec<f64> = (0..len as i64).map(|j| 2.0 * PI * (j - n) as f64 / len as f64).collect();
        let norm = 1.0 / (len as f64).sqrt();
        let fourier = CMatrix::from_fn(len, len, |j, m| Complex64::from_polar(norm, (m as i64 - n) as f64 * theta[j]));
        let quadrature = QuadratureRule::recoil(config.quadrature_nodes);
        let recoil_factors: Vec<Vec<Complex64>> = quadrature
            .nodes
            .iter()
            .map(|u| theta.iter().map(|t| Complex64::from_polar((t / 2.0).cos(), -u * t / 2.0)).collect())
            .collect();
        let kernel = CMatrix::from_fn(len, len, |j, k| {
            quadrature
                .weights
                .iter()
                .zip(&recoil_factors)
                .map(|(w, e)| e[j] * e[k].conj() * *w)
                .sum()
        });

        let fourier_adj = fourier.adjoint();
        let angular = |f: &dyn Fn(f64) -> f64| {
            let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                len,
                theta.iter().map(|t| Complex64::new(f(*t), 0.0)),
            ));
            &fourier_adj * diag * &fourier
        };
        let cos = angular(&|t: f64| t.cos());
        let cos_half_sq = angular(&|t: f64| (t / 2.0).cos().powi(2));

        let rate = config.decay[0] + config.decay[1];
        let c = config.internal;
        let mut g = CMatrix::zeros(2 * len, 2 * len);
        for a in 0..2 {
            for b in 0..2 {
                let mut block = &cos_half_sq * (Complex64::new(0.0, -0.5 * rate) * c[a].conj() * c[b]);
                if a == b {
                    let sign = if a == 0 { -1.0 } else { 1.0 };
                    block += &cos * Complex64::new(sign * config.kicks[a], 0.0);
                }
                g.view_mut((a * len, b * len), (len, len)).copy_from(&block);
            }
        }
        let g_adj = g.adjoint();
        let row_sum = |m: &CMatrix| {
            m.row_iter().map(|r| r.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
        };
        let c_sum = c[0].norm() + c[1].norm();
        let bound = 2.0 * row_sum(&g) + rate * c_sum * c_sum;
        Ok(DenseWalk {
            config: config.clone(),
            len,
            fourier,
            recoil_factors,
            quadrature,
            kernel,
            g,
            g_adj,
            bound,
        })
    }

    pub fn config(&self) -> &DenseWalkConfig {
        &self.config
    }

    /// Sites per internal level.
    pub fn ladder_len(&self) -> usize {
        self.len
    }

    /// Non-Hermitian pulse Hamiltonian `H − (i/2) Σ L†L`.
    pub fn effective_hamiltonian(&self) -> &CMatrix {
        &self.g
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    /// Ratchet state `(|1⟩+|2⟩)/√2 ⊗ (|0⟩ − i|1⟩)/√2` on this grid.
    pub fn ratchet(&self) -> Vec<Complex64> {
        let mut psi = vec![Complex64::default(); 2 * self.len];
        let n = self.config.n_max;
        for ch in 0..2 {
            psi[ch * self.len + n] = Complex64::new(0.5, 0.0);
            psi[ch * self.len + n + 1] = Complex64::new(0.0, -0.5);
        }
        psi
    }

    /// `ĉ₁ ψ₁ + ĉ₂ ψ₂`.
    pub fn project(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let c = self.config.internal;
        (0..self.len).map(|i| c[0] * psi[i] + c[1] * psi[self.len + i]).collect()
    }

    /// `e^{-i u θ/2} cos(θ/2) φ` for quadrature node `node`.
    pub fn recoil(&self, phi: &[Complex64], node: usize) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(phi);
        let mut theta = &self.fourier * v;
        theta.iter_mut().zip(&self.recoil_factors[node]).for_each(|(x, e)| *x *= e);
        (self.fourier.adjoint() * theta).iter().copied().collect()
    }

    /// Exact coin and free evolution after a pulse.
    pub fn unitary_part(&self) -> CMatrix {
        let len = self.len;
        let n = self.config.n_max as i64;
        let coin = self.config.coin.entries();
        let mut u = CMatrix::zeros(2 * len, 2 * len);
        for i in 0..len {
            let p = (i as i64 - n) as f64 + self.config.beta;
            let f = free_phase(self.config.tau, p);
            for a in 0..2 {
                for b in 0..2 {
                    u[(a * len + i, b * len + i)] = f * coin[a][b];
                }
            }
        }
        u
    }

    /// Binned momentum populations from the diagonal of `rho` (or `|ψ|²`).
    pub fn distribution(&self, diag: &[f64], step: usize) -> MomentumDistribution {
        let n = self.config.n_max as i64;
        let mut dist = MomentumDistribution::zeros(self.config.n_max, step);
        let last = dist.len() as i64 - 1;
        for i in 0..self.len {
            let p = (i as i64 - n) as f64 + self.config.beta;
            let bin = ((p + 0.5).floor() as i64 - dist.n_min).clamp(0, last) as usize;
            dist.p1[bin] += diag[i];
            dist.p2[bin] += diag[self.len + i];
        }
        for (t, (a, b)) in dist.p_total.iter_mut().zip(dist.p1.iter().zip(&dist.p2)) {
            *t = a + b;
        }
        dist
    }
}

impl Generator for DenseWalk {
    fn dim(&self) -> usize {
        2 * self.len
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let len = self.len;
        let i = Complex64::new(0.0, 1.0);
        let mut out = (&self.g * rho - rho * &self.g_adj) * (-i);
        let c = self.config.internal;
        if self.config.decay.iter().all(|d| *d == 0.0) {
            return out;
        }
        let mut x = CMatrix::zeros(len, len);
        for a in 0..2 {
            for b in 0..2 {
                x += rho.view((a * len, b * len), (len, len)) * (c[a] * c[b].conj());
            }
        }
        let in_theta = &self.fourier * x * self.fourier.adjoint();
        let y = self.fourier.adjoint() * in_theta.component_mul(&self.kernel) * &self.fourier;
        for m in 0..2 {
            let mut block = out.view_mut((m * len, m * len), (len, len));
            block += &y * Complex64::new(self.config.decay[m], 0.0);
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

/// Integrates the walk master equation: each step is one Lindblad pulse
/// followed by the exact coin and free evolution. Returns `P(n; t)` for
/// `t = 0..=steps`.
pub fn evolve_walk_dense(config: &DenseWalkConfig, steps: usize) -> Result<Vec<MomentumDistribution>> {
    let walk = DenseWalk::new(config)?;
    let u = walk.unitary_part();
    let u_adj = u.adjoint();
    let mut rho = DensityMatrix::pure(&walk.ratchet());
    let mut out = vec![walk.distribution(&rho.populations(), 0)];
    for t in 1..=steps {
        rho.evolve(&walk, 1.0)?;
        rho.0 = &u * &rho.0 * &u_adj;
        rho.check_positivity()?;
        out.push(walk.distribution(&rho.populations(), t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, invert_for_targets, RESONANT_TAU};
    use crate::walk::ideal_walk;

    fn open_config(p_se: f64, n_max: usize) -> DenseWalkConfig {
        let params = invert_for_targets(1.45, p_se, 380e-9, 26e-9, [0.5, 0.5]).unwrap();
        let derived = derive(&params).unwrap();
        DenseWalkConfig::from_params(&params, &derived, n_max, 0.0, CoinMatrix::balanced(), RESONANT_TAU)
    }

    #[test]
    fn closed_walk_matches_spectral_walk() {
        let k = [0.5, 0.5];
        let cfg = DenseWalkConfig::closed(8, 0.0, k, CoinMatrix::balanced(), RESONANT_TAU);
        let dense = evolve_walk_dense(&cfg, 2).unwrap();
        let ideal = ideal_walk(12, 0.0, k, &CoinMatrix::balanced(), RESONANT_TAU, 2).unwrap();
        for t in 0..=2 {
            assert!(dense[t].max_abs_difference(&ideal[t]) < 1e-8, "step {t}");
        }
    }

    #[test]
    fn cost_guard() {
        let cfg = DenseWalkConfig::closed(9, 0.0, [1.0; 2], CoinMatrix::balanced(), RESONANT_TAU);
        assert!(matches!(evolve_walk_dense(&cfg, 1), Err(Error::CostGuard(_))));
    }

    #[test]
    fn open_walk_keeps_trace() {
        let dists = evolve_walk_dense(&open_config(0.11, 6), 2).unwrap();
        for d in &dists {
            assert!((d.total() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_refinement() {
        let mut cfg = open_config(0.11, 6);
        let coarse = evolve_walk_dense(&cfg, 2).unwrap();
        cfg.quadrature_nodes = 32;
        let fine = evolve_walk_dense(&cfg, 2).unwrap();
        assert!(coarse[2].max_abs_difference(&fine[2]) < 1e-8);
    }

    #[test]
    fn jump_map_preserves_trace() {
        let walk = DenseWalk::new(&open_config(0.11, 4)).unwrap();
        let rho = DensityMatrix::pure(&walk.ratchet());
        let d = walk.apply(&rho.0);
        assert!(d.trace().norm() < 1e-13);
    }
}
