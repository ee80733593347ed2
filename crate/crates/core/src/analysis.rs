//! Observables of momentum distributions.
//!
//! Peak contrast is the probability at `|n − ½| ≥ w` divided by the
//! probability at `|n − ½| < w`, with `w = max(2, T k / 4)`. Values well
//! above one mean ballistic side peaks dominate; a diffusive walk keeps most
//! of its weight inside the window.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::walk::{CoinMatrix, MomentumDistribution};
use crate::Result;

/// Summary observables of one distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkMetrics {
    pub step: usize,
    pub mean: f64,
    pub variance: f64,
    /// Two highest local maxima with `|n| > 1`, ordered by position.
    pub peaks: Vec<(i64, f64)>,
    pub window: f64,
    pub central_mass: f64,
    pub outer_mass: f64,
    pub peak_contrast: f64,
    pub gaussian_l1: f64,
}

/// Half-width of the central window for step `t` and kick strength `k`.
pub fn contrast_window(t: usize, k: f64) -> f64 {
    (t as f64 * k.abs() / 4.0).max(2.0)
}

pub fn mean_and_variance(dist: &MomentumDistribution) -> (f64, f64) {
    let total = dist.total();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let mean = dist.n_values().zip(&dist.p_total).map(|(n, p)| n as f64 * p).sum::<f64>() / total;
    let var = dist
        .n_values()
        .zip(&dist.p_total)
        .map(|(n, p)| (n as f64 - mean).powi(2) * p)
        .sum::<f64>()
        / total;
    (mean, var.max(0.0))
}

/// Probability outside and inside the window `|n − ½| < w`.
pub fn window_masses(dist: &MomentumDistribution, w: f64) -> (f64, f64) {
    let mut outer = 0.0;
    let mut central = 0.0;
    for (n, p) in dist.n_values().zip(&dist.p_total) {
        if (n as f64 - 0.5).abs() >= w {
            outer += p;
        } else {
            central += p;
        }
    }
    (outer, central)
}

pub fn peak_contrast(dist: &MomentumDistribution, w: f64) -> f64 {
    let (outer, central) = window_masses(dist, w);
    if central > 0.0 {
        outer / central
    } else if outer > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Two highest local maxima outside `|n| ≤ 1`.
pub fn peaks(dist: &MomentumDistribution) -> Vec<(i64, f64)> {
    let p = &dist.p_total;
    let at = |i: isize| if i < 0 || i as usize >= p.len() { 0.0 } else { p[i as usize] };
    let mut found: Vec<(i64, f64)> = (0..p.len() as isize)
        .filter(|&i| p[i as usize] > 0.0 && p[i as usize] >= at(i - 1) && p[i as usize] >= at(i + 1))
        .map(|i| (dist.n_min + i as i64, p[i as usize]))
        .filter(|(n, _)| n.abs() > 1)
        .collect();
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    found.truncate(2);
    found.sort_by_key(|(n, _)| *n);
    found
}

/// Probability of the integer bins `[n − ½, n + ½)` under `N(mean, sd²)`,
/// for `n` in `[lo, hi]`. A zero width puts all weight on the bin holding
/// the mean.
pub fn gaussian_bins(mean: f64, sd: f64, lo: i64, hi: i64) -> Vec<f64> {
    if sd > 0.0 {
        let normal = Normal::new(mean, sd).expect("positive width");
        (lo..=hi)
            .map(|n| normal.cdf(n as f64 + 0.5) - normal.cdf(n as f64 - 0.5))
            .collect()
    } else {
        let target = (mean + 0.5).floor() as i64;
        (lo..=hi).map(|n| if n == target { 1.0 } else { 0.0 }).collect()
    }
}

/// L1 distance to the moment-matched Gaussian, counting Gaussian weight
/// outside the grid.
pub fn gaussian_l1(dist: &MomentumDistribution) -> f64 {
    let (mean, var) = mean_and_variance(dist);
    let lo = dist.n_min;
    let hi = dist.n_min + dist.len() as i64 - 1;
    let g = gaussian_bins(mean, var.sqrt(), lo, hi);
    let inside: f64 = g.iter().sum();
    let diff: f64 = dist.p_total.iter().zip(&g).map(|(p, q)| (p - q).abs()).sum();
    diff + (1.0 - inside).max(0.0)
}

pub fn metrics(dist: &MomentumDistribution, k: f64) -> WalkMetrics {
    let (mean, variance) = mean_and_variance(dist);
    let window = contrast_window(dist.step, k);
    let (outer, central) = window_masses(dist, window);
    WalkMetrics {
        step: dist.step,
        mean,
        variance,
        peaks: peaks(dist),
        window,
        central_mass: central,
        outer_mass: outer,
        peak_contrast: peak_contrast(dist, window),
        gaussian_l1: gaussian_l1(dist),
    }
}

/// Integer displacement kernel of the classical reference walk.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    /// Distribution after one kick on the ratchet state.
    pub first: MomentumDistribution,
    /// `D(d) = ½[K(d) + K(d + 1)]` for `d ∈ [d_min, …]`.
    pub d_min: i64,
    pub weights: Vec<f64>,
}

impl StepKernel {
    /// Kernel from one ideal kick of strength `k` on the ratchet state.
    pub fn ratchet(k: f64) -> Result<Self> {
        let n_max = crate::walk::default_n_max(k, 1);
        let first = crate::walk::ideal_walk(n_max, 0.0, [k, k], &CoinMatrix::balanced(), crate::params::RESONANT_TAU, 1)?
            .pop()
            .expect("one step");
        Ok(Self::from_first(first))
    }

    pub fn from_first(first: MomentumDistribution) -> Self {
        let lo = first.n_min - 1;
        let hi = first.n_min + first.len() as i64 - 1;
        let weights = (lo..=hi).map(|d| 0.5 * (first.total_at(d) + first.total_at(d + 1))).collect();
        StepKernel { first, d_min: lo, weights }
    }

    pub fn variance(&self) -> f64 {
        let mean: f64 = self.weights.iter().enumerate().map(|(i, w)| (self.d_min + i as i64) as f64 * w).sum();
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| ((self.d_min + i as i64) as f64 - mean).powi(2) * w)
            .sum()
    }
}

/// Classical walk after `t` steps and its moment-matched Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalReference {
    pub distribution: MomentumDistribution,
    pub gaussian: MomentumDistribution,
}

fn convolve(a_min: i64, a: &[f64], b_min: i64, b: &[f64]) -> (i64, Vec<f64>) {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    (a_min + b_min, out)
}

/// The one-kick distribution convolved with `t − 1` copies of the kernel.
pub fn classical_walk_reference(t: usize, kernel: &StepKernel) -> ClassicalReference {
    let t = t.max(1);
    let mut min = kernel.first.n_min;
    let mut p = kernel.first.p_total.clone();
    for _ in 1..t {
        let (m, q) = convolve(min, &p, kernel.d_min, &kernel.weights);
        min = m;
        p = q;
    }
    let half = (-min).max(min + p.len() as i64 - 1).max(1) as usize;
    let mut distribution = MomentumDistribution::zeros(half, t);
    for (i, v) in p.iter().enumerate() {
        let n = min + i as i64;
        let idx = (n - distribution.n_min) as usize;
        distribution.p_total[idx] += v;
    }
    distribution.p1 = distribution.p_total.iter().map(|x| x / 2.0).collect();
    distribution.p2 = distribution.p1.clone();
    let (mean, var) = mean_and_variance(&distribution);
    let hi = distribution.n_min + distribution.len() as i64 - 1;
    let mut gaussian = MomentumDistribution::zeros(half, t);
    gaussian.p_total = gaussian_bins(mean, var.sqrt(), distribution.n_min, hi);
    gaussian.p1 = gaussian.p_total.iter().map(|x| x / 2.0).collect();
    gaussian.p2 = gaussian.p1.clone();
    ClassicalReference { distribution, gaussian }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn scaling_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
