use std::f64::consts::PI;

use crate::se::recoil_density;

/// Gauss–Legendre rule on `[-1, 1]` with weights multiplied by the recoil
/// density, so that `Σ w_i f(u_i) ≈ ∫ du Ξ(u) f(u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub const DEFAULT_NODES: usize = 16;

    pub fn recoil(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        let weights = nodes.iter().zip(&weights).map(|(u, w)| w * recoil_density(*u)).collect();
        QuadratureRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(u, w)| w * f(*u)).sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::recoil(Self::DEFAULT_NODES)
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule, by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_one() {
        for n in [4, 16, 32] {
            let q = QuadratureRule::recoil(n);
            assert_abs_diff_eq!(q.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn recoil_moments() {
        let q = QuadratureRule::default();
        assert_abs_diff_eq!(q.integrate(|u| u * u), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(q.integrate(|u| u), 0.0, epsilon = 1e-14);
        // (3/8)(2/5 + 2/7)
        assert_abs_diff_eq!(q.integrate(|u| u.powi(4)), 0.375 * (0.4 + 2.0 / 7.0), epsilon = 1e-12);
    }

    #[test]
    fn legendre_rule_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_abs_diff_eq!(int, 2.0 / 9.0, epsilon = 1e-14);
    }
}
