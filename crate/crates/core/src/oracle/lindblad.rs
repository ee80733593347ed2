use num_complex::Complex64;

use super::sparse::{CMatrix, SparseMatrix};
use crate::{Error, Result};

/// Largest accepted `‖generator‖·dt`.
pub const STABILITY_LIMIT: f64 = 0.1;
/// Step sizes are picked this far below the stability limit.
pub const SAFETY_FACTOR: f64 = 10.0;
/// Tolerated trace and Hermiticity drift per integrated pulse.
pub const DRIFT_TOLERANCE: f64 = 1e-9;
/// Spot-check bound on negative eigenvalues.
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

/// Right-hand side of a Lindblad master equation,
/// `dρ/dt = −i(Gρ − ρG†) + J(ρ)` with `G = H − (i/2) Σ L†L`.
pub trait Generator {
    fn dim(&self) -> usize;
    fn apply(&self, rho: &CMatrix) -> CMatrix;
    /// Upper bound on the norm of the superoperator, for step-size control.
    fn norm_bound(&self) -> f64;
}

/// Generator built from a sparse Hamiltonian and sparse jump operators.
#[derive(Clone, Debug)]
pub struct SparseLindbladian {
    g: SparseMatrix,
    jumps: Vec<SparseMatrix>,
    bound: f64,
}

impl SparseLindbladian {
    pub fn new(h: &SparseMatrix, jumps: Vec<SparseMatrix>) -> Self {
        let dim = h.dim();
        let mut decay = SparseMatrix::zeros(dim);
        for l in &jumps {
            assert_eq!(l.dim(), dim);
            decay = decay.plus(&l.adjoint().matmul(l));
        }
        let g = h.plus(&decay.scaled(Complex64::new(0.0, -0.5)));
        let bound = 2.0 * g.norm_inf()
            + jumps.iter().map(|l| l.norm_inf() * l.adjoint().norm_inf()).sum::<f64>();
        SparseLindbladian { g, jumps, bound }
    }

    pub fn effective_hamiltonian(&self) -> &SparseMatrix {
        &self.g
    }
}

impl Generator for SparseLindbladian {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let i = Complex64::new(0.0, 1.0);
        // ρG† is formed directly: RK4 stages are not exactly Hermitian.
        let mut out = (self.g.mul_dense(rho) - self.g.dense_mul_adjoint(rho)) * (-i);
        for l in &self.jumps {
            out += l.mul_dense(&l.dense_mul_adjoint(rho));
        }
        out
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

/// One classical Runge–Kutta step.
pub fn lindblad_step<G: Generator + ?Sized>(rho: &CMatrix, generator: &G, dt: f64) -> Result<CMatrix> {
    let load = generator.norm_bound() * dt;
    if !(load < STABILITY_LIMIT) {
        return Err(Error::Unstable(format!(
            "generator norm times dt is {load:.3e}, limit {STABILITY_LIMIT}"
        )));
    }
    let k1 = generator.apply(rho);
    let r = |x: f64| Complex64::new(x, 0.0);
    let k2 = generator.apply(&(rho + &k1 * r(dt / 2.0)));
    let k3 = generator.apply(&(rho + &k2 * r(dt / 2.0)));
    let k4 = generator.apply(&(rho + &k3 * r(dt)));
    Ok(rho + (k1 + k2 * r(2.0) + k3 * r(2.0) + k4) * r(dt / 6.0))
}

/// Number of equal steps covering `duration` with `‖generator‖·dt` at most
/// `STABILITY_LIMIT / SAFETY_FACTOR`.
pub fn step_plan<G: Generator + ?Sized>(generator: &G, duration: f64) -> (usize, f64) {
    let max_dt = STABILITY_LIMIT / SAFETY_FACTOR / generator.norm_bound().max(f64::MIN_POSITIVE);
    let steps = (duration / max_dt).ceil().max(1.0) as usize;
    (steps, duration / steps as f64)
}

/// Density operator on a truncated (internal ⊗ momentum) space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub CMatrix);

impl DensityMatrix {
    pub fn pure(psi: &[Complex64]) -> Self {
        let n = psi.len();
        DensityMatrix(CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.0).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Integrates over `duration`, checking trace and Hermiticity drift.
    pub fn evolve<G: Generator + ?Sized>(&mut self, generator: &G, duration: f64) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let (steps, dt) = step_plan(generator, duration);
        let trace0 = self.trace();
        for _ in 0..steps {
            self.0 = lindblad_step(&self.0, generator, dt)?;
        }
        self.check_drift(trace0)
    }

    pub fn check_drift(&self, reference_trace: f64) -> Result<()> {
        let drift = (self.trace() - reference_trace).abs();
        if drift > DRIFT_TOLERANCE {
            return Err(Error::Unstable(format!("trace drift {drift:.3e}")));
        }
        let herm = self.hermiticity_error();
        if herm > DRIFT_TOLERANCE {
            return Err(Error::Unstable(format!("Hermiticity drift {herm:.3e}")));
        }
        Ok(())
    }

    pub fn check_positivity(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOLERANCE {
            return Err(Error::Unstable(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn symmetrize(&mut self) {
        self.0 = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
    }
}

/// Eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().collect()
}

/// `½ ‖a − b‖₁`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|x| x.abs()).sum::<f64>()
}
