//! Adiabatic elimination of the excited level.
//!
//! [`reduce`] evaluates the closed-form effective Hamiltonian and collapse
//! operators of the ground-state doublet. [`validate_reduction`] integrates
//! the full three-level master equation next to the effective one on a
//! half-integer momentum ladder and reports how far their ground blocks drift
//! apart.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::oracle::lindblad::{lindblad_step, step_plan, trace_distance, DensityMatrix};
use crate::oracle::sparse::{raise, CMatrix, SparseMatrix};
use crate::oracle::SparseLindbladian;
use crate::params::{DerivedParams, PhysicsParams};
use crate::{Error, Result};

/// Coupling-to-detuning ratio above which the reduction is flagged.
pub const WEAK_COUPLING_LIMIT: f64 = 0.3;
/// Largest half-width accepted by [`validate_reduction`].
pub const MAX_VALIDATION_N_MAX: usize = 6;

/// The Λ system: ground levels at `E₁ = −Δ₁`, `E₂ = +Δ₂`, an excited level
/// at zero coupled to both by `(Ω/2) cos(θ/2)`, and decay `√γ_m |m⟩⟨e|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLevelModel {
    pub omega: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ThreeLevelModel {
    pub fn from_params(params: &PhysicsParams, derived: &DerivedParams) -> Self {
        ThreeLevelModel {
            omega: params.omega,
            delta1: params.delta1,
            delta2: params.delta2,
            gamma1: derived.gamma1,
            gamma2: derived.gamma2,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    pub fn energies(&self) -> [f64; 2] {
        [-self.delta1, self.delta2]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega, self.delta1, self.delta2, self.gamma1, self.gamma2];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("three-level model has non-finite entries".into()));
        }
        if self.delta1 == 0.0 || self.delta2 == 0.0 {
            return Err(Error::InvalidParams("detunings must be non-zero".into()));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(Error::InvalidParams("decay rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Regime warnings for the elimination.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (m, delta) in [(1, self.delta1), (2, self.delta2)] {
            let ratio = (self.omega / delta).abs();
            if ratio > WEAK_COUPLING_LIMIT {
                out.push(format!("Omega/Delta_{m} = {ratio:.3} exceeds {WEAK_COUPLING_LIMIT}"));
            }
            let damping = (self.gamma() / delta).abs();
            if damping > WEAK_COUPLING_LIMIT {
                out.push(format!("gamma/Delta_{m} = {damping:.3} exceeds {WEAK_COUPLING_LIMIT}"));
            }
        }
        out
    }

    /// `1 / (−iγ/2 − E_m)` and `1 / (+iγ/2 − E_m)`.
    fn resolvents(&self) -> ([Complex64; 2], [Complex64; 2]) {
        let half = Complex64::new(0.0, self.gamma() / 2.0);
        let e = self.energies();
        let r = [1.0 / (-half - e[0]), 1.0 / (-half - e[1])];
        let r_adj = [1.0 / (half - e[0]), 1.0 / (half - e[1])];
        (r, r_adj)
    }
}

/// Effective ground-doublet operators.
///
/// `hamiltonian[a][b]` multiplies `|a⟩⟨b| ⊗ cos²(θ/2)`. Channel `m`
/// collapses with `lindblad[m] ⊗ cos(θ/2)` (before the recoil factor).
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveModel {
    pub hamiltonian: [[Complex64; 2]; 2],
    pub lindblad: [[[Complex64; 2]; 2]; 2],
    pub cross_terms_active: bool,
}

impl EffectiveModel {
    pub fn diagonal(&self) -> [f64; 2] {
        [self.hamiltonian[0][0].re, self.hamiltonian[1][1].re]
    }

    /// `(⟨1|H|2⟩, ⟨2|H|1⟩)` as computed, whether or not they are active.
    pub fn cross(&self) -> [Complex64; 2] {
        [self.hamiltonian[0][1], self.hamiltonian[1][0]]
    }

    /// Hamiltonian used for dynamics.
    pub fn active_hamiltonian(&self) -> [[Complex64; 2]; 2] {
        let mut h = self.hamiltonian;
        if !self.cross_terms_active {
            h[0][1] = Complex64::default();
            h[1][0] = Complex64::default();
        }
        h
    }

    pub fn hermiticity_error(&self) -> f64 {
        let h = &self.hamiltonian;
        let mut err: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                err = err.max((h[a][b] - h[b][a].conj()).norm());
            }
        }
        err
    }
}

/// Effective operators; cross terms stay active unless the detunings are
/// equal or `drop_cross_terms` is set.
pub fn reduce_with(model: &ThreeLevelModel, drop_cross_terms: bool) -> Result<EffectiveModel> {
    model.validate()?;
    let (r, r_adj) = model.resolvents();
    let pref = -model.omega * model.omega / 8.0;
    let mut h = [[Complex64::default(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            h[a][b] = pref * (r[b] + r_adj[a]);
        }
    }
    h[0][0] = Complex64::new(h[0][0].re, 0.0);
    h[1][1] = Complex64::new(h[1][1].re, 0.0);
    // The off-diagonal sum collapses to (Δ₁ − Δ₂) / ((Δ₁ + iγ/2)(−Δ₂ − iγ/2)).
    let half = Complex64::new(0.0, model.gamma() / 2.0);
    let cross = pref * (model.delta1 - model.delta2) / ((model.delta1 + half) * (-model.delta2 - half));
    h[0][1] = cross;
    h[1][0] = cross.conj();

    let half_omega = model.omega / 2.0;
    let mut lindblad = [[[Complex64::default(); 2]; 2]; 2];
    for (m, g) in [model.gamma1, model.gamma2].into_iter().enumerate() {
        for b in 0..2 {
            lindblad[m][m][b] = g.sqrt() * half_omega * r[b];
        }
    }
    Ok(EffectiveModel {
        hamiltonian: h,
        lindblad,
        cross_terms_active: !drop_cross_terms && model.delta1 != model.delta2,
    })
}

pub fn reduce(model: &ThreeLevelModel) -> Result<EffectiveModel> {
    reduce_with(model, false)
}

/// Outcome of [`validate_reduction`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub max_trace_distance: f64,
    pub final_trace_distance: f64,
    /// Largest excited population seen in the full model.
    pub max_excited_population: f64,
    /// Excited population averaged over the second half of the run.
    pub excited_plateau: f64,
    pub steps: usize,
    pub dt: f64,
    pub cross: [Complex64; 2],
    pub warnings: Vec<String>,
}

impl fmt::Display for ReductionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "max_trace_distance = {:.6e}", self.max_trace_distance)?;
        writeln!(f, "final_trace_distance = {:.6e}", self.final_trace_distance)?;
        writeln!(f, "max_excited_population = {:.6e}", self.max_excited_population)?;
        writeln!(f, "excited_plateau = {:.6e}", self.excited_plateau)?;
        writeln!(f, "steps = {}", self.steps)?;
        writeln!(f, "dt = {:.6e}", self.dt)?;
        writeln!(f, "cross_12 = {:.6e}{:+.6e}i", self.cross[0].re, self.cross[0].im)?;
        for w in &self.warnings {
            writeln!(f, "warning = {w}")?;
        }
        Ok(())
    }
}

/// Half-integer ladder operators: sites `j ∈ [−2 n_max, 2 n_max]` carry
/// momentum `j/2`, and `cos(θ/2)` shifts by one site either way.
fn half_cos(len: usize) -> SparseMatrix {
    let up = raise(len);
    up.plus(&up.adjoint()).scaled(Complex64::new(0.5, 0.0))
}

fn internal(dim: usize, entries: &[(usize, usize, Complex64)]) -> CMatrix {
    let mut m = DMatrix::zeros(dim, dim);
    for (a, b, v) in entries {
        m[(*a, *b)] += *v;
    }
    m
}

fn full_generator(model: &ThreeLevelModel, len: usize) -> SparseLindbladian {
    let one = Complex64::new(1.0, 0.0);
    let id = SparseMatrix::identity(len);
    let e = model.energies();
    let hg = internal(3, &[(0, 0, one * e[0]), (1, 1, one * e[1])]);
    let coupling = internal(
        3,
        &[
            (0, 2, one * (model.omega / 2.0)),
            (2, 0, one * (model.omega / 2.0)),
            (1, 2, one * (model.omega / 2.0)),
            (2, 1, one * (model.omega / 2.0)),
        ],
    );
    let h = SparseMatrix::kron_left(&hg, &id).plus(&SparseMatrix::kron_left(&coupling, &half_cos(len)));
    let jumps = [(0, model.gamma1), (1, model.gamma2)]
        .into_iter()
        .filter(|(_, g)| *g > 0.0)
        .map(|(m, g)| SparseMatrix::kron_left(&internal(3, &[(m, 2, one * g.sqrt())]), &id))
        .collect();
    SparseLindbladian::new(&h, jumps)
}

fn effective_generator(model: &ThreeLevelModel, eff: &EffectiveModel, len: usize) -> SparseLindbladian {
    let one = Complex64::new(1.0, 0.0);
    let id = SparseMatrix::identity(len);
    let cos = half_cos(len);
    let cos_sq = cos.matmul(&cos);
    let e = model.energies();
    let hg = internal(2, &[(0, 0, one * e[0]), (1, 1, one * e[1])]);
    let ha = eff.active_hamiltonian();
    let heff = internal(2, &[(0, 0, ha[0][0]), (0, 1, ha[0][1]), (1, 0, ha[1][0]), (1, 1, ha[1][1])]);
    let h = SparseMatrix::kron_left(&hg, &id).plus(&SparseMatrix::kron_left(&heff, &cos_sq));
    let jumps = eff
        .lindblad
        .iter()
        .filter(|l| l.iter().flatten().any(|x| x.norm() > 0.0))
        .map(|l| {
            let m = internal(2, &[(0, 0, l[0][0]), (0, 1, l[0][1]), (1, 0, l[1][0]), (1, 1, l[1][1])]);
            SparseMatrix::kron_left(&m, &cos)
        })
        .collect();
    SparseLindbladian::new(&h, jumps)
}

/// Integrates the three-level and the effective two-level master equations
/// from `(|1⟩+|2⟩)/√2 ⊗ (|p=0⟩ − i|p=1⟩)/√2` and compares their ground blocks.
///
/// `dt = None` picks the step from the stability bound.
pub fn validate_reduction(
    model: &ThreeLevelModel,
    n_max: usize,
    duration: f64,
    dt: Option<f64>,
) -> Result<ReductionReport> {
    if n_max > MAX_VALIDATION_N_MAX || n_max < 1 {
        return Err(Error::CostGuard(format!(
            "validation grid needs 1 <= n_max <= {MAX_VALIDATION_N_MAX}, got {n_max}"
        )));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParams("duration must be positive".into()));
    }
    let eff = reduce(model)?;
    let mut warnings = model.warnings();
    for w in &warnings {
        log::warn!("reduction regime: {w}");
    }
    let len = 4 * n_max + 1;
    let full = full_generator(model, len);
    let reduced = effective_generator(model, &eff, len);

    let (steps, dt) = match dt {
        Some(dt) if dt > 0.0 => ((duration / dt).ceil() as usize, dt),
        Some(_) => return Err(Error::InvalidParams("dt must be positive".into())),
        None => {
            let (a, da) = step_plan(&full, duration);
            let (b, db) = step_plan(&reduced, duration);
            if a >= b { (a, da) } else { (b, db) }
        }
    };

    let centre = 2 * n_max;
    let amp = 0.5;
    let mut psi2 = vec![Complex64::default(); 2 * len];
    for ch in 0..2 {
        psi2[ch * len + centre] = Complex64::new(amp, 0.0);
        psi2[ch * len + centre + 2] = Complex64::new(0.0, -amp);
    }
    let mut psi3 = psi2.clone();
    psi3.extend(std::iter::repeat_n(Complex64::default(), len));
    let mut rho3 = DensityMatrix::pure(&psi3);
    let mut rho2 = DensityMatrix::pure(&psi2);

    let excited = |rho: &DensityMatrix| (2 * len..3 * len).map(|i| rho.0[(i, i)].re).sum::<f64>();
    let distance = |a: &DensityMatrix, b: &DensityMatrix| {
        trace_distance(&a.0.view((0, 0), (2 * len, 2 * len)).into_owned(), &b.0)
    };

    let samples = 400.min(steps);
    let sample_every = (steps / samples).max(1);
    let mut max_distance: f64 = 0.0;
    let mut max_excited: f64 = 0.0;
    let mut plateau_sum = 0.0;
    let mut plateau_count = 0usize;
    for s in 1..=steps {
        rho3.0 = lindblad_step(&rho3.0, &full, dt)?;
        rho2.0 = lindblad_step(&rho2.0, &reduced, dt)?;
        let pe = excited(&rho3);
        max_excited = max_excited.max(pe);
        if 2 * s > steps {
            plateau_sum += pe;
            plateau_count += 1;
        }
        if s % sample_every == 0 || s == steps {
            max_distance = max_distance.max(distance(&rho3, &rho2));
        }
    }
    rho3.check_drift(1.0)?;
    rho2.check_drift(1.0)?;
    let final_distance = distance(&rho3, &rho2);
    if eff.hermiticity_error() > 1e-14 * eff.hamiltonian[0][0].norm().max(1.0) {
        warnings.push("effective Hamiltonian not Hermitian".into());
    }
    Ok(ReductionReport {
        max_trace_distance: max_distance.max(final_distance),
        final_trace_distance: final_distance,
        max_excited_population: max_excited,
        excited_plateau: plateau_sum / plateau_count.max(1) as f64,
        steps,
        dt,
        cross: eff.cross(),
        warnings,
    })
}

/// Excited population bound `2 (Ω / 2Δ)²` for the smaller detuning.
pub fn excited_plateau_bound(model: &ThreeLevelModel) -> f64 {
    let delta = model.delta1.abs().min(model.delta2.abs());
    2.0 * (model.omega / (2.0 * delta)).powi(2)
}
