//! Python bindings: parameters, ensemble runs, the ideal walk, the recoil
//! sampler and the reduction check.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kickwalk::analysis::{classical_walk_reference, metrics, StepKernel};
use kickwalk::engine::{run_ensemble, run_ensemble_with_threads, CoinSpec, EventTiming, RunConfig};
use kickwalk::io::{plan, write_results, Overrides, ResolvedConfig, RunManifest};
use kickwalk::params::{derive, invert_for_biased_targets, invert_for_targets, RESONANT_TAU};
use kickwalk::reduction::{validate_reduction as validate, ThreeLevelModel};
use kickwalk::se::{recoil_density as density, sample_recoil_u, CollapseMode};
use kickwalk::walk::{default_n_max, ideal_walk as ideal, CoinMatrix, LadderSpacing, MomentumDistribution};
use kickwalk::Error;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Laser and atom parameters.
#[pyclass(name = "PhysicsParams", from_py_object)]
#[derive(Clone)]
struct PyPhysics(kickwalk::params::PhysicsParams);

#[pymethods]
impl PyPhysics {
    #[new]
    #[pyo3(signature = (omega, delta1, delta2, tau_p, tau_se, tau = RESONANT_TAU, kick_period = None, branching = None))]
    fn new(
        omega: f64,
        delta1: f64,
        delta2: f64,
        tau_p: f64,
        tau_se: f64,
        tau: f64,
        kick_period: Option<f64>,
        branching: Option<[f64; 2]>,
    ) -> PyResult<Self> {
        let p = kickwalk::params::PhysicsParams { omega, delta1, delta2, tau_p, tau, tau_se, kick_period, branching };
        p.validate().map_err(to_py)?;
        Ok(PyPhysics(p))
    }

    /// Parameters reaching kick strength `k` (or `(k1, k2)`) and emission
    /// probability `p_se` per kick.
    #[staticmethod]
    #[pyo3(signature = (k, p_se, tau_p = 380e-9, tau_se = 26e-9, ratio = None, k2 = None))]
    fn from_targets(
        k: f64,
        p_se: f64,
        tau_p: f64,
        tau_se: f64,
        ratio: Option<[f64; 2]>,
        k2: Option<f64>,
    ) -> PyResult<Self> {
        let p = match k2 {
            Some(k2) => invert_for_biased_targets([k, k2], p_se, tau_p, tau_se, ratio),
            None => invert_for_targets(k, p_se, tau_p, tau_se, ratio.unwrap_or([1.0, 1.0])),
        };
        p.map(PyPhysics).map_err(to_py)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }
    #[getter]
    fn delta1(&self) -> f64 {
        self.0.delta1
    }
    #[getter]
    fn delta2(&self) -> f64 {
        self.0.delta2
    }
    #[getter]
    fn tau_p(&self) -> f64 {
        self.0.tau_p
    }
    #[getter]
    fn tau_se(&self) -> f64 {
        self.0.tau_se
    }

    /// Derived quantities as a dict.
    fn derive<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = derive(&self.0).map_err(to_py)?;
        let out = PyDict::new(py);
        for (k, v) in [
            ("k1", d.k1),
            ("k2", d.k2),
            ("gamma1", d.gamma1),
            ("gamma2", d.gamma2),
            ("gamma", d.gamma),
            ("p_se", d.p_se),
            ("xi1", d.xi1),
            ("xi2", d.xi2),
            ("phi_dyn", d.phi_dyn),
        ] {
            out.set_item(k, v)?;
        }
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Per-step momentum distribution.
#[pyclass(name = "Distribution", skip_from_py_object)]
struct PyDistribution(MomentumDistribution);

#[pymethods]
impl PyDistribution {
    #[getter]
    fn step(&self) -> usize {
        self.0.step
    }
    #[getter]
    fn n(&self) -> Vec<i64> {
        self.0.n_values().collect()
    }
    #[getter]
    fn p1(&self) -> Vec<f64> {
        self.0.p1.clone()
    }
    #[getter]
    fn p2(&self) -> Vec<f64> {
        self.0.p2.clone()
    }
    #[getter]
    fn p_total(&self) -> Vec<f64> {
        self.0.p_total.clone()
    }

    fn total(&self) -> f64 {
        self.0.total()
    }

    /// Mean, variance, peak contrast and Gaussian L1 for contrast window scale `k`.
    fn metrics<'py>(&self, py: Python<'py>, k: f64) -> PyResult<Bound<'py, PyDict>> {
        let m = metrics(&self.0, k);
        let out = PyDict::new(py);
        out.set_item("mean", m.mean)?;
        out.set_item("variance", m.variance)?;
        out.set_item("window", m.window)?;
        out.set_item("peak_contrast", m.peak_contrast)?;
        out.set_item("gaussian_l1", m.gaussian_l1)?;
        out.set_item("peaks", m.peaks)?;
        Ok(out)
    }

    fn l1_distance(&self, other: &PyDistribution) -> f64 {
        self.0.l1_distance(&other.0)
    }
}

fn wrap(ds: Vec<MomentumDistribution>) -> Vec<PyDistribution> {
    ds.into_iter().map(PyDistribution).collect()
}

/// Ensemble-averaged run result.
#[pyclass(name = "EnsembleResult", skip_from_py_object)]
struct PyEnsemble {
    result: kickwalk::engine::EnsembleResult,
    resolved: ResolvedConfig,
}

#[pymethods]
impl PyEnsemble {
    fn distribution(&self, step: usize) -> PyResult<PyDistribution> {
        self.result
            .distributions
            .get(step)
            .cloned()
            .map(PyDistribution)
            .ok_or_else(|| PyValueError::new_err(format!("step {step} out of range")))
    }

    fn distributions(&self) -> Vec<PyDistribution> {
        wrap(self.result.distributions.clone())
    }

    #[getter]
    fn total_events(&self) -> usize {
        self.result.total_events()
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.result.metadata.n_max
    }

    #[getter]
    fn elapsed(&self) -> f64 {
        self.result.elapsed.as_secs_f64()
    }

    /// Writes distribution.csv, metrics.csv and manifest.toml into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        let manifest = RunManifest::new(&self.resolved, &self.result);
        write_results(&self.result, &manifest, &dir).map(|_| ()).map_err(to_py)
    }
}

/// A run configuration ready to execute.
#[pyclass(name = "Simulation", skip_from_py_object)]
struct PySimulation(ResolvedConfig);

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (
        physics, steps, trajectories = 1000, seed = 0, beta_fwhm = 0.0, beta_center = 0.0,
        substeps = 4096, collapse = "mean_cos", timing = "exact", n_max = None,
        coin_alpha = std::f64::consts::FRAC_PI_4, coin_chi = 0.0
    ))]
    fn new(
        physics: &PyPhysics,
        steps: usize,
        trajectories: usize,
        seed: u64,
        beta_fwhm: f64,
        beta_center: f64,
        substeps: usize,
        collapse: &str,
        timing: &str,
        n_max: Option<usize>,
        coin_alpha: f64,
        coin_chi: f64,
    ) -> PyResult<Self> {
        let mut run = RunConfig::new(physics.0.clone(), steps);
        run.trajectories = trajectories;
        run.seed = seed;
        run.beta_fwhm = beta_fwhm;
        run.beta_center = beta_center;
        run.substeps = substeps;
        run.n_max = n_max;
        run.coin = CoinSpec { alpha: coin_alpha, chi: coin_chi };
        run.collapse = match collapse {
            "mean_cos" => CollapseMode::MeanCos,
            "exact_cos" => {
                run.spacing = LadderSpacing::Half;
                CollapseMode::ExactCos
            }
            other => return Err(PyValueError::new_err(format!("unknown collapse mode {other:?}"))),
        };
        run.timing = match timing {
            "exact" => EventTiming::Exact,
            "snap" => EventTiming::Snap,
            other => return Err(PyValueError::new_err(format!("unknown timing {other:?}"))),
        };
        run.validate().map_err(to_py)?;
        Ok(PySimulation(ResolvedConfig {
            run,
            threads: None,
            label: "python".into(),
            output_root: PathBuf::from("."),
            preset: None,
            provenance: Default::default(),
            warnings: Vec::new(),
        }))
    }

    /// Loads a configuration file and/or preset. Sweep presets return one
    /// simulation per member.
    #[staticmethod]
    #[pyo3(signature = (path = None, preset = None))]
    fn load(path: Option<PathBuf>, preset: Option<&str>) -> PyResult<Vec<PySimulation>> {
        let runs = plan(preset, path.as_deref(), &Overrides::default()).map_err(to_py)?;
        Ok(runs.into_iter().map(PySimulation).collect())
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.run.steps
    }

    #[pyo3(signature = (threads = None))]
    fn run(&self, py: Python<'_>, threads: Option<usize>) -> PyResult<PyEnsemble> {
        let resolved = self.0.clone();
        let result = py
            .detach(|| {
                let sim = kickwalk::engine::Simulation::new(resolved.run.clone())?;
                match threads {
                    Some(t) => run_ensemble_with_threads(&sim, t, None),
                    None => run_ensemble(&sim, None),
                }
            })
            .map_err(to_py)?;
        Ok(PyEnsemble { result, resolved })
    }
}

/// Coherent walk without emission, from the ratchet state.
#[pyfunction]
#[pyo3(signature = (k, steps, beta = 0.0, n_max = None, tau = RESONANT_TAU))]
fn ideal_walk(k: f64, steps: usize, beta: f64, n_max: Option<usize>, tau: f64) -> PyResult<Vec<PyDistribution>> {
    let n_max = n_max.unwrap_or_else(|| default_n_max(k, steps));
    ideal(n_max, beta, [k, k], &CoinMatrix::balanced(), tau, steps).map(wrap).map_err(to_py)
}

/// Classical random-walk reference after `steps` kicks and its matched Gaussian.
#[pyfunction]
fn classical_reference(k: f64, steps: usize) -> PyResult<(PyDistribution, PyDistribution)> {
    let kernel = StepKernel::ratchet(k).map_err(to_py)?;
    let r = classical_walk_reference(steps, &kernel);
    Ok((PyDistribution(r.distribution), PyDistribution(r.gaussian)))
}

#[pyfunction]
fn recoil_density(u: f64) -> f64 {
    density(u)
}

/// `n` recoil projections drawn with a ChaCha8 generator seeded by `seed`.
#[pyfunction]
fn sample_recoil(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_recoil_u(&mut rng)).collect()
}

/// Compares the three-level model with its effective two-level reduction.
#[pyfunction]
#[pyo3(signature = (omega, delta1, delta2, gamma1, gamma2, n_max = 2, duration = 100.0))]
fn validate_reduction<'py>(
    py: Python<'py>,
    omega: f64,
    delta1: f64,
    delta2: f64,
    gamma1: f64,
    gamma2: f64,
    n_max: usize,
    duration: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let model = ThreeLevelModel { omega, delta1, delta2, gamma1, gamma2 };
    let r = py.detach(|| validate(&model, n_max, duration, None)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("max_trace_distance", r.max_trace_distance)?;
    out.set_item("final_trace_distance", r.final_trace_distance)?;
    out.set_item("max_excited_population", r.max_excited_population)?;
    out.set_item("excited_plateau", r.excited_plateau)?;
    out.set_item("steps", r.steps)?;
    out.set_item("warnings", r.warnings)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "kickwalk")]
fn kickwalk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhysics>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(ideal_walk, m)?)?;
    m.add_function(wrap_pyfunction!(classical_reference, m)?)?;
    m.add_function(wrap_pyfunction!(recoil_density, m)?)?;
    m.add_function(wrap_pyfunction!(sample_recoil, m)?)?;
    m.add_function(wrap_pyfunction!(validate_reduction, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
