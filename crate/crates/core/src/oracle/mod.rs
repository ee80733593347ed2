//! Dense master-equation integrators used as ground truth for the
//! trajectory engine and the effective reduction.

pub mod dense_walk;
pub mod lindblad;
pub mod mcwf;
pub mod quadrature;
pub mod sparse;

pub use dense_walk::{evolve_walk_dense, DenseWalk, DenseWalkConfig, MAX_DENSE_N_MAX};
pub use lindblad::{lindblad_step, trace_distance, DensityMatrix, Generator, SparseLindbladian};
pub use mcwf::{mcwf_ensemble, mcwf_standard, statistical_l1_bound};
pub use quadrature::QuadratureRule;
pub use sparse::{CMatrix, SparseMatrix};
