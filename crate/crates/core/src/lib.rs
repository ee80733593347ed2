//! Discrete-time quantum walks in momentum space of a periodically kicked
//! two-level atom, with spontaneous-emission decoherence simulated by
//! Monte-Carlo wave-function trajectories.
//!
//! The crate is organised bottom-up:
//!
//! * [`params`]: laser/atom parameters and the closed-form derived rates.
//! * [`walk`]: closed-system walker state, kick, coin and free evolution.
//! * [`se`]: spontaneous-emission sampling and collapse operators.
//! * [`reduction`]: effective two-level operators of the Λ system.
//! * [`engine`]: finite-pulse trajectories and ensembles.
//! * [`oracle`]: dense master-equation integrators used as ground truth.
//! * [`analysis`]: moments, peak contrast and classical references.
//! * [`io`]: run configuration, presets and output files.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod io;
pub mod oracle;
pub mod params;
pub mod reduction;
pub mod se;
pub mod walk;

pub use error::{Error, Result};
pub use num_complex::Complex64;
