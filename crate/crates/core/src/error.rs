use std::path::PathBuf;

/// Errors raised by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible targets: {0}")]
    Infeasible(String),

    #[error(
        "momentum grid too small (n_max = {n_max}): boundary occupation {occupation:.3e} exceeds 1e-8; enlarge n_max"
    )]
    GridTooSmall { n_max: usize, occupation: f64 },

    #[error("coin matrix is not unitary (deviation {0:.3e})")]
    NonUnitaryCoin(f64),

    #[error("collapse mode {mode} requires a half-integer momentum ladder")]
    ModeMismatch { mode: &'static str },

    #[error("both spontaneous-emission rates are zero")]
    NoDecayChannel,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("integration step unstable: {0}")]
    Unstable(String),

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status used by the `simulate` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParams(_) | Error::Infeasible(_) => 2,
            Error::ModeMismatch { .. } | Error::NonUnitaryCoin(_) | Error::NoDecayChannel => 2,
            Error::CostGuard(_) => 2,
            Error::GridTooSmall { .. } | Error::Internal(_) | Error::Unstable(_) => 3,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
