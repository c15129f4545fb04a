//! Compressed-sensing detectors that see only `Phi` and `y_p`.
//!
//! * [`ls_bomp`]: greedy block OMP with a full least-squares refit per step;
//!   needs the number of active devices.
//! * [`c_amp`]: complex approximate message passing with soft thresholding
//!   and an empirical state-evolution threshold; sparsity agnostic.
//! * [`exhaustive_oracle`]: brute-force minimizer of the least-squares
//!   residual over all supports of a given size.
//!
//! All three are pure functions; equal scores resolve to the lowest index.

mod amp;
mod bomp;
mod lstsq;
mod oracle;

use thiserror::Error;

pub use amp::{c_amp, AmpConfig, AmpOutcome};
pub use bomp::{ls_bomp, BompConfig, BompOutcome};
pub use lstsq::{least_squares, LeastSquares};
pub use oracle::{combinations, exhaustive_oracle, OracleOutcome, ORACLE_MAX_DEVICES};

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("device {0} has an all-zero column")]
    ZeroColumn(usize),
    #[error("exhaustive search over {devices} devices exceeds the guard of {limit}")]
    TooLarge { devices: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, SolverError>;
