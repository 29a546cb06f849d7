use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("Hermiticity residual {residual:.3e} exceeds limit {limit:.3e}")]
    NotHermitian { residual: f64, limit: f64 },
    #[error("anti-Hermiticity residual {residual:.3e} exceeds limit {limit:.3e}")]
    NotAntiHermitian { residual: f64, limit: f64 },
    #[error("regularity violation: gap {gap:.3e} below minimum {min_gap:.3e} (indices {j}, {k})")]
    RegularityViolation {
        gap: f64,
        min_gap: f64,
        j: usize,
        k: usize,
    },
    #[error("singular value collision: log-gap {gap:.3e} below minimum {min_gap:.3e}")]
    SingularValueCollision { gap: f64, min_gap: f64 },
    #[error("matrix not invertible: smallest singular value {sigma_min:.3e}")]
    NotInvertible { sigma_min: f64 },
    #[error("operand has nonzero diagonal entry of magnitude {magnitude:.3e}")]
    NonzeroDiagonal { magnitude: f64 },
    #[error("cross-check failure: routes disagree by {discrepancy:.3e} (limit {limit:.3e})")]
    CrossCheckFailure { discrepancy: f64, limit: f64 },
    #[error("trajectory left the Weyl alcove at t = {time}")]
    RegularityLost { time: f64 },
    #[error("observable is not gauge invariant (deviation {deviation:.3e})")]
    GaugeViolation { deviation: f64 },
    #[error("scalar domain error: {0}")]
    ScalarDomain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
