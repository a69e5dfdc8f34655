use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid group point: {0}")]
    InvalidPoint(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("domain truncation: {0}")]
    DomainTruncation(String),
    #[error("sampling produced a non-finite value at node (i={i}, j={j}): {value}")]
    Sampling { i: usize, j: usize, value: f64 },
    #[error("unsupported derivative order {0} (at most 3 letters)")]
    UnsupportedOrder(usize),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("instability: {0}")]
    Instability(String),
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("refused: contraction window violated, c(R)*tau = {c_r_tau:.4} > 0.5")]
    Refusal { c_r_tau: f64 },
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("estimation failure: {0}")]
    Estimation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl LabError {
    /// True for errors caused by bad caller input rather than by a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            LabError::InvalidPoint(_)
                | LabError::Domain(_)
                | LabError::Parameter(_)
                | LabError::UnsupportedOrder(_)
                | LabError::Refusal { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
