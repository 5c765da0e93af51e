use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rank deficient: {0}")]
    Rank(String),
    #[error("plant is not stabilizable: uncontrollable mode(s) at {modes:?}")]
    Stabilizability { modes: Vec<(f64, f64)> },
    #[error("invalid sampling window: {0}")]
    Window(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("overflow in matrix exponential: {0}")]
    Overflow(String),
    #[error("not controllable: {0}")]
    Controllability(String),
    #[error("pole placement failed: {0}")]
    Placement(String),
    #[error("closed-loop spectrum unusable (need real, distinct, negative): {eigenvalues:?}")]
    Spectrum { eigenvalues: Vec<(f64, f64)> },
    #[error("eigenvector matrix is degenerate: cond(T) = {cond:e}")]
    DegenerateEigenvector { cond: f64 },
    #[error("interlacing violated at index {index}: {detail}")]
    Interlacing { index: usize, detail: String },
    #[error("no target below gamma exists: largest residual singular value {a_max} >= {gamma}")]
    InfeasibleAtPeriod { a_max: f64, gamma: f64 },
    #[error("post-check failed: {0}")]
    PostCheck(String),
    #[error("no stabilizable period: sigma_bar({h}) = {sigma_bar} >= {gamma} at the smallest probe")]
    NoStabilizablePeriod { h: f64, sigma_bar: f64, gamma: f64 },
    #[error("period {h} outside the certified interval (0, {h_star})")]
    PeriodOutOfCertificate { h: f64, h_star: f64 },
}

impl Error {
    /// Input and validation failures, as opposed to synthesis failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Dimension(_)
                | Error::Stabilizability { .. }
                | Error::Window(_)
                | Error::InvalidValue(_)
                | Error::PeriodOutOfCertificate { .. }
        )
    }
}
