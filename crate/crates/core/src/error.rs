use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("slicing is not timelike: g^00 = {value:e} at r = {r}")]
    NotTimelike { r: f64, value: f64 },
    #[error("integrand is not integrable: {0}")]
    NonIntegrable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("blowup at t_* = {t_star}")]
    Blowup { t_star: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("tail truncation error {estimate:e} exceeds tolerance {tolerance:e}; need T_final >= {required_t:.0}")]
    Truncation {
        estimate: f64,
        tolerance: f64,
        required_t: f64,
    },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("config error in `{key}` (line {line}): {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("bad snapshot file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
