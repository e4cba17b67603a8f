use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("site count mismatch: {0} vs {1}")]
    SiteMismatch(usize, usize),
    #[error("site {site} out of range for n = {n}")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("digit {0} is not in {{0,1,2,3}}")]
    InvalidDigit(u8),
    #[error("index_insert at site {0}: digit is already nonzero")]
    OccupiedSite(usize),
    #[error("too many sites: {0} (max {max})", max = crate::pauli::MAX_SITES)]
    TooManySites(usize),
    #[error("matrix dimension {dim} does not match n = {n}")]
    Dimension { dim: usize, n: usize },
    #[error("dense operations are capped at n = {cap}, got {n}")]
    DenseCap { n: usize, cap: usize },
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("enumeration of 2^{n} subsets exceeds cap 2^{cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("unknown check id: {0}")]
    UnknownCheck(String),
    #[error("no finite ratio for {0}: every record was skipped or degenerate")]
    EmptyEnsemble(String),
    #[error("check {check} failed on {instance}: {message}")]
    CheckFailed {
        check: String,
        instance: String,
        message: String,
    },
    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
