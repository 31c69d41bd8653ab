use thiserror::Error;

/// Errors produced by model construction, fitting, and the experiment harness.
#[derive(Error, Debug)]
pub enum Error {
    /// Dataset failed validation (dimension mismatch, empty group, bad values).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The penalized system could not be factorized even after jitter
    /// escalation; the problem is numerically singular at this penalty.
    #[error("linear system is numerically singular (n = {n}, lambda = {lambda:.3e})")]
    Singular { n: usize, lambda: f64 },

    /// A per-group failure, annotated with the offending group index.
    #[error("in group {group}: {source}")]
    InGroup { group: usize, source: Box<Error> },

    /// I/O failure while reading input or writing reports.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps the error with the index of the group it occurred in.
    pub fn in_group(self, group: usize) -> Error {
        Error::InGroup { group, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
