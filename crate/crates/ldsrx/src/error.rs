use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("codebook generation failed after {attempts} attempts (seed {seed})")]
    Generation { seed: u64, attempts: usize },
    #[error("malformed codebook file, line {line}: {reason}")]
    CodebookFormat { line: usize, reason: String },
    #[error("non-finite {what} at outer iteration {outer}, index {index}")]
    NonFinite {
        what: &'static str,
        outer: usize,
        index: usize,
    },
    #[error("trial {trial} at {snr_db} dB: {source}")]
    Trial {
        trial: u64,
        snr_db: f64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
