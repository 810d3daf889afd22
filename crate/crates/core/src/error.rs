use thiserror::Error;

/// Errors raised by the cache model and its experiment drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("no active banks")]
    NoActiveBanks,

    #[error("invalid bank mask: {0}")]
    Mask(String),

    #[error("bank {bank} of channel {channel} is powered down")]
    BankPoweredDown { channel: usize, bank: usize },

    #[error("row {row} out of range (rows = {rows})")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("invalid tree arity {0}; must be at least 2")]
    Arity(usize),

    #[error("region remap table: {0}")]
    Rrt(String),

    #[error("rrt generation failed for {banks} banks x {super_regions} super-regions after {attempts} attempts (best residual {best_residual}, {unbalanced_pairs} unbalanced successor pairs)")]
    RrtUnsatisfiable {
        banks: usize,
        super_regions: usize,
        attempts: usize,
        best_residual: usize,
        unbalanced_pairs: usize,
    },

    #[error("invalid transition: {0}")]
    Transition(String),

    #[error("invalid workload: {0}")]
    Workload(String),

    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },

    #[error("trace io: {0}")]
    Io(String),

    #[error("invalid power parameters: {0}")]
    Power(String),

    #[error("invalid model input: {0}")]
    Model(String),

    #[error("trace is empty after warmup")]
    EmptyTrace,

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
