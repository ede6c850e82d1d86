use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum PcfError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} = {value} out of range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("enhancement mismatch: triple built on {expected:#018x}, got {found:#018x}")]
    EnhancementMismatch { expected: u64, found: u64 },

    #[error("no admissible localization below j_max (best realized norm {best_norm:.4})")]
    NoAdmissibleThreshold { best_norm: f64 },

    #[error("{what} did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("line search failed at iteration {iteration}: step below {min_step:e}")]
    LineSearch { iteration: usize, min_step: f64 },

    #[error("energy diverged below {0:e}")]
    Divergence(f64),

    #[error("config error at line {line}, column {col}: {msg}")]
    ConfigParse { line: usize, col: usize, msg: String },

    #[error("config value {key} invalid: {msg}")]
    ConfigValue { key: String, msg: String },

    #[error("bad field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PcfError {
    /// True for errors caused by numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PcfError::NonConvergence { .. }
                | PcfError::LineSearch { .. }
                | PcfError::Divergence(_)
                | PcfError::NoAdmissibleThreshold { .. }
        )
    }
}

pub type Result<T, E = PcfError> = std::result::Result<T, E>;
