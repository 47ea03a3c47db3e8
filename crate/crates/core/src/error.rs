use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate field: every sample is zero")]
    DegenerateField,

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("stability guard violated: dt = {dt:e} exceeds limit {limit:e}")]
    Stability { dt: f64, limit: f64 },

    #[error("blow-up at step {step} (t = {time}): {reason}")]
    BlowUp {
        step: usize,
        time: f64,
        reason: String,
    },

    #[error("at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<LabError>,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("plane wave is not a solution: shape deviation {deviation:e}")]
    NotASolution { deviation: f64 },

    #[error("wavenumber index q = {q} aliases on a grid of {n} points (need |q| < n/2)")]
    Aliasing { q: i64, n: usize },

    #[error("phase unwrap failed between nodes {node} and {next}: jump {jump:.6} rad")]
    PhaseUnwrap { node: usize, next: usize, jump: f64 },

    #[error("rank-deficient normal equations (damping history {damping_history:?})")]
    RankDeficient { damping_history: Vec<f64> },

    #[error("domain too small: profile tail {tail:e} at the boundary")]
    DomainTooSmall { tail: f64 },
}
