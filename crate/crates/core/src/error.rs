use thiserror::Error;

pub type Result<T> = std::result::Result<T, SolverError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input profile is (numerically) zero.
    #[error("zero input profile (norm {norm:e})")]
    ZeroInput { norm: f64 },

    /// The fibering derivative never became negative before the bracket cap.
    #[error("fibering map has no sign change for t <= {t_max:e}")]
    NoSignChange { t_max: f64 },

    #[error("annulus ({rho}, {sigma}) spans fewer than {min_elements} grid elements")]
    DegenerateAnnulus {
        rho: f64,
        sigma: f64,
        min_elements: usize,
    },

    #[error("iteration cap {cap} reached (last residual {residual:e})")]
    MaxIterations { cap: usize, residual: f64 },

    #[error("piece {piece} violates the alternating sign pattern")]
    SignPatternViolation { piece: usize },

    #[error("node gap collapsed below {min_gap} (gaps: {gaps:?})")]
    CollapseDetected { min_gap: f64, gaps: Vec<f64> },

    #[error("every nodal value is below the counting threshold")]
    AllBelowThreshold,

    #[error("integrator step underflow at r = {radius}")]
    StepFailure { radius: f64 },

    #[error("bracket [{a_lo}, {a_hi}] does not straddle k = {k} (node counts {n_lo}, {n_hi})")]
    BracketInvalid {
        a_lo: f64,
        a_hi: f64,
        k: usize,
        n_lo: usize,
        n_hi: usize,
    },

    #[error("no amplitude in the bracket produced a decaying {k}-node profile")]
    NoDecay { k: usize },
}
