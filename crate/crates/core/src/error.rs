use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("function is undefined (NaN) at eigenvalue {eigenvalue}")]
    UndefinedFunction { eigenvalue: f64 },

    #[error("{0} is not a dyadic integer")]
    NotDyadic(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distorted Sobolev norm with s = {s} < 0 is undefined when negative eigenvalues exist")]
    NegativeSobolevIndex { s: f64 },

    #[error("resolvent blow-up: energy {energy} is within {tolerance} of eigenvalue {nearest}")]
    ResolventBlowUp {
        energy: f64,
        nearest: f64,
        tolerance: f64,
    },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("transform route unavailable: {0}")]
    RouteUnavailable(String),

    #[error("mass leakage {leaked:.3e} exceeds threshold; increase half_length to at least {suggested_half_length:.1}")]
    MassLeakage {
        leaked: f64,
        suggested_half_length: f64,
    },

    #[error("randomization partition does not cover the spectral support of the datum")]
    EmptyPartition,

    #[error("tail region is empty; rescale the lambda grid by about {suggested_scale:.3e}")]
    EmptyTailRegion { suggested_scale: f64 },

    #[error("{what} did not converge (last residual {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("|z| = {modulus} is outside the branch range [0, {radius}]")]
    BranchRange { modulus: f64, radius: f64 },

    #[error("pair (q, r) = ({q}, {r}) violates 2/q + d/r = d/2 with d = {d}")]
    Inadmissible { q: f64, r: f64, d: usize },

    #[error("zero denominator in {0}")]
    ZeroDenominator(String),

    #[error("modulation matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("numerical blow-up; last valid time {last_time}")]
    BlowUp { last_time: f64 },

    #[error("path is not a right-continuous step path starting at zero: {0}")]
    NotStepPath(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("integrity error: {0}")]
    Integrity(String),
}

impl LabError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
