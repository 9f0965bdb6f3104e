use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive semi-definite ({what}): smallest eigenvalue {min_eig:e}")]
    NotPsd { what: String, min_eig: f64 },

    #[error("covariance lost positive semi-definiteness at t = {t} (smallest eigenvalue {min_eig:e}); reduce the step size")]
    PsdLoss { t: f64, min_eig: f64 },

    #[error("time {t} is not covered by the matrix path [{start}, {end}]")]
    PathCoverage { t: f64, start: f64, end: f64 },

    #[error("time {0} does not lie on a grid node")]
    OffGrid(f64),

    #[error("degenerate explicit Riccati solution: {0}")]
    Degenerate(String),

    #[error("algebraic Riccati solve did not converge after {iterations} iterations; residual history {history:?}")]
    AreNonConvergence { iterations: usize, history: Vec<f64> },

    #[error("ensemble covariance collapsed (smallest eigenvalue {min_eig:e}, trace {trace:e}); inverse gain term undefined")]
    Collapse { min_eig: f64, trace: f64 },

    #[error("noise stream desynchronized: {0}")]
    Desync(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("refusing to overwrite {dir} (config hash {existing} differs from {requested}); pass --force")]
    Overwrite {
        dir: String,
        existing: String,
        requested: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
