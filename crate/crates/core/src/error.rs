use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("quadrature did not converge on [{a}, {b}] after {evals} evaluations")]
    NonConvergence { a: f64, b: f64, evals: usize },

    #[error("spectral measure has infinite total mass ({0})")]
    InfiniteMass(String),

    #[error("requested the {0} part of a spectrum with zero mass")]
    ZeroMass(&'static str),

    #[error("CDF tabulation failed: {0}")]
    Tabulation(String),

    #[error("input is off the unit sphere (norm {0})")]
    OffSphere(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel is indefinite (negative mass {0}); use the generalized builders")]
    Indefinite(f64),

    #[error("kernel has a negative Maclaurin coefficient at degree {0}")]
    NegativeCoefficient(usize),

    #[error("incompatible method and kernel: {0}")]
    Incompatible(String),

    #[error("invalid configuration: {0}")]
    Spec(String),

    #[error("experiment run failed: {0}")]
    Experiment(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("bad dataset: {0}")]
    Data(String),

    #[error("solver did not converge after {0} iterations")]
    SolverBudget(usize),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// Process exit code used by the command-line tool: 2 for data
    /// problems, 3 for numerical failures, 1 for everything that is a
    /// usage mistake.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Data(_) | Error::Io(_) | Error::OffSphere(_) => 2,
            Error::RankDeficient { .. }
            | Error::NonConvergence { .. }
            | Error::InfiniteMass(_)
            | Error::Tabulation(_)
            | Error::SolverBudget(_)
            | Error::ZeroDenominator(_)
            | Error::Experiment(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
