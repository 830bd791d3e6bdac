use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("curve y^2 = x^3 + {a}x + {b} is singular mod {p}")]
    SingularCurve { a: u64, b: u64, p: u64 },
    #[error("modulus {0} is not a prime >= 5")]
    CompositeModulus(u64),
    #[error("family has constant j-invariant")]
    ConstantJInvariant,
    #[error("expected arity {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("histograms over different primes: {0} and {1}")]
    MixedPrimes(u64, u64),
    #[error("scale factor at component {0} is zero")]
    ZeroScale(usize),
    #[error("periodization tail {tail:e} exceeds budget {budget:e}")]
    TruncationBudgetExceeded { tail: f64, budget: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degree box mismatch: table covers {table:?}, bound needs {needed:?}")]
    DegreeBoxMismatch { table: Vec<usize>, needed: Vec<usize> },
    #[error("dimension {got} exceeds the supported maximum {max}")]
    DimensionTooLarge { got: usize, max: usize },
    #[error("certificate violated: gap {gap} > bound {bound}")]
    CertificateViolation { gap: f64, bound: f64 },
    #[error("level set of component {0} is infinite")]
    InfiniteLevelSet(usize),
    #[error("target interval leaves no room for the staircase")]
    InfeasibleTarget,
    #[error("weight {0} is odd")]
    OddWeight(u32),
    #[error("weight {0} is below 12")]
    WeightTooSmall(u32),
    #[error("recovered root {0} lies outside [-2, 2]")]
    RootOutOfRange(f64),
    #[error("space of weight {0} is empty")]
    EmptySpace(u32),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
