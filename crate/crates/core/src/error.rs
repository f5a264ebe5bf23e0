use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("model is unstable: rho = {rho:.6} (must be < 1)")]
    Unstable { rho: f64 },

    #[error("phase-type transition matrix is not absorbing (spectral radius {0:.6} >= 1)")]
    NonAbsorbing(f64),

    #[error("multiple vacations of type {0} never see an arrival; the vacation loop diverges")]
    DivergentVacation(usize),

    #[error("expected {expected} roots inside the unit disk, found {found}; moduli: {moduli:?}")]
    RootCount {
        expected: usize,
        found: usize,
        moduli: Vec<f64>,
    },

    #[error(
        "root {0:.3e} lies within {1:.1e} of the unit circle; perturb the parameters slightly"
    )]
    NearUnitRoot(f64, f64),

    #[error("boundary system is ill-conditioned (condition number {0:.3e})")]
    Conditioning(f64),

    #[error("{what} = {value:.3e} is negative beyond tolerance; cross-check with the truncated-chain engine")]
    Negative { what: String, value: f64 },

    #[error("truncation at N = {n} leaves boundary mass {mass:.3e}; try N >= {suggested}")]
    Truncation {
        n: usize,
        mass: f64,
        suggested: usize,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::NonAbsorbing(_) => 2,
            Error::Unstable { .. } | Error::DivergentVacation(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
