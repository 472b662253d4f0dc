use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero temperature: inverse temperature is infinite, use the ground state")]
    ZeroTemperature,

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("integrator did not converge within {steps} steps (last difference {difference:e})")]
    NonConvergence { steps: usize, difference: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("probability deficit {deficit:e} exceeds tolerance {tol:e}")]
    Deficit { deficit: f64, tol: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::BasisMismatch(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
