use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("state diverged at t = {t} s (reduce the integration step)")]
    Unstable { t: f64 },

    #[error("inertia matrix is not invertible")]
    SingularInertia,

    #[error("joint {joint}: torsion-torque slope {slope} is not positive, hysteresis map is not invertible")]
    NotInvertible { joint: usize, slope: f64 },

    #[error("degenerate polynomial: {0}")]
    DegeneratePolynomial(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
