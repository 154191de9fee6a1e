use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate domain: {phase} length {length:.3e} m is below s_min = {s_min:.3e} m")]
    DegenerateDomain {
        phase: &'static str,
        length: f64,
        s_min: f64,
    },

    #[error("position x = {x} m is outside [0, {length}] m")]
    Domain { x: f64, length: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("resample error: {0}")]
    Resample(String),

    #[error("degenerate gain: {0}")]
    DegenerateGain(String),

    #[error("gain error: {0}")]
    Gain(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("step size fell below dt_min = {dt_min:.3e} s at t = {t:.6e} s (last error estimate {err:.3e})")]
    Stiffness { t: f64, dt_min: f64, err: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
