use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Thrust direction undefined because the specific force vanishes.
    #[error("free-fall singularity: |a + g e3| = {0:e}")]
    FreeFallSingularity(f64),

    /// Horizontal speed too small to define a heading; callers hold the last yaw.
    #[error("yaw undefined: horizontal speed {0:e} m/s below threshold")]
    YawUndefined(f64),

    /// Camera geometry outside the region where gimbal angles are defined.
    #[error("singular gimbal geometry: {0}")]
    GimbalSingular(String),

    #[error("shot complete: elapsed {elapsed} s exceeds duration {duration} s")]
    ShotComplete { elapsed: f64, duration: f64 },

    #[error("problem build error: {0}")]
    Build(String),

    #[error("metrics undefined: {0}")]
    MetricsUndefined(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("io error: {0}")]
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
