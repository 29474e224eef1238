use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: pixel ({x}, {y}) outside {width}x{height} sensor")]
    OutOfGeometry {
        line: usize,
        x: i64,
        y: i64,
        width: u16,
        height: u16,
    },

    #[error("line {line}: timestamp must be finite and non-negative")]
    InvalidTimestamp { line: usize },

    #[error("invalid time range: t0 = {t0} > t1 = {t1}")]
    InvalidRange { t0: f64, t1: f64 },

    #[error("window is empty")]
    EmptyWindow,

    #[error("window needs at least 2 events, got {0}")]
    TooFewEvents(usize),

    #[error("window spans zero time, velocity is unidentifiable")]
    ZeroTimeSpan,

    #[error("history is not sorted by time")]
    UnsortedHistory,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("intensity exceeds the simulable range at t = {0}")]
    IntensityOverflow(f64),

    #[error("simulation exceeded {0} events")]
    Runaway(usize),

    #[error("sensor geometry too small: {0}")]
    GeometryTooSmall(String),

    #[error("need at least 3 trajectories, got {0}")]
    TooFewTrajectories(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
