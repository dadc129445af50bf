use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nuclear spin projection must be -1, 0 or +1, got {0}")]
    InvalidNuclearSpin(i32),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix must be square and at most {max}x{max}, got {rows}x{cols}")]
    BadDimension { rows: usize, cols: usize, max: usize },

    #[error("frequency grid is empty")]
    EmptyGrid,

    #[error("grid must be strictly ascending")]
    GridNotAscending,

    #[error("invalid range [{min}, {max}] with {count} points")]
    InvalidRange { min: f64, max: f64, count: usize },

    #[error("unknown transition label `{0}`")]
    UnknownTransition(String),

    #[error("drive at {drive_hz} Hz is not resonant with the target transition at {line_hz} Hz")]
    NotResonant { drive_hz: f64, line_hz: f64 },

    #[error("fewer minima than requested: found {found}, requested {requested}")]
    TooFewMinima { found: usize, requested: usize },

    #[error("initial peak centers coincide")]
    DegenerateInit,

    #[error("peak count must be within 1..=8, got {0}")]
    InvalidPeakCount(usize),

    #[error("spectrum has {points} points, at least {required} needed for {peaks} peaks")]
    TooFewPoints {
        points: usize,
        required: usize,
        peaks: usize,
    },

    #[error("under-determined inversion: {centers} centers for {free} free parameters")]
    UnderDetermined { centers: usize, free: usize },

    #[error("missing member of the {0} pair")]
    MissingPairMember(&'static str),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("malformed spectrum file at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
