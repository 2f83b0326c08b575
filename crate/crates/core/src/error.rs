use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not a RIFF/WAVE file: {0}")]
    NotWav(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated WAV data: declared {declared} bytes, found {found}")]
    TruncatedData { declared: usize, found: usize },
    #[error("upsampling requested ({source_rate} Hz -> {target_rate} Hz)")]
    UpsampleRequested { source_rate: u32, target_rate: u32 },
    #[error("empty input")]
    EmptyInput,
    #[error("input is silent (rms {0:e}), cannot normalize")]
    SilentInput(f64),
    #[error("input of {len} samples is shorter than one frame of {frame_len}")]
    InputShorterThanFrame { len: usize, frame_len: usize },
    #[error("bad FFT size {fft_size} for frame of {frame_len} samples")]
    BadFftSize { fft_size: usize, frame_len: usize },
    #[error("no frequency bins fall inside [{f_lo}, {f_hi}) Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },
    #[error("mel filters {0} and {1} collapse onto the same FFT bin")]
    DegenerateFilter(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("training data contains a single class")]
    SingleClassDataset,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("too few items: {0}")]
    TooFewItems(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
