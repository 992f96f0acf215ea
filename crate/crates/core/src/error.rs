use std::path::PathBuf;

/// Errors produced anywhere in the simulation, identification, and control pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Pitch is too close to ±90° for the Euler-rate matrix to be inverted.
    #[error("singular attitude: pitch {pitch} rad is within {margin} rad of ±π/2")]
    SingularAttitude { pitch: f64, margin: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation diverged at t = {time} s (state norm {norm:.3e})")]
    DivergedSimulation { time: f64, norm: f64 },

    #[error("too few samples: {rows} rows, at least {required} required")]
    TooFewSamples { rows: usize, required: usize },

    #[error("snapshot timestamps are not uniformly spaced (row {row})")]
    NonUniformSampling { row: usize },

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    /// The active library lost column rank while fitting output column `output`.
    #[error("rank-deficient library for output `{output}`: dependent terms {terms:?}")]
    RankDeficient { output: String, terms: Vec<String> },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The initial state already violates an obstacle by more than half its keep-out radius.
    #[error("infeasible start: obstacle margin {margin:.4} m (keep-out radius {radius} m)")]
    InfeasibleStart { margin: f64, radius: f64 },

    #[error("configuration error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 configuration error, 3 data error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) => 2,
            Error::TooFewSamples { .. }
            | Error::NonUniformSampling { .. }
            | Error::UnknownChannel(_)
            | Error::ShapeMismatch(_)
            | Error::Data { .. }
            | Error::Io { .. } => 3,
            Error::SingularAttitude { .. }
            | Error::DivergedSimulation { .. }
            | Error::RankDeficient { .. }
            | Error::InfeasibleStart { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
