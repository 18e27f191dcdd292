use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the module that raises them; callers
/// usually only match on a handful (the CLI prints them verbatim).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("attribute `{0}` is carried by no annotated token")]
    EmptyTask(String),
    #[error("class `{0}` has no rows")]
    EmptyClass(String),
    #[error("synth spec error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Spec {
        line: Option<usize>,
        message: String,
    },

    #[error("task needs at least two labels, found {0}")]
    DegenerateTask(usize),
    #[error("neuron subset is empty")]
    EmptySubset,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("neuron index {index} out of range for {dims} dims")]
    Index { index: usize, dims: usize },
    #[error("duplicate neuron index {0} in subset")]
    DuplicateIndex(usize),
    #[error("class `{class}` has {rows} rows, at least {needed} required")]
    InsufficientData {
        class: String,
        rows: usize,
        needed: usize,
    },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("probe was trained on {subset} of {dims} neurons; ranking needs the full set")]
    SubsetMismatch { subset: usize, dims: usize },
    #[error("label sets differ between datasets")]
    LabelMismatch,

    #[error("k grids differ")]
    GridMismatch,
    #[error("all paired differences are zero")]
    NoEffect,
    #[error("sample lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cluster error: {0}")]
    Cluster(String),

    #[error("value out of range: {0}")]
    Range(String),
    #[error("source and target value are both `{0}`")]
    SameValue(String),
    #[error("token `{0}` is missing from the lexicon")]
    Lexicon(String),

    #[error("dimension mismatch ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("n = {n} exceeds the exact-arithmetic cap of {cap}; use the closed form")]
    Budget { n: usize, cap: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn spec(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Spec {
            line,
            message: message.into(),
        }
    }
}
