use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Where in an input file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Location(pub Option<usize>);

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: "),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}{message}")]
    Parse { location: Location, message: String },

    #[error("{location}duplicate edge {src} -> {dst}")]
    DuplicateEdge {
        location: Location,
        src: String,
        dst: String,
    },

    #[error("{location}self-loop on node {node}")]
    SelfLoop { location: Location, node: String },

    #[error("{location}edge weight must be positive and finite, got {weight}")]
    NonPositiveWeight { location: Location, weight: f64 },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("node {0:?} has no entry")]
    MissingNode(String),

    #[error("{location}node {node:?} is not in the graph")]
    UnknownNode { location: Location, node: String },

    #[error("{location}duplicate entry for node {node:?}")]
    DuplicateNode { location: Location, node: String },

    #[error("{location}expected {expected} coordinates, found {found}")]
    DimensionMismatch {
        location: Location,
        expected: usize,
        found: usize,
    },

    #[error("{location}non-finite coordinate for node {node:?}")]
    NonFinite { location: Location, node: String },

    #[error("partition has a single community; the global score is undefined")]
    SingleCommunity,

    #[error("embedding is degenerate: {0}")]
    DegenerateEmbedding(String),

    #[error("distance {d} outside kernel domain [{lo}, {hi}]")]
    DistanceOutOfRange { d: f64, lo: f64, hi: f64 },

    #[error("weight fit did not converge after {iterations} iterations (max relative degree error {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("graph has no non-adjacent ordered pairs to sample")]
    NoNegatives,

    #[error("negative sampling gave up after {attempts} attempts")]
    NegativeSamplingExhausted { attempts: usize },

    #[error("ensemble size must be at least 2, got {0}")]
    EnsembleTooSmall(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("every alpha value failed to fit ({0} attempts)")]
    AllFitsFailed(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: Location(Some(line)),
            message: message.into(),
        }
    }
}
