//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: domain error at value {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("backward root must be 1x1, got {shape:?}")]
    NonScalarRoot { shape: (usize, usize) },
    #[error("tensor of shape {rows}x{cols} cannot hold {len} values")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("node {index} out of bounds for graph of {len} nodes")]
    BadNode { index: usize, len: usize },
    #[error("{op}: expected {expected} parents, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error)]
pub enum QuantileError {
    #[error("discrete distribution needs at least one atom")]
    EmptyAtoms,
    #[error("atom values must be strictly increasing")]
    AtomsNotSorted,
    #[error("atom probabilities must be non-negative")]
    NegativeProb,
    #[error("atom probabilities sum to {sum}, expected 1 within 1e-12")]
    ProbsNotNormalized { sum: f64 },
    #[error("support must satisfy lo < hi, got [{lo}, {hi}]")]
    BadSupport { lo: f64, hi: f64 },
    #[error("density integrates to {mass}, expected 1 within 1e-6")]
    NotNormalized { mass: f64 },
    #[error("density must be strictly positive on its support; p({x}) = {p}")]
    NonPositiveDensity { x: f64, p: f64 },
    #[error("grid resolution must be at least 2, got {0}")]
    BadGrid(usize),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("need at least 2 columns for a 2-D projection, got {0}")]
    TooFewCols(usize),
    #[error("data has zero variance (all rows identical)")]
    RankZero,
    #[error("sample set is empty")]
    EmptySamples,
    #[error("probability vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("probability vector entry {value} is negative")]
    NegativeEntry { value: f64 },
    #[error("probability vector sums to {sum}, expected 1 within 1e-9")]
    NotNormalized { sum: f64 },
    #[error("histogram bins must be at least 2, got {0}")]
    BadBins(usize),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("latent dim {d} must not exceed output dim {big_d}")]
    BadDims { d: usize, big_d: usize },
    #[error("sample count must be positive")]
    EmptySample,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("non-finite {quantity} at iteration {iteration}; run aborted")]
    NonFinite { quantity: String, iteration: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
