use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error("a meta-analysis needs at least 2 studies, got {0}")]
    TooFewStudies(usize),

    #[error("degenerate 2x2 table: {0}")]
    DegenerateTable(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("{0} is outside the domain {1}")]
    Domain(f64, &'static str),

    #[error("no sign change on [{lo}, {hi}] (f(lo)={flo}, f(hi)={fhi})")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("target {target} unreachable; attainable range is [{lo}, {hi}]")]
    Unreachable { target: f64, lo: f64, hi: f64 },

    #[error("unknown dataset '{0}' (available: corticosteroids, clopidogrel)")]
    UnknownDataset(String),

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("bad model spec '{spec}': {reason}")]
    ModelSpec { spec: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective undefined: row {0} has zero selection mass")]
    ZeroMass(usize),

    #[error("solver did not converge (best feasible value {best}, residual {residual:e})")]
    NotConverged { best: f64, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
