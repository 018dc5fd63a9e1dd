use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),
    #[error("only the trivial branch was found: {0}")]
    Branch(String),
    #[error("step rejected {halvings} times at t = {time}")]
    Stability { time: f64, halvings: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
