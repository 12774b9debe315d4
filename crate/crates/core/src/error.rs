use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {what} is {got}, limit is {limit}")]
    Capacity { what: &'static str, got: usize, limit: usize },

    #[error("cluster table {cluster} is not normalized (sum = {sum})")]
    Unnormalized { cluster: usize, sum: f64 },

    #[error("SDP solver did not converge: {0}")]
    NotConverged(crate::partition::SolverReport),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
