use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A requested table or enumeration would exceed the configured budget.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// Input outside the mathematical domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Argument beyond the range covered by the sieved tables.
    #[error("out of range: {0}")]
    Range(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid table cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
