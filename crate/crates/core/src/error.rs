//! Error taxonomy shared by every module.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-contract parameter.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A sample point fell outside the ambient domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A coefficient field violated positivity or finiteness.
    #[error("coefficient error: {0}")]
    Coefficient(String),
    /// A conformal metric produced a non-finite or non-positive sample.
    #[error("metric error: {0}")]
    Metric(String),
    /// Geodesic shooting or a geometric scan failed.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// An iterative linear or nonlinear solve did not converge.
    #[error("solver error: {0}")]
    Solver(String),
    /// A requested export would overflow or is otherwise unrepresentable.
    #[error("export error: {0}")]
    Export(String),
    /// File input/output failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// A text artifact failed to parse.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn coefficient(msg: impl Into<String>) -> Self {
        Error::Coefficient(msg.into())
    }
    pub fn metric(msg: impl Into<String>) -> Self {
        Error::Metric(msg.into())
    }
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
    pub fn export(msg: impl Into<String>) -> Self {
        Error::Export(msg.into())
    }
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
