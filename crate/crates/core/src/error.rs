//! Error type shared by every module in this crate.

use crate::tree::NodeId;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by this crate.
///
/// Variants are grouped by how a caller should react:
/// [`Error::Io`], [`Error::Parse`] and [`Error::Json`] indicate bad input
/// files, [`Error::Structural`] and [`Error::Domain`] indicate arguments that
/// violate a documented precondition, and [`Error::Inversion`],
/// [`Error::NotAMeasure`] and [`Error::Numeric`] indicate that a computation
/// could not be completed in floating point.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying file I/O failed.
    ///
    /// Display shows only the path; the cause is reachable through
    /// `source()` so chain printers do not repeat it.
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A text input (CSV) could not be parsed; reports file and line.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A JSON document could not be read or written.
    #[error("{context}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    /// A tree or index argument is malformed (cycle, orphan node,
    /// out-of-range id, mismatched tree, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument violates a documented numeric precondition
    /// (negative weight, unnormalized simplex vector, empty input, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An edge vector cannot be pulled back to a measure because a
    /// zero-length edge carries nonzero mass.
    #[error("inverse mapping failed: zero-length edge {edge} carries mass {mass:.3e}")]
    Inversion { edge: usize, mass: f64 },

    /// Pulling an edge vector back produced a vector that is not a
    /// probability measure (a node mass below -1e-9, or total mass far
    /// from one).
    #[error("inverse mapping is not a measure: node {node:?} has mass {mass:.6e}")]
    NotAMeasure { node: NodeId, mass: f64 },

    /// An iterative numeric routine broke down (underflow, divergence).
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl Error {
    /// Shorthand for [`Error::Structural`] with a formatted message.
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    /// Shorthand for [`Error::Domain`] with a formatted message.
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
