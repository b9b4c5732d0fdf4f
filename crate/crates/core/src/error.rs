//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Mesh construction or validation failed (bad indices, inverted or
    /// degenerate elements, orphan nodes, ...).
    #[error("mesh error: {0}")]
    Mesh(String),

    /// The eikonal solver converged with nodes still unreached from the
    /// root set (disconnected mesh or empty roots).
    #[error("{} node(s) unreachable from the root set (first: {:?})", .nodes.len(), .nodes.iter().take(8).collect::<Vec<_>>())]
    Unreachable { nodes: Vec<usize> },

    /// The stimulated cell never produced an action potential.
    #[error("no action potential elicited: {0}")]
    FailedExcitation(String),

    /// A trace ended before the requested repolarisation level was reached.
    #[error("trace never repolarised to the requested level: {0}")]
    NotRepolarised(String),

    /// Lookup-table construction could not bracket an APD target.
    #[error("APD target {apd} ms not bracketable by the tau_close sweep [{lo}, {hi}] ms")]
    Unbracketable { apd: i32, lo: f64, hi: f64 },

    /// A trace failed the biomarker plausibility filter. `apd` carries the
    /// lookup-table target when the failure occurred during table building.
    #[error("plausibility filter rejected trace{}: {which} = {value:.3} outside [{lo}, {hi}]", .apd.map(|a| format!(" for APD {a}")).unwrap_or_default())]
    Calibration {
        apd: Option<i32>,
        which: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A node's assigned APD has no row in the lookup table.
    #[error("node {node}: APD {apd} ms outside the lookup table range [{lo}, {hi}]")]
    ApdOutsideTable { node: usize, apd: i32, lo: i32, hi: i32 },

    /// An interchange file failed structural validation.
    #[error("bad file format in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
