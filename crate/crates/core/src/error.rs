use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("cell index {index} out of range (mesh has {n_cells} cells)")]
    CellOutOfRange { index: usize, n_cells: usize },

    #[error("interface {index} is not an interior interface (valid range 1..={max})")]
    NotInteriorInterface { index: usize, max: usize },

    #[error("derivative order {0} not supported (max 2)")]
    DerivativeOrder(usize),

    #[error("field/mesh mismatch: {0}")]
    Mismatch(String),

    #[error("unknown example {id}{}", variant.as_ref().map(|v| format!(" (variant `{v}`)")).unwrap_or_default())]
    UnknownExample { id: u32, variant: Option<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("nonpositive density {value:e} in cell {cell} at node {node} where H' is singular")]
    NonPositiveDensity { cell: usize, node: usize, value: f64 },

    #[error("negative interface density mean {mean:e} at interface {interface}")]
    NegativeInterfaceMean { interface: usize, mean: f64 },

    #[error("limiter precondition violated: cell averages below delta in cells {cells:?}")]
    AverageBelowDelta { cells: Vec<usize> },

    #[error("negative cell average {average:e} in cell {cell}")]
    NegativeAverage { cell: usize, average: f64 },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("solver abort at t = {t}: {reason}")]
    SolverAbort {
        t: f64,
        reason: String,
        /// Coefficients of the last accepted state, cell-major.
        state: Vec<f64>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
