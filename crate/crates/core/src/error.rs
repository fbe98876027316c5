use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("atom index {index} out of range for a dictionary with {n_atoms} atoms")]
    IndexOutOfRange { index: usize, n_atoms: usize },

    #[error("reference matrix has zero energy")]
    ZeroReference,

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("malformed dictionary file: {0}")]
    Format(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("dictionary file {} not found; run `bdl train --config <CONFIG>` first", path.display())]
    MissingDictionary { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
