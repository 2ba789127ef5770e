use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subcarrier index {index} outside [{min}, {max}]")]
    SubcarrierIndex { index: i64, min: i64, max: i64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "calibration measurement failed for TRX {trx}: |y| = {magnitude:e} below floor {floor:e}"
    )]
    CalibrationMeasurement {
        trx: usize,
        magnitude: f64,
        floor: f64,
    },

    #[error(
        "zero-forcing failed for UEs {ues:?}: condition number {condition:e} exceeds {limit:e}"
    )]
    Precoding {
        ues: Vec<usize>,
        condition: f64,
        limit: f64,
    },

    #[error("detection failed for UE {ue}: effective channel estimate is zero")]
    Detection { ue: usize },

    #[error("trial {trial}, step {step}: {source}")]
    Step {
        trial: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, trial: usize, step: usize) -> Self {
        Error::Step {
            trial,
            step,
            source: Box::new(self),
        }
    }
}
