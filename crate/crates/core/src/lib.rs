//! Link-level simulation of TDD (distributed) massive MIMO with explicit
//! TX/RX chain modeling, LO phase noise and reciprocity calibration.

pub mod calibration;
pub mod channel_model;
pub mod config;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod hw_model;
pub mod phase_noise;
pub mod precoding;
pub mod rng;
pub mod signal_oracle;

pub use error::{Error, Result};

/// Dense complex matrix; channel matrices are `n_ue x n_trx`.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
