//! Over-the-air relative reciprocity calibration and the UE reciprocity factor.
//!
//! Relative calibration scales each TRX's UL estimate by
//! `c_i = r_ref t_i / (t_ref r_i)` so that DL signals of a cluster add up
//! coherently, up to a phase common to all TRXs. The factor contains the LO
//! phases, so it goes stale as soon as LO phases drift apart.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hw_model::{rx_transfer, tx_transfer, FrequencyGrid, SignModel, TrxChain};
use crate::rng::complex_normal;
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Use UL estimates as DL estimates directly.
    None,
    /// Relative calibration against TRX 0 of each cluster.
    Relative,
    /// Relative calibration plus the per-UE factor `gamma_UE`.
    Perfect,
}

impl CalibrationMode {
    pub fn label(self) -> &'static str {
        match self {
            CalibrationMode::None => "none",
            CalibrationMode::Relative => "relative",
            CalibrationMode::Perfect => "perfect",
        }
    }
}

/// Where and how calibration signals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub grid: FrequencyGrid,
    pub subcarrier: i64,
    pub model: SignModel,
    pub noise_std: f64,
    /// Minimum usable `|y_{2,1}|`.
    pub floor: f64,
}

impl Measurement {
    pub fn flat(model: SignModel) -> Self {
        Measurement {
            grid: FrequencyGrid::flat(),
            subcarrier: 0,
            model,
            noise_std: 0.0,
            floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    /// Relative factor per TRX; the reference TRX holds exactly 1.
    pub c: Vec<Complex64>,
    /// Per-UE factor, present in perfect-calibration mode.
    pub gamma_ue: Option<Vec<Complex64>>,
    /// Time index of the calibration event.
    pub captured_at: u64,
    /// OTA calibration slots spent on this event.
    pub ota_slots: u64,
}

impl CalibrationState {
    /// Unit factors, no OTA cost.
    pub fn identity(n_trx: usize, captured_at: u64) -> Self {
        CalibrationState {
            c: vec![Complex64::new(1.0, 0.0); n_trx],
            gamma_ue: None,
            captured_at,
            ota_slots: 0,
        }
    }

    pub fn staleness(&self, n: u64) -> Result<u64> {
        n.checked_sub(self.captured_at).ok_or_else(|| {
            Error::Config(format!(
                "time {n} precedes calibration capture at {}",
                self.captured_at
            ))
        })
    }
}

/// Bidirectional OTA measurement between the reference TRX and `other`.
///
/// Slot 1: reference transmits, `y21 = r_other H0 t_ref + w1`.
/// Slot 2: `other` transmits, `y12 = r_ref H0 t_other + w2`.
/// Returns `y12 / y21`. Both slots see the same chain state.
pub fn measure_relative_factor<R: Rng + ?Sized>(
    reference: &TrxChain,
    other: &TrxChain,
    h0: Complex64,
    meas: &Measurement,
    rng: &mut R,
) -> Result<Complex64> {
    let (grid, l, model) = (&meas.grid, meas.subcarrier, meas.model);
    let mut noise = || {
        if meas.noise_std > 0.0 {
            complex_normal(rng, meas.noise_std)
        } else {
            Complex64::default()
        }
    };
    let y21 = rx_transfer(other, grid, l, model)? * h0 * tx_transfer(reference, grid, l, model)?
        + noise();
    let y12 = rx_transfer(reference, grid, l, model)? * h0 * tx_transfer(other, grid, l, model)?
        + noise();
    if !(y21.norm() >= meas.floor) {
        return Err(Error::CalibrationMeasurement {
            trx: 0,
            magnitude: y21.norm(),
            floor: meas.floor,
        });
    }
    Ok(y12 / y21)
}

/// Calibrate every TRX of one cluster against its TRX 0.
///
/// `h_trp` is the cluster's TRX-to-TRX channel matrix in local indices.
/// Each non-reference TRX costs two OTA slots.
pub fn calibrate_cluster<R: Rng + ?Sized>(
    chains: &[TrxChain],
    h_trp: &CMatrix,
    meas: &Measurement,
    captured_at: u64,
    rng: &mut R,
) -> Result<CalibrationState> {
    let n = chains.len();
    if n == 0 {
        return Err(Error::Config("cannot calibrate an empty cluster".into()));
    }
    if h_trp.nrows() < n || h_trp.ncols() < n {
        return Err(Error::Dimension(format!(
            "calibration channel {:?} for {n} TRXs",
            h_trp.shape()
        )));
    }
    let mut c = Vec::with_capacity(n);
    c.push(Complex64::new(1.0, 0.0));
    for (i, chain) in chains.iter().enumerate().skip(1) {
        let factor =
            measure_relative_factor(&chains[0], chain, h_trp[(0, i)], meas, rng).map_err(|e| {
                match e {
                    Error::CalibrationMeasurement {
                        magnitude, floor, ..
                    } => Error::CalibrationMeasurement {
                        trx: i,
                        magnitude,
                        floor,
                    },
                    other => other,
                }
            })?;
        c.push(factor);
    }
    Ok(CalibrationState {
        c,
        gamma_ue: None,
        captured_at,
        ota_slots: 2 * (n as u64 - 1),
    })
}

/// Scale column `i` of an `n_ue x n_trx` UL estimate by `c[i]`.
pub fn apply_calibration(h_ul_est: &CMatrix, c: &[Complex64]) -> Result<CMatrix> {
    if h_ul_est.ncols() != c.len() {
        return Err(Error::Dimension(format!(
            "{} TRX columns, {} calibration factors",
            h_ul_est.ncols(),
            c.len()
        )));
    }
    let mut out = h_ul_est.clone();
    for (mut col, &ci) in out.column_iter_mut().zip(c) {
        col *= ci;
    }
    Ok(out)
}

/// `gamma_UE = t_ref r_UE / (r_ref t_UE)`.
pub fn ue_reciprocity_factor(
    reference: &TrxChain,
    ue: &TrxChain,
    grid: &FrequencyGrid,
    l: i64,
    model: SignModel,
) -> Result<Complex64> {
    let num = tx_transfer(reference, grid, l, model)? * rx_transfer(ue, grid, l, model)?;
    let den = rx_transfer(reference, grid, l, model)? * tx_transfer(ue, grid, l, model)?;
    Ok(num / den)
}
