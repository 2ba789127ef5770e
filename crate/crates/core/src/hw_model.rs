//! Transceiver chain model and UL/DL channel composition.
//!
//! Each TRX is described by its common LO phase `phi` and timing offset
//! `tau`, the per-chain offsets derived from them, and the LF/RF filter
//! responses sampled on the subcarrier grid. The LO enters the TX chain as
//! `e^{+j phi}` and the RX chain as `e^{-j phi}`; [`SignModel::Inaccurate`]
//! reproduces the common mistake of using `e^{+j phi}` on both sides.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// OFDM subcarrier grid.
///
/// Subcarrier `l` sits at baseband frequency `l * spacing`, for `l` in
/// `-L/2 ..= L/2 - 1`. A single-subcarrier grid (`L = 1`) holds only `l = 0`
/// and is used for flat-channel simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    spacing: f64,
    n_subcarriers: usize,
    carrier: f64,
}

impl FrequencyGrid {
    pub fn new(spacing: f64, n_subcarriers: usize, carrier: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Config(format!(
                "subcarrier spacing must be positive, got {spacing}"
            )));
        }
        if n_subcarriers == 0 || (n_subcarriers > 1 && n_subcarriers % 2 != 0) {
            return Err(Error::Config(format!(
                "number of subcarriers must be 1 or a positive even number, got {n_subcarriers}"
            )));
        }
        if !(carrier > n_subcarriers as f64 * spacing / 2.0) {
            return Err(Error::Config(format!(
                "carrier {carrier} Hz must exceed half the occupied bandwidth {} Hz",
                n_subcarriers as f64 * spacing / 2.0
            )));
        }
        Ok(FrequencyGrid {
            spacing,
            n_subcarriers,
            carrier,
        })
    }

    /// One subcarrier at DC; frequency dependency vanishes.
    pub fn flat() -> Self {
        FrequencyGrid {
            spacing: 15e3,
            n_subcarriers: 1,
            carrier: 3.5e9,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.n_subcarriers
    }

    pub fn is_empty(&self) -> bool {
        self.n_subcarriers == 0
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    pub fn min_index(&self) -> i64 {
        -((self.n_subcarriers / 2) as i64)
    }

    pub fn max_index(&self) -> i64 {
        self.min_index() + self.n_subcarriers as i64 - 1
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.min_index()..=self.max_index()
    }

    /// Baseband frequency `l * F` of subcarrier `l`.
    pub fn frequency(&self, l: i64) -> f64 {
        l as f64 * self.spacing
    }

    /// Position of subcarrier `l` in a per-subcarrier value sequence.
    pub fn position(&self, l: i64) -> Result<usize> {
        if l < self.min_index() || l > self.max_index() {
            return Err(Error::SubcarrierIndex {
                index: l,
                min: self.min_index(),
                max: self.max_index(),
            });
        }
        Ok((l - self.min_index()) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignModel {
    /// `t ∝ e^{+j phi}`, `r ∝ e^{-j phi}`.
    Correct,
    /// `t ∝ e^{+j phi}`, `r ∝ e^{+j phi}`.
    Inaccurate,
}

impl SignModel {
    /// Sign of the LO phase in the RX chain.
    pub fn rx_sign(self) -> f64 {
        match self {
            SignModel::Correct => -1.0,
            SignModel::Inaccurate => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SignModel::Correct => "correct",
            SignModel::Inaccurate => "inaccurate",
        }
    }
}

/// One transceiver: TX chain and RX chain sharing a common LO and timing reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrxChain {
    /// Common LO phase in radians, unwrapped.
    pub phi: f64,
    /// Common timing offset in seconds.
    pub tau: f64,
    pub dphi_t: f64,
    pub dphi_r: f64,
    pub dtau_t: f64,
    pub dtau_r: f64,
    pub h_t_lf: Vec<Complex64>,
    pub h_r_lf: Vec<Complex64>,
    pub h_t_rf: Vec<Complex64>,
    pub h_r_rf: Vec<Complex64>,
}

impl TrxChain {
    /// Chain with unit filters and zero offsets.
    pub fn ideal(grid: &FrequencyGrid) -> Self {
        let ones = vec![Complex64::new(1.0, 0.0); grid.len()];
        TrxChain {
            phi: 0.0,
            tau: 0.0,
            dphi_t: 0.0,
            dphi_r: 0.0,
            dtau_t: 0.0,
            dtau_r: 0.0,
            h_t_lf: ones.clone(),
            h_r_lf: ones.clone(),
            h_t_rf: ones.clone(),
            h_r_rf: ones,
        }
    }

    pub fn with_phase(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_timing(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    fn check(&self, grid: &FrequencyGrid) -> Result<()> {
        let n = grid.len();
        for (name, v) in [
            ("H_t_lf", &self.h_t_lf),
            ("H_r_lf", &self.h_r_lf),
            ("H_t_rf", &self.h_t_rf),
            ("H_r_rf", &self.h_r_rf),
        ] {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} has {} values, grid has {n} subcarriers",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

/// TX transfer value `t(lF)`. Identical under both sign models.
pub fn tx_transfer(
    chain: &TrxChain,
    grid: &FrequencyGrid,
    l: i64,
    _model: SignModel,
) -> Result<Complex64> {
    let pos = grid.position(l)?;
    chain.check(grid)?;
    let f = grid.frequency(l);
    let lo = Complex64::from_polar(1.0, chain.phi + chain.dphi_t);
    let delay = Complex64::from_polar(1.0, -2.0 * PI * f * (chain.tau + chain.dtau_t));
    Ok(lo * delay * chain.h_t_lf[pos] * chain.h_t_rf[pos])
}

/// RX transfer value `r(lF)`; the LO sign depends on `model`.
pub fn rx_transfer(
    chain: &TrxChain,
    grid: &FrequencyGrid,
    l: i64,
    model: SignModel,
) -> Result<Complex64> {
    let pos = grid.position(l)?;
    chain.check(grid)?;
    let f = grid.frequency(l);
    let lo = Complex64::from_polar(1.0, model.rx_sign() * (chain.phi + chain.dphi_r));
    let delay = Complex64::from_polar(1.0, 2.0 * PI * f * (chain.tau + chain.dtau_r));
    Ok(lo * delay * chain.h_r_lf[pos] * chain.h_r_rf[pos])
}

/// Uplink channel: base-station RX chain, propagation, UE TX chain.
pub fn ul_channel(r_bs: Complex64, h1: Complex64, t_ue: Complex64) -> Complex64 {
    r_bs * h1 * t_ue
}

/// Downlink channel: UE RX chain, propagation, base-station TX chain.
pub fn dl_channel(r_ue: Complex64, h1: Complex64, t_bs: Complex64) -> Complex64 {
    r_ue * h1 * t_bs
}
