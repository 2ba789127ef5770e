//! SRS, DMRS and blind channel estimation.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::CMatrix;

/// Per-UE effective DL coefficient `a = diag(H_DL W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel(pub Vec<Complex64>);

impl EffectiveChannel {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.0.iter()
    }
}

/// How the UE obtains the effective channel used for equalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    /// Precoded DL pilots.
    Dmrs,
    /// No DL pilots: the effective channel is assumed real and positive.
    Blind,
    /// True effective channel.
    Genie,
}

impl EstimationMode {
    pub fn label(self) -> &'static str {
        match self {
            EstimationMode::Dmrs => "dmrs",
            EstimationMode::Blind => "blind",
            EstimationMode::Genie => "genie",
        }
    }
}

/// Noisy UL channel estimate averaged over `n_srs` orthogonal repetitions.
pub fn srs_estimate<R: Rng + ?Sized>(
    h_ul_true: &CMatrix,
    noise_std: f64,
    n_srs: usize,
    rng: &mut R,
) -> Result<CMatrix> {
    if n_srs == 0 {
        return Err(Error::Config(
            "SRS repetition count must be at least 1".into(),
        ));
    }
    if noise_std == 0.0 {
        return Ok(h_ul_true.clone());
    }
    let std = noise_std / (n_srs as f64).sqrt();
    Ok(h_ul_true.map(|h| h + complex_normal(rng, std)))
}

/// Noisy effective-channel estimate from `n_pilots` DMRS resource elements.
pub fn dmrs_estimate<R: Rng + ?Sized>(
    a_true: &EffectiveChannel,
    noise_std: f64,
    n_pilots: usize,
    rng: &mut R,
) -> Result<EffectiveChannel> {
    if n_pilots == 0 {
        return Err(Error::Config("DMRS pilot count must be at least 1".into()));
    }
    if noise_std == 0.0 {
        return Ok(a_true.clone());
    }
    let std = noise_std / (n_pilots as f64).sqrt();
    Ok(EffectiveChannel(
        a_true
            .iter()
            .map(|a| a + complex_normal(rng, std))
            .collect(),
    ))
}

/// SINR after DMRS-based estimation with `|P|` pilots:
/// `|P| SINR / (|P| + 1 + 1/SINR)`.
pub fn dmrs_effective_sinr(sinr: f64, n_pilots: usize) -> Result<f64> {
    if !(sinr > 0.0) {
        return Err(Error::Config(format!("SINR must be positive, got {sinr}")));
    }
    if n_pilots == 0 {
        return Err(Error::Config("DMRS pilot count must be at least 1".into()));
    }
    let p = n_pilots as f64;
    Ok(p * sinr / (p + 1.0 + 1.0 / sinr))
}

/// Magnitude known, phase assumed zero.
pub fn blind_estimate(a_true: &EffectiveChannel) -> EffectiveChannel {
    EffectiveChannel(
        a_true
            .iter()
            .map(|a| Complex64::new(a.norm(), 0.0))
            .collect(),
    )
}

/// Symbol-level check of [`dmrs_effective_sinr`].
///
/// Draws a Rayleigh channel `h ~ CN(0, 1)`, estimates it from `n_pilots`
/// noisy pilots with the LMMSE estimator, sends QPSK data and measures
/// `E|h_hat|^2 / E|y - h_hat x|^2`, the SINR seen by a detector that trusts
/// the estimate.
pub fn dmrs_symbol_sinr<R: Rng + ?Sized>(
    sinr: f64,
    n_pilots: usize,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(sinr > 0.0) || n_pilots == 0 || trials == 0 {
        return Err(Error::Config(
            "need positive SINR, pilots and trials".into(),
        ));
    }
    let noise_std = (1.0 / sinr).sqrt();
    let noise_var = 1.0 / sinr;
    let p = n_pilots as f64;
    let shrink = p / (p + noise_var);
    let qpsk = std::f64::consts::FRAC_1_SQRT_2;
    let (mut signal, mut distortion) = (0.0, 0.0);
    for _ in 0..trials {
        let h = complex_normal(rng, 1.0);
        let ls = (0..n_pilots)
            .map(|_| h + complex_normal(rng, noise_std))
            .sum::<Complex64>()
            / p;
        let h_hat = ls * shrink;
        let x = Complex64::new(
            if rng.gen::<bool>() { qpsk } else { -qpsk },
            if rng.gen::<bool>() { qpsk } else { -qpsk },
        );
        let y = h * x + complex_normal(rng, noise_std);
        signal += h_hat.norm_sqr();
        distortion += (y - h_hat * x).norm_sqr();
    }
    Ok(signal / distortion)
}
