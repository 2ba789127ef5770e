//! Network scenario and reciprocal propagation channels.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fading {
    /// iid CN(0, 1) entries.
    Rayleigh,
    /// Every in-cluster coefficient equals 1.
    Unit,
}

/// Network geometry, noise level, phase-noise parameters and pilot schedule.
///
/// TRXs are numbered TRP-major and TRPs cluster-major, so cluster `c` owns
/// TRXs `c * trx_per_cluster .. (c + 1) * trx_per_cluster`. UEs are split
/// evenly: UE `k` is served by cluster `k / ue_per_cluster`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n_trp: usize,
    pub trx_per_trp: usize,
    /// TRPs per cluster.
    pub cluster_size: usize,
    pub n_ue: usize,
    /// DL SNR in dB for unit TX power per UE stream; sets the noise power.
    pub snr_db: f64,
    /// Phase-noise sampling time in seconds.
    pub sample_time: f64,
    /// Base-station LO increment variance, rad^2.
    pub sigma2: f64,
    /// UE LO increment variance; defaults to `sigma2`.
    pub sigma2_ue: Option<f64>,
    /// Power gain applied to links between a UE and non-serving clusters.
    pub inter_cluster_gain: f64,
    pub fading: Fading,
    /// Half-width in radians of uniform static phase offsets on every TX/RX
    /// filter. Zero gives unit filters.
    pub hw_phase_spread: f64,
    /// Steps between SRS soundings; 0 sounds only at `n = 0`.
    pub srs_period: usize,
    /// Orthogonal SRS repetitions averaged per sounding.
    pub n_srs: usize,
    pub srs_noise_std: f64,
    /// DMRS resource elements per slot, `|P|`.
    pub n_dmrs: usize,
    pub dmrs_noise_std: f64,
    pub calibration_noise_std: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        desk_preset()
    }
}

/// 2 clusters x 2 TRPs x 4 TRX, 8 UEs.
pub fn desk_preset() -> Scenario {
    Scenario {
        n_trp: 4,
        trx_per_trp: 4,
        cluster_size: 2,
        n_ue: 8,
        snr_db: 20.0,
        sample_time: 100e-6,
        sigma2: 0.01,
        sigma2_ue: None,
        inter_cluster_gain: 0.0,
        fading: Fading::Rayleigh,
        hw_phase_spread: 0.0,
        srs_period: 1,
        n_srs: 1,
        srs_noise_std: 0.0,
        n_dmrs: 6,
        dmrs_noise_std: 0.0,
        calibration_noise_std: 0.0,
    }
}

/// 16 TRPs x 64 TRX in clusters of 4 TRPs, 160 UEs.
pub fn paper_preset() -> Scenario {
    Scenario {
        n_trp: 16,
        trx_per_trp: 64,
        cluster_size: 4,
        n_ue: 160,
        ..desk_preset()
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_trp == 0 || self.trx_per_trp == 0 || self.cluster_size == 0 || self.n_ue == 0 {
            return fail("TRP, TRX, cluster and UE counts must be positive".into());
        }
        if self.n_trp % self.cluster_size != 0 {
            return fail(format!(
                "{} TRPs not divisible by cluster size {}",
                self.n_trp, self.cluster_size
            ));
        }
        if self.n_ue % self.n_clusters() != 0 {
            return fail(format!(
                "{} UEs not divisible by {} clusters",
                self.n_ue,
                self.n_clusters()
            ));
        }
        if self.ue_per_cluster() > self.trx_per_cluster() {
            return fail(format!(
                "{} UEs per cluster exceed {} TRXs per cluster; zero-forcing needs at least as many TRXs",
                self.ue_per_cluster(),
                self.trx_per_cluster()
            ));
        }
        if !(0.0..=1.0).contains(&self.inter_cluster_gain) {
            return fail(format!(
                "inter-cluster gain {} outside [0, 1]",
                self.inter_cluster_gain
            ));
        }
        if !(self.sigma2 >= 0.0) || self.sigma2_ue.is_some_and(|s| !(s >= 0.0)) {
            return fail("phase-noise variances must be non-negative".into());
        }
        if !(self.sample_time > 0.0) {
            return fail(format!("sample time {} must be positive", self.sample_time));
        }
        if self.n_srs == 0 || self.n_dmrs == 0 {
            return fail("SRS and DMRS counts must be at least 1".into());
        }
        for (name, v) in [
            ("srs_noise_std", self.srs_noise_std),
            ("dmrs_noise_std", self.dmrs_noise_std),
            ("calibration_noise_std", self.calibration_noise_std),
            ("hw_phase_spread", self.hw_phase_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn n_clusters(&self) -> usize {
        self.n_trp / self.cluster_size
    }

    pub fn n_trx(&self) -> usize {
        self.n_trp * self.trx_per_trp
    }

    pub fn trx_per_cluster(&self) -> usize {
        self.cluster_size * self.trx_per_trp
    }

    pub fn ue_per_cluster(&self) -> usize {
        self.n_ue / self.n_clusters()
    }

    pub fn cluster_trx(&self, cluster: usize) -> std::ops::Range<usize> {
        let n = self.trx_per_cluster();
        cluster * n..(cluster + 1) * n
    }

    pub fn cluster_ues(&self, cluster: usize) -> std::ops::Range<usize> {
        let n = self.ue_per_cluster();
        cluster * n..(cluster + 1) * n
    }

    pub fn cluster_of_ue(&self, ue: usize) -> usize {
        ue / self.ue_per_cluster()
    }

    pub fn cluster_of_trx(&self, trx: usize) -> usize {
        trx / self.trx_per_cluster()
    }

    pub fn noise_power(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn ue_sigma2(&self) -> f64 {
        self.sigma2_ue.unwrap_or(self.sigma2)
    }
}

/// Reciprocal propagation coefficients, static over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `n_ue x n_trx` UE-to-TRX propagation.
    pub h_ue: CMatrix,
    /// `n_trx x n_trx` TRX-to-TRX calibration channels, symmetric.
    pub h_trp: CMatrix,
}

pub fn draw_channels<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<ChannelSet> {
    scenario.validate()?;
    let (n_ue, n_trx) = (scenario.n_ue, scenario.n_trx());
    let ic_amplitude = scenario.inter_cluster_gain.sqrt();

    // Row-major draw order so a realization does not depend on the gain setting.
    let mut h_ue = CMatrix::zeros(n_ue, n_trx);
    for k in 0..n_ue {
        for i in 0..n_trx {
            let h = match scenario.fading {
                Fading::Rayleigh => complex_normal(rng, 1.0),
                Fading::Unit => Complex64::new(1.0, 0.0),
            };
            let serving = scenario.cluster_of_ue(k) == scenario.cluster_of_trx(i);
            h_ue[(k, i)] = if serving { h } else { h * ic_amplitude };
        }
    }

    let mut h_trp = CMatrix::zeros(n_trx, n_trx);
    for i in 0..n_trx {
        for j in i..n_trx {
            let h = match scenario.fading {
                Fading::Rayleigh => complex_normal(rng, 1.0),
                Fading::Unit => Complex64::new(1.0, 0.0),
            };
            h_trp[(i, j)] = h;
            h_trp[(j, i)] = h;
        }
    }
    Ok(ChannelSet { h_ue, h_trp })
}

impl ChannelSet {
    /// Scale every UE link by a per-link amplitude gain (path-loss hook).
    pub fn with_link_gains(mut self, gains: &DMatrix<f64>) -> Result<Self> {
        if gains.shape() != self.h_ue.shape() {
            return Err(Error::Dimension(format!(
                "gain matrix {:?} vs channel {:?}",
                gains.shape(),
                self.h_ue.shape()
            )));
        }
        self.h_ue.zip_apply(gains, |h, g| *h *= g);
        Ok(self)
    }

    /// FNV-1a over the bit patterns of all coefficients.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for z in self.h_ue.iter().chain(self.h_trp.iter()) {
            for byte in
                z.re.to_bits()
                    .to_le_bytes()
                    .into_iter()
                    .chain(z.im.to_bits().to_le_bytes())
            {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}
