//! Zero-forcing precoding, effective channel and per-UE detection metrics.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EffectiveChannel;
use crate::hw_model::{rx_transfer, tx_transfer, FrequencyGrid, SignModel, TrxChain};
use crate::CMatrix;

/// Largest tolerated `sigma_max / sigma_min` of the channel estimate.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerNormalization {
    /// Every column has unit power.
    #[default]
    PerColumn,
    /// Total power equals the number of columns.
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    /// `n_trx x n_ue` precoding matrix.
    pub w: CMatrix,
    /// Column norms of the pseudo-inverse before normalization.
    pub column_norms: Vec<f64>,
}

/// `W = pinv(H)` with columns normalized, for an `n_ue x n_trx` estimate.
///
/// The pseudo-inverse comes from the SVD `H = U S V^H` as `V S^-1 U^H`.
pub fn zero_forcing(
    h_dl_est: &CMatrix,
    normalization: PowerNormalization,
    condition_limit: f64,
) -> Result<Precoder> {
    let (n_ue, n_trx) = h_dl_est.shape();
    let ues = || (0..n_ue).collect::<Vec<_>>();
    if n_ue == 0 || n_trx < n_ue {
        return Err(Error::Dimension(format!(
            "zero-forcing needs 0 < n_ue <= n_trx, got {n_ue} x {n_trx}"
        )));
    }
    let svd = h_dl_est.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^H"));
    let s = &svd.singular_values;
    let (s_max, s_min) = (s.max(), s.min());
    let condition = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };
    if !(condition <= condition_limit) {
        return Err(Error::Precoding {
            ues: ues(),
            condition,
            limit: condition_limit,
        });
    }
    let s_inv = DVector::from_iterator(s.len(), s.iter().map(|&x| Complex64::new(1.0 / x, 0.0)));
    let mut w = v_t.adjoint() * CMatrix::from_diagonal(&s_inv) * u.adjoint();

    let column_norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    match normalization {
        PowerNormalization::PerColumn => {
            for (mut col, &norm) in w.column_iter_mut().zip(&column_norms) {
                col /= Complex64::new(norm, 0.0);
            }
        }
        PowerNormalization::Sum => {
            let total = w.norm();
            w *= Complex64::new((n_ue as f64).sqrt() / total, 0.0);
        }
    }
    Ok(Precoder { w, column_norms })
}

fn check_dims(h: &CMatrix, w: &CMatrix) -> Result<()> {
    if h.ncols() != w.nrows() || h.nrows() != w.ncols() {
        return Err(Error::Dimension(format!(
            "channel {:?} and precoder {:?} do not conform",
            h.shape(),
            w.shape()
        )));
    }
    Ok(())
}

/// `a_k = (H W)[k, k]`.
pub fn effective_channel(h_dl_true: &CMatrix, w: &Precoder) -> Result<EffectiveChannel> {
    check_dims(h_dl_true, &w.w)?;
    Ok(EffectiveChannel(
        (0..h_dl_true.nrows())
            .map(|k| h_dl_true.row(k).transpose().dot(&w.w.column(k)))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMode {
    #[default]
    Sinr,
    Distortion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeMetrics {
    /// `|a_k|^2`.
    pub signal_power: f64,
    /// Interference plus noise power.
    pub interference_noise: f64,
    /// `|a_k|^2 / (sum_{j != k} |(HW)[k,j]|^2 + noise)`.
    pub sinr: f64,
    /// `E|x_hat - x|^2` after one-tap equalization with `a_hat_k`.
    pub distortion: f64,
}

impl UeMetrics {
    /// SINR seen by the detector, `1 / distortion`.
    pub fn post_detection_sinr(&self) -> f64 {
        1.0 / self.distortion
    }

    /// `log2(1 + 1/d)` while the distortion stays below the signal power, else 0.
    pub fn spectral_efficiency(&self) -> f64 {
        if self.distortion < 1.0 {
            (1.0 + 1.0 / self.distortion).log2()
        } else {
            0.0
        }
    }
}

/// Per-UE SINR and distortion for the true channel, precoder and the
/// UE-side effective-channel estimate.
pub fn ue_metrics(
    h_dl_true: &CMatrix,
    w: &Precoder,
    a_hat: &EffectiveChannel,
    noise_power: f64,
) -> Result<Vec<UeMetrics>> {
    check_dims(h_dl_true, &w.w)?;
    ue_metrics_from_product(&(h_dl_true * &w.w), a_hat, noise_power)
}

/// As [`ue_metrics`], from the precoded channel `H W` (`n_ue x n_ue`).
pub fn ue_metrics_from_product(
    hw: &CMatrix,
    a_hat: &EffectiveChannel,
    noise_power: f64,
) -> Result<Vec<UeMetrics>> {
    if a_hat.len() != hw.nrows() || !hw.is_square() {
        return Err(Error::Dimension(format!(
            "{} estimates for precoded channel {:?}",
            a_hat.len(),
            hw.shape()
        )));
    }
    a_hat
        .iter()
        .enumerate()
        .map(|(k, &a_hat_k)| {
            if a_hat_k == Complex64::default() {
                return Err(Error::Detection { ue: k });
            }
            let a = hw[(k, k)];
            let interference: f64 = hw
                .row(k)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            let interference_noise = interference + noise_power;
            let distortion =
                (1.0 - a / a_hat_k).norm_sqr() + interference_noise / a_hat_k.norm_sqr();
            Ok(UeMetrics {
                signal_power: a.norm_sqr(),
                interference_noise,
                sinr: a.norm_sqr() / interference_noise,
                distortion,
            })
        })
        .collect()
}

/// One metric per UE, selected by `mode`.
pub fn detection_metrics(
    h_dl_true: &CMatrix,
    w: &Precoder,
    a_hat: &EffectiveChannel,
    noise_power: f64,
    mode: MetricMode,
) -> Result<Vec<f64>> {
    let metrics = ue_metrics(h_dl_true, w, a_hat, noise_power)?;
    Ok(metrics
        .iter()
        .map(|m| match mode {
            MetricMode::Sinr => m.sinr,
            MetricMode::Distortion => m.distortion,
        })
        .collect())
}

/// Phases, in degrees, of a conjugate-precoding round trip through one TRX.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePhases {
    /// Phase of the received reference signal after the RX chain.
    pub measured: f64,
    /// Conjugate of the measurement.
    pub precoded: f64,
    /// Global phase of the transmitted signal after the TX chain.
    pub transmitted: f64,
}

fn wrap_degrees(rad: f64) -> f64 {
    let d = Complex64::from_polar(1.0, rad).arg().to_degrees();
    if d <= -180.0 + 1e-12 {
        180.0
    } else {
        d
    }
}

/// Receive a reference signal of global phase `reference_deg` through a TRX
/// whose LO sits at `lo_deg`, then transmit its conjugate.
pub fn conjugate_round_trip(reference_deg: f64, lo_deg: f64) -> ConjugatePhases {
    let measured = measure_phase(reference_deg, lo_deg);
    let tx = transmit_phase(measured, lo_deg);
    ConjugatePhases {
        measured,
        precoded: wrap_degrees(-measured.to_radians()),
        transmitted: tx,
    }
}

/// Phase of a reference signal as seen behind the RX chain.
pub fn measure_phase(reference_deg: f64, lo_deg: f64) -> f64 {
    let grid = FrequencyGrid::flat();
    let chain = TrxChain::ideal(&grid).with_phase(lo_deg.to_radians());
    let r = rx_transfer(&chain, &grid, 0, SignModel::Correct).expect("flat grid has subcarrier 0");
    wrap_degrees((Complex64::from_polar(1.0, reference_deg.to_radians()) * r).arg())
}

/// Global phase of the conjugate of `measured_deg` sent through a TRX with LO at `lo_deg`.
pub fn transmit_phase(measured_deg: f64, lo_deg: f64) -> f64 {
    let grid = FrequencyGrid::flat();
    let chain = TrxChain::ideal(&grid).with_phase(lo_deg.to_radians());
    let t = tx_transfer(&chain, &grid, 0, SignModel::Correct).expect("flat grid has subcarrier 0");
    let precoded = Complex64::from_polar(1.0, measured_deg.to_radians()).conj();
    wrap_degrees((precoded * t).arg())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream, Purpose};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zf(h: &CMatrix) -> Precoder {
        zero_forcing(h, PowerNormalization::PerColumn, DEFAULT_CONDITION_LIMIT).unwrap()
    }

    #[test]
    fn identity_channel() {
        let h = CMatrix::identity(3, 3);
        let p = zf(&h);
        assert!((p.w - CMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_channel() {
        let h = CMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, 0.0), c(4.0, 0.0)]));
        let p = zf(&h);
        assert!((p.w[(0, 1)]).norm() < 1e-12 && (p.w[(1, 0)]).norm() < 1e-12);
        let a = effective_channel(&h, &p).unwrap();
        assert!((a.0[0] - 2.0).norm() < 1e-12 && (a.0[1] - 4.0).norm() < 1e-12);
        assert!((p.column_norms[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_estimate_is_rejected() {
        let h = CMatrix::from_fn(2, 4, |_, j| c(j as f64 + 1.0, 0.0));
        let err =
            zero_forcing(&h, PowerNormalization::PerColumn, DEFAULT_CONDITION_LIMIT).unwrap_err();
        assert!(matches!(err, Error::Precoding { ref ues, .. } if ues == &vec![0, 1]));
        assert!(zero_forcing(&CMatrix::zeros(4, 2), PowerNormalization::PerColumn, 1e8).is_err());
    }

    #[test]
    fn sum_power_normalization() {
        let mut rng = stream(5, 0, Purpose::Channel, 0);
        let h = CMatrix::from_fn(3, 8, |_, _| complex_normal(&mut rng, 1.0));
        let p = zero_forcing(&h, PowerNormalization::Sum, DEFAULT_CONDITION_LIMIT).unwrap();
        assert!((p.w.norm_squared() - 3.0).abs() < 1e-10);
    }

    fn random_h(seed: u64, n_ue: usize, n_trx: usize) -> CMatrix {
        let mut rng = stream(seed, 0, Purpose::Channel, 0);
        CMatrix::from_fn(n_ue, n_trx, |_, _| complex_normal(&mut rng, 1.0))
    }

    proptest! {
        #[test]
        fn zf_nulls_interference_on_its_estimate(seed in 0u64..10_000) {
            let h = random_h(seed, 4, 16);
            let p = zf(&h);
            let hw = &h * &p.w;
            let diag_min = (0..4).map(|k| hw[(k, k)].norm()).fold(f64::INFINITY, f64::min);
            for k in 0..4 {
                prop_assert!(hw[(k, k)].im.abs() < 1e-10 * diag_min && hw[(k, k)].re > 0.0);
                for j in 0..4 {
                    if j != k {
                        prop_assert!(hw[(k, j)].norm() < 1e-10 * diag_min);
                    }
                }
            }
            for col in p.w.column_iter() {
                prop_assert!((col.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn common_phase_rotation_passes_through() {
        let h = random_h(3, 4, 16);
        let p = zf(&h);
        let theta = 0.83;
        let rotated = h.map(|z| z * Complex64::from_polar(1.0, theta));
        let a0 = effective_channel(&h, &p).unwrap();
        let a1 = effective_channel(&rotated, &p).unwrap();
        for (x, y) in a0.iter().zip(a1.iter()) {
            assert!((y - x * Complex64::from_polar(1.0, theta)).norm() < 1e-12);
        }
    }

    #[test]
    fn two_path_coherence_loss() {
        // One UE, two TRX with unit gains; the estimate carries a relative phase error psi on TRX 2.
        for psi in [0.0, 0.4, 1.7, std::f64::consts::PI] {
            let truth = CMatrix::from_element(1, 2, c(1.0, 0.0));
            let est =
                CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), Complex64::from_polar(1.0, psi)]);
            let a = effective_channel(&truth, &zf(&est)).unwrap();
            let expected = (c(1.0, 0.0) + Complex64::from_polar(1.0, psi)).norm_sqr() / 2.0;
            assert!((a.0[0].norm_sqr() - expected).abs() < 1e-12);
            assert!((a.0[0].norm_sqr() / 2.0 - (psi / 2.0).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_perfect_case() {
        let h = random_h(7, 4, 16);
        let p = zf(&h);
        let a = effective_channel(&h, &p).unwrap();
        let m = ue_metrics(&h, &p, &a, 1e-2).unwrap();
        for (mk, ak) in m.iter().zip(a.iter()) {
            assert!((mk.sinr - ak.norm_sqr() / 1e-2).abs() < 1e-8 * mk.sinr);
            assert!((mk.post_detection_sinr() / mk.sinr - 1.0).abs() < 1e-10);
        }
        // Unit effective channel with only noise: 20 dB.
        let h = CMatrix::identity(2, 2);
        let p = zf(&h);
        let a = effective_channel(&h, &p).unwrap();
        let sinr = detection_metrics(&h, &p, &a, 1e-2, MetricMode::Sinr).unwrap();
        assert!(sinr.iter().all(|s| (10.0 * s.log10() - 20.0).abs() < 1e-10));
    }

    #[test]
    fn blind_phase_error_distortion() {
        let theta = 60f64.to_radians();
        let h = CMatrix::from_element(1, 1, Complex64::from_polar(1.0, theta));
        let p = Precoder {
            w: CMatrix::identity(1, 1),
            column_norms: vec![1.0],
        };
        let a_hat = EffectiveChannel(vec![c(1.0, 0.0)]);
        let d = detection_metrics(&h, &p, &a_hat, 0.0, MetricMode::Distortion).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        let exact = EffectiveChannel(vec![Complex64::from_polar(1.0, theta)]);
        let d = detection_metrics(&h, &p, &exact, 0.0, MetricMode::Distortion).unwrap();
        assert!(d[0].abs() < 1e-24);
    }

    #[test]
    fn zero_estimate_fails_detection() {
        let h = CMatrix::identity(2, 2);
        let p = zf(&h);
        let a_hat = EffectiveChannel(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            ue_metrics(&h, &p, &a_hat, 0.1),
            Err(Error::Detection { ue: 1 })
        ));
        assert!(matches!(
            effective_channel(&CMatrix::identity(3, 3), &p),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn spectral_efficiency_proxy() {
        let m = |d| UeMetrics {
            signal_power: 1.0,
            interference_noise: 0.0,
            sinr: 1.0,
            distortion: d,
        };
        assert!((m(0.01).spectral_efficiency() - 101f64.log2()).abs() < 1e-12);
        assert_eq!(m(1.5).spectral_efficiency(), 0.0);
    }

    #[test]
    fn conjugate_walkthrough() {
        let fresh = conjugate_round_trip(90.0, 45.0);
        assert!((fresh.measured - 45.0).abs() < 1e-9);
        assert!((fresh.precoded + 45.0).abs() < 1e-9);
        assert!(fresh.transmitted.abs() < 1e-9);
        let drifted = conjugate_round_trip(90.0, 0.0);
        assert!((drifted.measured - 90.0).abs() < 1e-9);
        assert!((drifted.transmitted + 90.0).abs() < 1e-9);
        let stale = transmit_phase(fresh.measured, 0.0);
        assert!((stale + 45.0).abs() < 1e-9);
    }
}
