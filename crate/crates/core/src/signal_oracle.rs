//! Passband reference chain.
//!
//! Simulates OFDM modulation, real I/Q low-pass filtering, up-conversion,
//! RF filtering and propagation, down-conversion, RX low-pass filtering and
//! OFDM demodulation. Every LTI stage is applied to a sum of complex tones on
//! the integer grid `m * F`, so filtering is exact. Only the final
//! demodulation integral is sampled, as a Riemann sum over `N_s` points,
//! which is exact for on-grid tones.
//!
//! The result is compared against the factorised prediction
//! `y_l = r(lF) H(lF + f_c) t(lF) x_l` built from [`crate::hw_model`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hw_model::{rx_transfer, tx_transfer, FrequencyGrid, SignModel, TrxChain};
use crate::rng::{self, Purpose};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassbandConfig {
    pub grid: FrequencyGrid,
    /// Samples per OFDM symbol duration `1/F`.
    pub oversampling: usize,
    /// TX start delay in seconds.
    pub tau_t: f64,
    /// Demodulation delay in seconds.
    pub tau_r: f64,
    /// Up-conversion LO phase.
    pub phi_t: f64,
    /// Down-conversion LO phase.
    pub phi_r: f64,
}

impl PassbandConfig {
    /// 16 subcarriers at 15 kHz, carrier at 64 F, 512 samples per symbol.
    pub fn desk() -> Self {
        let spacing = 15e3;
        PassbandConfig {
            grid: FrequencyGrid::new(spacing, 16, 64.0 * spacing).expect("valid desk grid"),
            oversampling: 512,
            tau_t: 0.0,
            tau_r: 0.0,
            phi_t: 0.0,
            phi_r: 0.0,
        }
    }

    /// Carrier frequency as a whole number of subcarrier spacings.
    pub fn carrier_bin(&self) -> Result<i64> {
        let ratio = self.grid.carrier() / self.grid.spacing();
        let bin = ratio.round();
        if (ratio - bin).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "carrier / subcarrier spacing = {ratio} is not an integer"
            )));
        }
        Ok(bin as i64)
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.oversampling;
        if ns == 0 || !ns.is_power_of_two() {
            return Err(Error::Config(format!(
                "oversampling {ns} is not a power of two"
            )));
        }
        let carrier_bin = self.carrier_bin()?;
        // N_s F > 2 (2 f_c + L F / 2), written in units of F.
        let needed = 2 * (2 * carrier_bin) + self.grid.len() as i64;
        if (ns as i64) <= needed {
            return Err(Error::Config(format!(
                "oversampling {ns} violates Nyquist for the 2 f_c image: need more than {needed} samples per symbol"
            )));
        }
        Ok(())
    }
}

/// Sum of complex exponentials `sum_m a_m e^{j 2 pi m F t}` on an integer frequency grid.
#[derive(Debug, Clone, Default, PartialEq)]
struct ToneSignal {
    tones: BTreeMap<i64, Complex64>,
}

impl ToneSignal {
    fn add_tone(&mut self, bin: i64, amp: Complex64) {
        *self.tones.entry(bin).or_default() += amp;
    }

    fn sum(mut self, other: ToneSignal) -> ToneSignal {
        for (bin, amp) in other.tones {
            self.add_tone(bin, amp);
        }
        self
    }

    fn scale(mut self, s: Complex64) -> ToneSignal {
        self.tones.values_mut().for_each(|a| *a *= s);
        self
    }

    /// `Re{s}` as a tone sum: each tone splits into a conjugate pair.
    fn real_part(&self) -> ToneSignal {
        let mut out = ToneSignal::default();
        for (&bin, &amp) in &self.tones {
            out.add_tone(bin, amp * 0.5);
            out.add_tone(-bin, amp.conj() * 0.5);
        }
        out
    }

    /// `Im{s} = (s - s*) / 2j`.
    fn imag_part(&self) -> ToneSignal {
        let mut out = ToneSignal::default();
        for (&bin, &amp) in &self.tones {
            out.add_tone(bin, amp / (2.0 * J));
            out.add_tone(-bin, -amp.conj() / (2.0 * J));
        }
        out
    }

    /// Multiply by `e^{j (2 pi shift F t + phase)}`.
    fn mix(&self, shift: i64, phase: f64) -> ToneSignal {
        let rot = Complex64::from_polar(1.0, phase);
        ToneSignal {
            tones: self
                .tones
                .iter()
                .map(|(&bin, &amp)| (bin + shift, amp * rot))
                .collect(),
        }
    }

    /// Multiply by `cos(2 pi f_c t + phase)`.
    fn mix_cos(&self, carrier_bin: i64, phase: f64) -> ToneSignal {
        self.mix(carrier_bin, phase)
            .scale(0.5.into())
            .sum(self.mix(-carrier_bin, -phase).scale(0.5.into()))
    }

    /// Multiply by `sin(2 pi f_c t + phase)`.
    fn mix_sin(&self, carrier_bin: i64, phase: f64) -> ToneSignal {
        let half_j = 1.0 / (2.0 * J);
        self.mix(carrier_bin, phase)
            .scale(half_j)
            .sum(self.mix(-carrier_bin, -phase).scale(-half_j))
    }

    /// Pass through an LTI element with frequency response `response(bin)`.
    fn filter(&self, response: impl Fn(i64) -> Complex64) -> ToneSignal {
        ToneSignal {
            tones: self
                .tones
                .iter()
                .map(|(&bin, &amp)| (bin, amp * response(bin)))
                .collect(),
        }
    }

    fn eval(&self, spacing: f64, t: f64) -> Complex64 {
        self.tones
            .iter()
            .map(|(&bin, &amp)| {
                amp * Complex64::from_polar(1.0, 2.0 * PI * bin as f64 * spacing * t)
            })
            .sum()
    }
}

/// Filter and channel values on the subcarrier grid for one TX/RX link.
///
/// The LF filters have real impulse responses, so their grid values must be
/// Hermitian-symmetric (`H(-lF) = H(lF)*`, `H(0)` real). Outside the grid
/// the RX LF filter takes `rx_lf_image` (the value it presents to the
/// `2 f_c` image). RF filters and the propagation channel are given at
/// `lF + f_c`; their negative-frequency values follow from real impulse
/// responses.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFilters {
    pub h_t_lf: Vec<Complex64>,
    pub h_t_rf: Vec<Complex64>,
    pub channel: Vec<Complex64>,
    pub h_r_rf: Vec<Complex64>,
    pub h_r_lf: Vec<Complex64>,
    pub rx_lf_image: Complex64,
}

impl LinkFilters {
    pub fn identity(grid: &FrequencyGrid) -> Self {
        let ones = vec![Complex64::new(1.0, 0.0); grid.len()];
        LinkFilters {
            h_t_lf: ones.clone(),
            h_t_rf: ones.clone(),
            channel: ones.clone(),
            h_r_rf: ones.clone(),
            h_r_lf: ones,
            rx_lf_image: Complex64::new(1.0, 0.0),
        }
    }

    /// Random filters with magnitudes in `[0.5, 2]` and uniform phases;
    /// LF filters drawn Hermitian-symmetric.
    pub fn random<R: Rng + ?Sized>(grid: &FrequencyGrid, rng: &mut R) -> Self {
        let draw = |rng: &mut R| {
            Complex64::from_polar(rng.gen_range(0.5..=2.0), rng.gen_range(0.0..2.0 * PI))
        };
        let hermitian = |rng: &mut R| {
            let mut v = vec![Complex64::default(); grid.len()];
            for l in grid.indices() {
                let pos = grid.position(l).unwrap();
                v[pos] = match l {
                    0 => {
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        Complex64::new(sign * rng.gen_range(0.5..=2.0), 0.0)
                    }
                    l if l < 0 && grid.position(-l).is_ok() => continue,
                    _ => draw(rng),
                };
                if l > 0 {
                    if let Ok(mirror) = grid.position(-l) {
                        v[mirror] = v[pos].conj();
                    }
                }
            }
            v
        };
        let h_t_lf = hermitian(rng);
        let h_r_lf = hermitian(rng);
        let draw_n = |rng: &mut R| (0..grid.len()).map(|_| draw(rng)).collect::<Vec<_>>();
        LinkFilters {
            h_t_lf,
            h_t_rf: draw_n(rng),
            channel: draw_n(rng),
            h_r_rf: draw_n(rng),
            h_r_lf,
            rx_lf_image: draw(rng),
        }
    }

    fn validate(&self, grid: &FrequencyGrid) -> Result<()> {
        for (name, v) in [
            ("H_t_lf", &self.h_t_lf),
            ("H_t_rf", &self.h_t_rf),
            ("channel", &self.channel),
            ("H_r_rf", &self.h_r_rf),
            ("H_r_lf", &self.h_r_lf),
        ] {
            if v.len() != grid.len() {
                return Err(Error::Dimension(format!(
                    "{name} has {} values, grid has {}",
                    v.len(),
                    grid.len()
                )));
            }
        }
        for (name, v) in [("H_t_lf", &self.h_t_lf), ("H_r_lf", &self.h_r_lf)] {
            for l in grid.indices() {
                let Ok(mirror) = grid.position(-l) else {
                    continue;
                };
                let a = v[grid.position(l)?];
                if (a - v[mirror].conj()).norm() > 1e-12 * a.norm().max(1.0) {
                    return Err(Error::Config(format!(
                        "{name} is not the response of a real filter: H({l}F) != conj(H({}F))",
                        -l
                    )));
                }
            }
        }
        Ok(())
    }

    /// TX and RX [`TrxChain`]s carrying these filters and the given LO/timing parameters.
    pub fn chains(&self, cfg: &PassbandConfig) -> (TrxChain, TrxChain) {
        let mut tx = TrxChain::ideal(&cfg.grid)
            .with_phase(cfg.phi_t)
            .with_timing(cfg.tau_t);
        tx.h_t_lf = self.h_t_lf.clone();
        tx.h_t_rf = self.h_t_rf.clone();
        let mut rx = TrxChain::ideal(&cfg.grid)
            .with_phase(cfg.phi_r)
            .with_timing(cfg.tau_r);
        rx.h_r_lf = self.h_r_lf.clone();
        rx.h_r_rf = self.h_r_rf.clone();
        (tx, rx)
    }
}

/// Response of a real-impulse-response LF filter given on the subcarrier grid.
fn lowpass<'a>(
    grid: &FrequencyGrid,
    values: &'a [Complex64],
    outside: Complex64,
) -> impl Fn(i64) -> Complex64 + 'a {
    let grid = *grid;
    move |bin| {
        if let Ok(pos) = grid.position(bin) {
            values[pos]
        } else if let Ok(pos) = grid.position(-bin) {
            values[pos].conj()
        } else if bin >= 0 {
            outside
        } else {
            outside.conj()
        }
    }
}

/// Response of a real-impulse-response RF element given at `lF + f_c`.
/// Off-grid bins only ever carry numerically cancelled tones.
fn bandpass<'a>(
    grid: &FrequencyGrid,
    carrier_bin: i64,
    values: &'a [Complex64],
) -> impl Fn(i64) -> Complex64 + 'a {
    let grid = *grid;
    move |bin| {
        if let Ok(pos) = grid.position(bin - carrier_bin) {
            values[pos]
        } else if let Ok(pos) = grid.position(-bin - carrier_bin) {
            values[pos].conj()
        } else {
            Complex64::default()
        }
    }
}

fn ofdm_tones(x: &[Complex64], cfg: &PassbandConfig) -> Result<ToneSignal> {
    let grid = &cfg.grid;
    if x.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} symbols for {} subcarriers",
            x.len(),
            grid.len()
        )));
    }
    let mut s = ToneSignal::default();
    for (l, &xl) in grid.indices().zip(x) {
        s.add_tone(
            l,
            xl * Complex64::from_polar(1.0, -2.0 * PI * grid.frequency(l) * cfg.tau_t),
        );
    }
    Ok(s)
}

/// Time-domain OFDM signal `sum_l e^{j 2 pi l F (t - tau_t)} x_l` at the given instants.
pub fn ofdm_modulate(
    x: &[Complex64],
    cfg: &PassbandConfig,
    sample_times: &[f64],
) -> Result<Vec<Complex64>> {
    let grid = &cfg.grid;
    if x.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} symbols for {} subcarriers",
            x.len(),
            grid.len()
        )));
    }
    Ok(sample_times
        .iter()
        .map(|&t| {
            grid.indices()
                .zip(x)
                .map(|(l, &xl)| {
                    xl * Complex64::from_polar(1.0, 2.0 * PI * grid.frequency(l) * (t - cfg.tau_t))
                })
                .sum()
        })
        .collect())
}

/// Run `x` through the full passband chain and return the demodulated symbols.
pub fn passband_chain(
    x: &[Complex64],
    cfg: &PassbandConfig,
    filters: &LinkFilters,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    filters.validate(&cfg.grid)?;
    let grid = &cfg.grid;
    let fc = cfg.carrier_bin()?;

    let s_ofdm = ofdm_tones(x, cfg)?;

    // I and Q branches through the real TX LF filter.
    let tx_lf = lowpass(grid, &filters.h_t_lf, Complex64::default());
    let s1_i = s_ofdm.real_part().filter(&tx_lf);
    let s1_q = s_ofdm.imag_part().filter(&tx_lf);

    // Up-conversion.
    let s2 = s1_i
        .mix_cos(fc, cfg.phi_t)
        .sum(s1_q.mix_sin(fc, cfg.phi_t).scale((-1.0).into()));

    // TX RF filter, propagation, RX RF filter.
    let s3 = s2
        .filter(bandpass(grid, fc, &filters.h_t_rf))
        .filter(bandpass(grid, fc, &filters.channel))
        .filter(bandpass(grid, fc, &filters.h_r_rf));

    // Down-conversion: cos - j sin, then the RX LF filter.
    let s4 = s3
        .mix_cos(fc, cfg.phi_r)
        .sum(s3.mix_sin(fc, cfg.phi_r).scale(-J))
        .filter(lowpass(grid, &filters.h_r_lf, filters.rx_lf_image));

    // y_l = 2F * integral over [tau_r, tau_r + 1/F] of s4(t) e^{-j 2 pi l F (t - tau_r)} dt.
    let ns = cfg.oversampling;
    let dt = 1.0 / (grid.spacing() * ns as f64);
    let samples: Vec<Complex64> = (0..ns)
        .map(|k| s4.eval(grid.spacing(), cfg.tau_r + k as f64 * dt))
        .collect();
    Ok(grid
        .indices()
        .map(|l| {
            let acc: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    s * Complex64::from_polar(
                        1.0,
                        -2.0 * PI * (l * k as i64).rem_euclid(ns as i64) as f64 / ns as f64,
                    )
                })
                .sum();
            acc * 2.0 * grid.spacing() * dt
        })
        .collect())
}

/// Factorised prediction `r(lF) H(lF + f_c) t(lF) x_l` under `model`.
pub fn predicted_output(
    x: &[Complex64],
    cfg: &PassbandConfig,
    filters: &LinkFilters,
    model: SignModel,
) -> Result<Vec<Complex64>> {
    let (tx, rx) = filters.chains(cfg);
    let grid = &cfg.grid;
    grid.indices()
        .zip(x)
        .map(|(l, &xl)| {
            let pos = grid.position(l)?;
            let t = tx_transfer(&tx, grid, l, model)?;
            let r = rx_transfer(&rx, grid, l, model)?;
            Ok(r * filters.channel[pos] * t * xl)
        })
        .collect()
}

fn max_relative_error(actual: &[Complex64], predicted: &[Complex64]) -> f64 {
    actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).norm() / p.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub phi_r: f64,
    /// Max relative error against the correct-sign prediction.
    pub error: f64,
    /// Max relative error against the inaccurate-sign prediction.
    pub inaccurate_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trials: Vec<TrialOutcome>,
}

impl VerifyReport {
    pub fn max_error(&self) -> f64 {
        self.trials.iter().map(|t| t.error).fold(0.0, f64::max)
    }

    /// Smallest inaccurate-model error over trials with `|sin(2 phi_r)| > threshold`.
    pub fn min_inaccurate_error(&self, threshold: f64) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| (2.0 * t.phi_r).sin().abs() > threshold)
            .map(|t| t.inaccurate_error)
            .reduce(f64::min)
    }
}

/// Random-trial comparison of [`passband_chain`] against [`predicted_output`].
///
/// Each trial draws LO phases in `[0, 2 pi)`, delays in `[0, 0.1/F]`, random
/// filters and channel, and unit-magnitude symbols.
pub fn verify_model(cfg: &PassbandConfig, trials: usize, seed: u64) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::Config("trial count must be at least 1".into()));
    }
    cfg.validate()?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng::stream(seed, trial as u64, Purpose::Oracle, 0);
            let max_delay = 0.1 / cfg.grid.spacing();
            let trial_cfg = PassbandConfig {
                phi_t: rng.gen_range(0.0..2.0 * PI),
                phi_r: rng.gen_range(0.0..2.0 * PI),
                tau_t: rng.gen_range(0.0..=max_delay),
                tau_r: rng.gen_range(0.0..=max_delay),
                ..*cfg
            };
            let filters = LinkFilters::random(&cfg.grid, &mut rng);
            let x: Vec<Complex64> = (0..cfg.grid.len())
                .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))
                .collect();
            let y = passband_chain(&x, &trial_cfg, &filters)?;
            let correct = predicted_output(&x, &trial_cfg, &filters, SignModel::Correct)?;
            let inaccurate = predicted_output(&x, &trial_cfg, &filters, SignModel::Inaccurate)?;
            Ok(TrialOutcome {
                phi_r: trial_cfg.phi_r,
                error: max_relative_error(&y, &correct),
                inaccurate_error: max_relative_error(&y, &inaccurate),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyReport { trials: outcomes })
}
