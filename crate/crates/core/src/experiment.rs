//! Time-stepped Monte-Carlo driver.
//!
//! A trial draws one static channel realization and initial LO phases, then
//! walks the LOs forward one sample at a time. At every step the true UL and
//! DL channels are rebuilt from the current chains, the base station precodes
//! with zero-forcing on its (possibly stale) calibrated estimate, and the UE
//! equalizes with its effective-channel estimate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    apply_calibration, calibrate_cluster, ue_reciprocity_factor, CalibrationMode, Measurement,
};
use crate::channel_model::{draw_channels, Scenario};
use crate::error::{Error, Result};
use crate::estimation::{
    blind_estimate, dmrs_estimate, srs_estimate, EffectiveChannel, EstimationMode,
};
use crate::hw_model::{
    dl_channel, rx_transfer, tx_transfer, ul_channel, FrequencyGrid, SignModel, TrxChain,
};
use crate::phase_noise::{init_phases, LoStreams, LoTopology, Locking};
use crate::precoding::{
    ue_metrics_from_product, zero_forcing, MetricMode, PowerNormalization, UeMetrics,
    DEFAULT_CONDITION_LIMIT,
};
use crate::rng::{stream, Purpose};
use crate::CMatrix;

/// Everything that defines a run. Deserializes from the config file, with
/// unspecified keys taking the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: SignModel,
    pub locking: Locking,
    pub calibration: CalibrationMode,
    /// Steps between calibration events; 0 calibrates only at `n = 0`.
    pub calibration_period: usize,
    pub estimation: EstimationMode,
    /// Number of recorded time steps, `n = 0 .. horizon`.
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Metric summarized across trials.
    pub metric: MetricMode,
    pub normalization: PowerNormalization,
    pub condition_limit: f64,
    pub scenario: Scenario,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: SignModel::Correct,
            locking: Locking::FreeRunningPerTrx,
            calibration: CalibrationMode::Relative,
            calibration_period: 0,
            estimation: EstimationMode::Dmrs,
            horizon: 200,
            trials: 100,
            seed: 1,
            metric: MetricMode::Sinr,
            normalization: PowerNormalization::PerColumn,
            condition_limit: DEFAULT_CONDITION_LIMIT,
            scenario: Scenario::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::Config(format!(
                "horizon ({}) and trials ({}) must be at least 1",
                self.horizon, self.trials
            )));
        }
        if !(self.condition_limit > 1.0) {
            return Err(Error::Config(format!(
                "condition limit {} must exceed 1",
                self.condition_limit
            )));
        }
        self.topology().map(|_| ())
    }

    pub fn topology(&self) -> Result<LoTopology> {
        let s = &self.scenario;
        LoTopology::new(self.locking, s.n_trp, s.trx_per_trp, s.cluster_size)
    }

    /// The sweep coordinates of this run.
    pub fn point(&self) -> SweepPoint {
        SweepPoint {
            model: self.model,
            locking: self.locking,
            calibration: self.calibration,
            calibration_period: Some(self.calibration_period),
            estimation: self.estimation,
        }
    }

    /// Stable file stem naming the sweep tuple.
    pub fn label(&self) -> String {
        let mut cal = self.calibration.label().to_string();
        if self.calibration != CalibrationMode::None && self.calibration_period > 0 {
            write!(cal, "-every{}", self.calibration_period).expect("writing to a String");
        }
        format!(
            "{}_{}_{}_{}",
            self.model.label(),
            self.locking.label(),
            cal,
            self.estimation.label()
        )
    }

    fn calibrates_at(&self, n: usize) -> bool {
        self.calibration != CalibrationMode::None
            && (n == 0 || (self.calibration_period > 0 && n % self.calibration_period == 0))
    }

    fn sounds_at(&self, n: usize) -> bool {
        let p = self.scenario.srs_period;
        n == 0 || (p > 0 && n % p == 0)
    }
}

/// One sweep coordinate: `(model, topology, calibration, estimation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub model: SignModel,
    pub locking: Locking,
    pub calibration: CalibrationMode,
    /// Overrides the base calibration period when present.
    #[serde(default)]
    pub calibration_period: Option<usize>,
    pub estimation: EstimationMode,
}

impl SweepPoint {
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            model: self.model,
            locking: self.locking,
            calibration: self.calibration,
            calibration_period: self.calibration_period.unwrap_or(base.calibration_period),
            estimation: self.estimation,
            ..base.clone()
        }
    }
}

/// The four curves of the drift experiment.
///
/// The blind curve uses perfect calibration, whose `gamma_UE` is captured once
/// at `n = 0`: blind detection is correct at that instant only.
pub fn headline_sweep() -> Vec<SweepPoint> {
    let point = |model, locking, calibration, estimation| SweepPoint {
        model,
        locking,
        calibration,
        calibration_period: None,
        estimation,
    };
    vec![
        point(
            SignModel::Inaccurate,
            Locking::FreeRunningPerTrx,
            CalibrationMode::None,
            EstimationMode::Dmrs,
        ),
        point(
            SignModel::Correct,
            Locking::FreeRunningPerTrx,
            CalibrationMode::Perfect,
            EstimationMode::Blind,
        ),
        point(
            SignModel::Correct,
            Locking::FreeRunningPerTrx,
            CalibrationMode::Relative,
            EstimationMode::Dmrs,
        ),
        point(
            SignModel::Correct,
            Locking::LockedPerCluster,
            CalibrationMode::Relative,
            EstimationMode::Dmrs,
        ),
    ]
}

/// Metrics of one (trial, step), averaged over UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub trial: usize,
    pub step: usize,
    pub time_ms: f64,
    /// Mean over UEs of the post-detection SINR `1 / d_k` in dB.
    pub mean_sinr_db: f64,
    /// Mean over UEs of the precoded-channel SINR in dB, before equalization.
    pub mean_precoder_sinr_db: f64,
    pub mean_distortion: f64,
    pub mean_spectral_efficiency: f64,
    /// Mean `|a_k|^2`.
    pub mean_signal_power: f64,
    /// OTA calibration slots spent so far, summed over clusters.
    pub ota_slots: u64,
    /// Steps since the calibration in use was captured.
    pub staleness: u64,
    pub channel_hash: u64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "trial",
    "step",
    "time_ms",
    "mean_sinr_db",
    "mean_precoder_sinr_db",
    "mean_distortion",
    "mean_spectral_efficiency",
    "mean_signal_power",
    "ota_slots",
    "staleness",
    "channel_hash",
];

impl MetricsRow {
    fn from_ues(trial: usize, step: usize, time_ms: f64, ues: &[UeMetrics]) -> Self {
        let n = ues.len() as f64;
        let mean = |f: &dyn Fn(&UeMetrics) -> f64| ues.iter().map(f).sum::<f64>() / n;
        MetricsRow {
            trial,
            step,
            time_ms,
            mean_sinr_db: mean(&|m| db(m.post_detection_sinr())),
            mean_precoder_sinr_db: mean(&|m| db(m.sinr)),
            mean_distortion: mean(&|m| m.distortion),
            mean_spectral_efficiency: mean(&|m| m.spectral_efficiency()),
            mean_signal_power: mean(&|m| m.signal_power),
            ota_slots: 0,
            staleness: 0,
            channel_hash: 0,
        }
    }

    /// Value of a floating-point CSV column by name.
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "time_ms" => self.time_ms,
            "mean_sinr_db" => self.mean_sinr_db,
            "mean_precoder_sinr_db" => self.mean_precoder_sinr_db,
            "mean_distortion" => self.mean_distortion,
            "mean_spectral_efficiency" => self.mean_spectral_efficiency,
            "mean_signal_power" => self.mean_signal_power,
            _ => return None,
        })
    }

    fn record(&self) -> [String; 11] {
        [
            self.trial.to_string(),
            self.step.to_string(),
            sig9(self.time_ms),
            sig9(self.mean_sinr_db),
            sig9(self.mean_precoder_sinr_db),
            sig9(self.mean_distortion),
            sig9(self.mean_spectral_efficiency),
            sig9(self.mean_signal_power),
            self.ota_slots.to_string(),
            self.staleness.to_string(),
            format!("{:016x}", self.channel_hash),
        ]
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Nine significant digits.
fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// All rows of a run, trial-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsFrame {
    pub rows: Vec<MetricsRow>,
}

impl MetricsFrame {
    /// Rows of one step across trials.
    pub fn at_step(&self, step: usize) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.step == step)
    }

    /// Trial average of a column at one step.
    pub fn mean_at(&self, column: &str, step: usize) -> Option<f64> {
        let values: Option<Vec<f64>> = self.at_step(step).map(|r| r.column(column)).collect();
        let values = values?;
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Per-step mean, standard error and normal 95% interval of `column`.
    pub fn summarize(&self, column: &str) -> Result<Vec<SummaryRow>> {
        if self
            .rows
            .first()
            .is_some_and(|r| r.column(column).is_none())
        {
            return Err(Error::Config(format!("unknown metric column {column:?}")));
        }
        let horizon = self.rows.iter().map(|r| r.step + 1).max().unwrap_or(0);
        let mut groups: Vec<Vec<&MetricsRow>> = vec![Vec::new(); horizon];
        for row in &self.rows {
            groups[row.step].push(row);
        }
        Ok(groups
            .into_iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .map(|(step, g)| {
                let values: Vec<f64> = g
                    .iter()
                    .map(|r| r.column(column).expect("checked above"))
                    .collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let std_error = if values.len() > 1 {
                    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                SummaryRow {
                    step,
                    time_ms: g[0].time_ms,
                    trials: values.len(),
                    mean,
                    std_error,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: usize,
    pub time_ms: f64,
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Run every trial of `cfg`; trials run in parallel and are assembled in order.
pub fn run(cfg: &RunConfig) -> Result<MetricsFrame> {
    cfg.validate()?;
    let per_trial: Result<Vec<Vec<MetricsRow>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect();
    Ok(MetricsFrame {
        rows: per_trial?.into_iter().flatten().collect(),
    })
}

fn random_offsets<R: Rng + ?Sized>(chain: &mut TrxChain, spread: f64, rng: &mut R) {
    if spread > 0.0 {
        chain.dphi_t = rng.gen_range(-spread..=spread);
        chain.dphi_r = rng.gen_range(-spread..=spread);
    }
}

struct Transfers {
    t: Vec<Complex64>,
    r: Vec<Complex64>,
}

fn transfers(chains: &[TrxChain], grid: &FrequencyGrid, model: SignModel) -> Result<Transfers> {
    let t = chains
        .iter()
        .map(|c| tx_transfer(c, grid, 0, model))
        .collect::<Result<_>>()?;
    let r = chains
        .iter()
        .map(|c| rx_transfer(c, grid, 0, model))
        .collect::<Result<_>>()?;
    Ok(Transfers { t, r })
}

/// One Monte-Carlo trial, `cfg.horizon` rows.
pub fn run_trial(cfg: &RunConfig, trial: usize) -> Result<Vec<MetricsRow>> {
    let s = &cfg.scenario;
    let seed = cfg.seed;
    let t64 = trial as u64;
    let ctx = |step: usize| move |e: Error| e.at_step(trial, step);
    let grid = FrequencyGrid::flat();
    let (n_ue, n_trx, n_clusters) = (s.n_ue, s.n_trx(), s.n_clusters());

    let channels = draw_channels(s, &mut stream(seed, t64, Purpose::Channel, 0)).map_err(ctx(0))?;
    let channel_hash = channels.fingerprint();

    let bs_topology = cfg.topology().map_err(ctx(0))?;
    let ue_topology = LoTopology::free_running(n_ue);
    let mut bs_streams = LoStreams::new(seed, t64, Purpose::BaseStationPhase, bs_topology.n_lo());
    let mut ue_streams = LoStreams::new(seed, t64, Purpose::UePhase, n_ue);
    let mut bs_phase =
        init_phases(&bs_topology, s.sigma2, s.sample_time, &mut bs_streams).map_err(ctx(0))?;
    let mut ue_phase =
        init_phases(&ue_topology, s.ue_sigma2(), s.sample_time, &mut ue_streams).map_err(ctx(0))?;

    let mut hw_rng = stream(seed, t64, Purpose::Hardware, 0);
    let mut bs_chains = vec![TrxChain::ideal(&grid); n_trx];
    let mut ue_chains = vec![TrxChain::ideal(&grid); n_ue];
    for chain in bs_chains.iter_mut().chain(ue_chains.iter_mut()) {
        random_offsets(chain, s.hw_phase_spread, &mut hw_rng);
    }

    let mut srs_rng = stream(seed, t64, Purpose::Srs, 0);
    let mut dmrs_rng = stream(seed, t64, Purpose::Dmrs, 0);
    let mut cal_rng = stream(seed, t64, Purpose::Calibration, 0);
    let meas = Measurement {
        noise_std: s.calibration_noise_std,
        ..Measurement::flat(cfg.model)
    };
    let noise_power = s.noise_power();

    let mut h_ul_est = CMatrix::zeros(n_ue, n_trx);
    let mut c = vec![Complex64::new(1.0, 0.0); n_trx];
    let mut gamma: Option<Vec<Complex64>> = None;
    let mut captured_at = 0usize;
    let mut ota_slots = 0u64;
    let mut rows = Vec::with_capacity(cfg.horizon);

    for n in 0..cfg.horizon {
        let at = ctx(n);
        if n > 0 {
            bs_phase = bs_phase.step(&mut bs_streams);
            ue_phase = ue_phase.step(&mut ue_streams);
        }
        for (i, chain) in bs_chains.iter_mut().enumerate() {
            chain.phi = bs_phase.trx_phase(&bs_topology, i);
        }
        for (k, chain) in ue_chains.iter_mut().enumerate() {
            chain.phi = ue_phase.phases[k];
        }
        let bs = transfers(&bs_chains, &grid, cfg.model).map_err(at)?;
        let ue = transfers(&ue_chains, &grid, cfg.model).map_err(at)?;
        let h_ul = CMatrix::from_fn(n_ue, n_trx, |k, i| {
            ul_channel(bs.r[i], channels.h_ue[(k, i)], ue.t[k])
        });
        let h_dl = CMatrix::from_fn(n_ue, n_trx, |k, i| {
            dl_channel(ue.r[k], channels.h_ue[(k, i)], bs.t[i])
        });

        if cfg.sounds_at(n) {
            h_ul_est = srs_estimate(&h_ul, s.srs_noise_std, s.n_srs, &mut srs_rng).map_err(at)?;
        }
        if cfg.calibrates_at(n) {
            let mut gammas = vec![Complex64::new(1.0, 0.0); n_ue];
            for cluster in 0..n_clusters {
                let trx = s.cluster_trx(cluster);
                let local = channels
                    .h_trp
                    .view((trx.start, trx.start), (trx.len(), trx.len()))
                    .clone_owned();
                let state = calibrate_cluster(
                    &bs_chains[trx.clone()],
                    &local,
                    &meas,
                    n as u64,
                    &mut cal_rng,
                )
                .map_err(|e| match e {
                    Error::CalibrationMeasurement {
                        trx: local_trx,
                        magnitude,
                        floor,
                    } => Error::CalibrationMeasurement {
                        trx: trx.start + local_trx,
                        magnitude,
                        floor,
                    },
                    other => other,
                })
                .map_err(at)?;
                c[trx.clone()].copy_from_slice(&state.c);
                ota_slots += state.ota_slots;
                if cfg.calibration == CalibrationMode::Perfect {
                    for k in s.cluster_ues(cluster) {
                        gammas[k] = ue_reciprocity_factor(
                            &bs_chains[trx.start],
                            &ue_chains[k],
                            &grid,
                            0,
                            cfg.model,
                        )
                        .map_err(at)?;
                    }
                }
            }
            if cfg.calibration == CalibrationMode::Perfect {
                gamma = Some(gammas);
            }
            captured_at = n;
        }

        let mut h_dl_est = apply_calibration(&h_ul_est, &c).map_err(at)?;
        if let Some(g) = &gamma {
            for (mut row, &gk) in h_dl_est.row_iter_mut().zip(g) {
                row *= gk;
            }
        }

        let hw = precoded_channel(cfg, &h_dl_est, &h_dl).map_err(at)?;
        let a = EffectiveChannel(hw.diagonal().iter().copied().collect());
        let a_hat = match cfg.estimation {
            EstimationMode::Dmrs => {
                dmrs_estimate(&a, s.dmrs_noise_std, s.n_dmrs, &mut dmrs_rng).map_err(at)?
            }
            EstimationMode::Blind => blind_estimate(&a),
            EstimationMode::Genie => a,
        };
        let ues = ue_metrics_from_product(&hw, &a_hat, noise_power).map_err(at)?;
        let mut row = MetricsRow::from_ues(trial, n, n as f64 * s.sample_time * 1e3, &ues);
        row.ota_slots = ota_slots;
        row.staleness = (n - captured_at) as u64;
        row.channel_hash = channel_hash;
        rows.push(row);
    }
    Ok(rows)
}

/// `H_DL W` with one zero-forcing precoder per cluster.
///
/// Without inter-cluster leakage only the diagonal blocks are formed.
fn precoded_channel(cfg: &RunConfig, h_dl_est: &CMatrix, h_dl: &CMatrix) -> Result<CMatrix> {
    let s = &cfg.scenario;
    let n_ue = s.n_ue;
    let mut hw = CMatrix::zeros(n_ue, n_ue);
    let precoders = (0..s.n_clusters())
        .map(|cl| {
            let (ues, trx) = (s.cluster_ues(cl), s.cluster_trx(cl));
            let est = h_dl_est
                .view((ues.start, trx.start), (ues.len(), trx.len()))
                .clone_owned();
            zero_forcing(&est, cfg.normalization, cfg.condition_limit).map_err(|e| match e {
                Error::Precoding {
                    ues: local,
                    condition,
                    limit,
                } => Error::Precoding {
                    ues: local.iter().map(|k| ues.start + k).collect(),
                    condition,
                    limit,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (cl_ue, _) in precoders.iter().enumerate() {
        let rows = s.cluster_ues(cl_ue);
        for (cl_tx, p) in precoders.iter().enumerate() {
            if cl_ue != cl_tx && s.inter_cluster_gain == 0.0 {
                continue;
            }
            let (cols, trx) = (s.cluster_ues(cl_tx), s.cluster_trx(cl_tx));
            let block = h_dl.view((rows.start, trx.start), (rows.len(), trx.len())) * &p.w;
            hw.view_mut((rows.start, cols.start), (rows.len(), cols.len()))
                .copy_from(&block);
        }
    }
    Ok(hw)
}

/// Write one header row and one row per (trial, step).
pub fn emit_csv(frame: &MetricsFrame, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CSV_COLUMNS)
        .map_err(|e| csv_error(path, e))?;
    for row in &frame.rows {
        w.write_record(row.record())
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-step mean with standard error and 95% interval of `column`.
pub fn emit_summary_csv(frame: &MetricsFrame, column: &str, path: &Path) -> Result<()> {
    let summary = frame.summarize(column)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "step",
        "time_ms",
        "metric",
        "trials",
        "mean",
        "std_error",
        "ci95_low",
        "ci95_high",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in &summary {
        let half = 1.96 * r.std_error;
        w.write_record([
            r.step.to_string(),
            sig9(r.time_ms),
            column.to_string(),
            r.trials.to_string(),
            sig9(r.mean),
            sig9(r.std_error),
            sig9(r.mean - half),
            sig9(r.mean + half),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, source)
}

/// Summary column for a metric mode.
pub fn metric_column(mode: MetricMode) -> &'static str {
    match mode {
        MetricMode::Sinr => "mean_sinr_db",
        MetricMode::Distortion => "mean_distortion",
    }
}

/// Files written for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub label: String,
    pub csv: PathBuf,
    pub summary: PathBuf,
}

/// Run `cfg` and write `<label>.csv` and `<label>_summary.csv` into `out_dir`.
pub fn run_to_dir(cfg: &RunConfig, out_dir: &Path) -> Result<(MetricsFrame, RunOutput)> {
    let frame = run(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let label = cfg.label();
    let csv = out_dir.join(format!("{label}.csv"));
    let summary = out_dir.join(format!("{label}_summary.csv"));
    emit_csv(&frame, &csv)?;
    emit_summary_csv(&frame, metric_column(cfg.metric), &summary)?;
    Ok((
        frame,
        RunOutput {
            label,
            csv,
            summary,
        },
    ))
}

/// Run each sweep point on top of `base`. All points share the master seed,
/// so they see identical channel realizations.
pub fn run_matrix(
    base: &RunConfig,
    sweep: &[SweepPoint],
    out_dir: &Path,
) -> Result<Vec<RunOutput>> {
    if sweep.is_empty() {
        return Err(Error::Config("sweep needs at least one tuple".into()));
    }
    let configs: Vec<RunConfig> = sweep.iter().map(|p| p.apply(base)).collect();
    for (i, a) in configs.iter().enumerate() {
        if configs[..i].iter().any(|b| b.label() == a.label()) {
            return Err(Error::Config(format!(
                "sweep tuple {} appears twice",
                a.label()
            )));
        }
    }
    let outputs = configs
        .iter()
        .map(|cfg| run_to_dir(cfg, out_dir).map(|(_, out)| out))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(base, &configs, &outputs, out_dir)?;
    Ok(outputs)
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    seed: u64,
    config_hash: String,
    runs: Vec<ManifestRun<'a>>,
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    label: &'a str,
    csv: String,
    summary: String,
    config_hash: String,
}

/// SHA-256 of the canonical TOML form of a configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    use sha2::{Digest, Sha256};
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}

/// Write `manifest.toml` next to the CSVs.
pub fn write_manifest(
    base: &RunConfig,
    configs: &[RunConfig],
    outputs: &[RunOutput],
    out_dir: &Path,
) -> Result<PathBuf> {
    let file_name = |p: &Path| {
        p.file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let runs = configs
        .iter()
        .zip(outputs)
        .map(|(cfg, out)| {
            Ok(ManifestRun {
                label: &out.label,
                csv: file_name(&out.csv),
                summary: file_name(&out.summary),
                config_hash: config_hash(cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: base.seed,
        config_hash: config_hash(base)?,
        runs,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = out_dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Mean of `cos^2(psi / 2)` for `psi ~ N(0, 8 n sigma2)`: the expected
/// coherence of two TRXs whose calibration is `n` steps stale.
pub fn coherence_oracle(n: usize, sigma2: f64) -> f64 {
    (1.0 + (-4.0 * n as f64 * sigma2).exp()) / 2.0
}

/// The two-TRX, one-UE, unit-gain setup used for the coherence check.
pub fn two_trp_config(sigma2: f64, horizon: usize, trials: usize, seed: u64) -> RunConfig {
    RunConfig {
        model: SignModel::Correct,
        locking: Locking::FreeRunningPerTrx,
        calibration: CalibrationMode::Relative,
        calibration_period: 0,
        estimation: EstimationMode::Dmrs,
        horizon,
        trials,
        seed,
        scenario: Scenario {
            n_trp: 2,
            trx_per_trp: 1,
            cluster_size: 2,
            n_ue: 1,
            fading: crate::channel_model::Fading::Unit,
            sigma2,
            ..Scenario::default()
        },
        ..RunConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherencePoint {
    pub step: usize,
    /// Trial mean of `|a[n]|^2 / |a[0]|^2`.
    pub simulated: f64,
    pub oracle: f64,
}

/// Simulated versus closed-form coherence of the two-TRX setup at `steps`.
pub fn coherence_experiment(
    sigma2: f64,
    steps: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<CoherencePoint>> {
    let horizon = steps.iter().max().map_or(1, |&m| m + 1);
    let frame = run(&two_trp_config(sigma2, horizon, trials, seed))?;
    let reference: Vec<f64> = frame.at_step(0).map(|r| r.mean_signal_power).collect();
    Ok(steps
        .iter()
        .map(|&step| {
            let ratio: f64 = frame
                .at_step(step)
                .zip(&reference)
                .map(|(r, p0)| r.mean_signal_power / p0)
                .sum();
            CoherencePoint {
                step,
                simulated: ratio / trials as f64,
                oracle: coherence_oracle(step, sigma2),
            }
        })
        .collect())
}
