//! Wiener LO phase noise under a configurable locking topology.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, StreamRng};

/// How base-station TRXs share local oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Locking {
    FreeRunningPerTrx,
    LockedPerTrp,
    LockedPerCluster,
    LockedGlobal,
}

impl Locking {
    pub fn label(self) -> &'static str {
        match self {
            Locking::FreeRunningPerTrx => "free-running-per-trx",
            Locking::LockedPerTrp => "locked-per-trp",
            Locking::LockedPerCluster => "locked-per-cluster",
            Locking::LockedGlobal => "locked-global",
        }
    }
}

/// Mapping from TRX index to the LO that drives it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoTopology {
    locking: Locking,
    trx_to_lo: Vec<usize>,
    n_lo: usize,
}

impl LoTopology {
    /// TRXs are numbered TRP-major: TRX `i` belongs to TRP `i / trx_per_trp`,
    /// and TRP `p` to cluster `p / cluster_size`.
    pub fn new(
        locking: Locking,
        n_trp: usize,
        trx_per_trp: usize,
        cluster_size: usize,
    ) -> Result<Self> {
        if n_trp == 0 || trx_per_trp == 0 || cluster_size == 0 || n_trp % cluster_size != 0 {
            return Err(Error::Config(format!(
                "invalid geometry: {n_trp} TRPs x {trx_per_trp} TRX, clusters of {cluster_size} TRPs"
            )));
        }
        let n_trx = n_trp * trx_per_trp;
        let trx_to_lo: Vec<usize> = (0..n_trx)
            .map(|i| match locking {
                Locking::FreeRunningPerTrx => i,
                Locking::LockedPerTrp => i / trx_per_trp,
                Locking::LockedPerCluster => i / trx_per_trp / cluster_size,
                Locking::LockedGlobal => 0,
            })
            .collect();
        let n_lo = trx_to_lo.last().map_or(0, |&lo| lo + 1);
        Ok(LoTopology {
            locking,
            trx_to_lo,
            n_lo,
        })
    }

    /// One independent LO per device (used for UEs).
    pub fn free_running(n: usize) -> Self {
        LoTopology {
            locking: Locking::FreeRunningPerTrx,
            trx_to_lo: (0..n).collect(),
            n_lo: n,
        }
    }

    pub fn locking(&self) -> Locking {
        self.locking
    }

    pub fn n_lo(&self) -> usize {
        self.n_lo
    }

    pub fn n_trx(&self) -> usize {
        self.trx_to_lo.len()
    }

    pub fn lo_of(&self, trx: usize) -> usize {
        self.trx_to_lo[trx]
    }
}

/// One random substream per LO.
#[derive(Debug, Clone)]
pub struct LoStreams {
    rngs: Vec<StreamRng>,
}

impl LoStreams {
    pub fn new(master_seed: u64, trial: u64, purpose: Purpose, n_lo: usize) -> Self {
        LoStreams {
            rngs: (0..n_lo)
                .map(|lo| rng::stream(master_seed, trial, purpose, lo as u64))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rngs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rngs.is_empty()
    }
}

/// Snapshot of every LO phase at time index `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    /// Unwrapped phase per LO, radians.
    pub phases: Vec<f64>,
    pub n: u64,
    /// Sampling time in seconds.
    pub sample_time: f64,
    /// Variance of one increment, rad^2.
    pub sigma2: f64,
}

/// Draw independent uniform initial phases, one per LO.
pub fn init_phases(
    topology: &LoTopology,
    sigma2: f64,
    sample_time: f64,
    streams: &mut LoStreams,
) -> Result<PhaseState> {
    if streams.len() != topology.n_lo() {
        return Err(Error::Dimension(format!(
            "{} streams for {} LOs",
            streams.len(),
            topology.n_lo()
        )));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Config(format!(
            "phase-noise variance must be non-negative, got {sigma2}"
        )));
    }
    let phases = streams
        .rngs
        .iter_mut()
        .map(|rng| rng.gen_range(0.0..2.0 * PI))
        .collect();
    Ok(PhaseState {
        phases,
        n: 0,
        sample_time,
        sigma2,
    })
}

impl PhaseState {
    /// `phi[n] = phi[n-1] + Delta`, `Delta ~ N(0, sigma2)`, independently per LO.
    pub fn step(&self, streams: &mut LoStreams) -> PhaseState {
        let increment = Normal::new(0.0, self.sigma2.sqrt()).expect("non-negative variance");
        let phases = self
            .phases
            .iter()
            .zip(streams.rngs.iter_mut())
            .map(|(&p, rng)| p + increment.sample(rng))
            .collect();
        PhaseState {
            phases,
            n: self.n + 1,
            ..*self
        }
    }

    /// Phase seen by TRX `trx` under `topology`.
    pub fn trx_phase(&self, topology: &LoTopology, trx: usize) -> f64 {
        self.phases[topology.lo_of(trx)]
    }

    pub fn elapsed(&self) -> f64 {
        self.n as f64 * self.sample_time
    }
}
