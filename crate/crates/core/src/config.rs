//! TOML run configuration.
//!
//! ```toml
//! preset = "desk"            # optional: "desk" or "paper"
//! model = "correct"          # top-level keys fill RunConfig
//! locking = "free-running-per-trx"
//! horizon = 200
//!
//! [scenario]                 # overrides on top of the preset
//! sigma2 = 0.01
//!
//! [[sweep]]                  # optional; used by `sweep`
//! model = "inaccurate"
//! locking = "free-running-per-trx"
//! calibration = "none"
//! estimation = "dmrs"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::channel_model::{desk_preset, paper_preset, Scenario};
use crate::error::{Error, Result};
use crate::experiment::{RunConfig, SweepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn scenario(self) -> Scenario {
        match self {
            Preset::Desk => desk_preset(),
            Preset::Paper => paper_preset(),
        }
    }
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub run: RunConfig,
    /// Empty when the file has no `[[sweep]]` entries.
    pub sweep: Vec<SweepPoint>,
}

fn config_error(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{what}: {e}"))
}

/// Parse config text. `preset` overrides a `preset` key in the file.
pub fn parse(text: &str, preset: Option<Preset>) -> Result<ConfigFile> {
    let mut table: Table = text
        .parse()
        .map_err(|e| config_error("malformed TOML", e))?;

    let file_preset = match table.remove("preset") {
        Some(v) => Some(Preset::deserialize(v).map_err(|e| config_error("preset", e))?),
        None => None,
    };
    let base = preset.or(file_preset).unwrap_or(Preset::Desk).scenario();

    let mut scenario = match Value::try_from(base).map_err(|e| config_error("preset", e))? {
        Value::Table(t) => t,
        _ => unreachable!("a struct serializes to a table"),
    };
    match table.remove("scenario") {
        Some(Value::Table(overrides)) => scenario.extend(overrides),
        Some(_) => return Err(Error::Config("[scenario] must be a table".into())),
        None => {}
    }
    table.insert("scenario".into(), Value::Table(scenario));

    let sweep = match table.remove("sweep") {
        Some(v) => Vec::<SweepPoint>::deserialize(v).map_err(|e| config_error("[[sweep]]", e))?,
        None => Vec::new(),
    };
    let run =
        RunConfig::deserialize(Value::Table(table)).map_err(|e| config_error("run settings", e))?;
    run.validate()?;
    Ok(ConfigFile { run, sweep })
}

pub fn load(path: &Path, preset: Option<Preset>) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, preset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationMode;
    use crate::hw_model::SignModel;
    use crate::phase_noise::Locking;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse("", None).unwrap();
        assert_eq!(cfg.run, RunConfig::default());
        assert!(cfg.sweep.is_empty());
    }

    #[test]
    fn scenario_overrides_sit_on_the_preset() {
        let cfg = parse(
            "preset = 'paper'\nhorizon = 5\n[scenario]\nsigma2 = 0.02\n",
            None,
        )
        .unwrap();
        assert_eq!(cfg.run.horizon, 5);
        assert_eq!(cfg.run.scenario.sigma2, 0.02);
        assert_eq!(cfg.run.scenario.n_trp, 16);
        let desk = parse("preset = 'paper'\n", Some(Preset::Desk)).unwrap();
        assert_eq!(desk.run.scenario, desk_preset());
    }

    #[test]
    fn sweep_entries() {
        let text = r#"
            [[sweep]]
            model = "inaccurate"
            locking = "free-running-per-trx"
            calibration = "none"
            estimation = "dmrs"
            [[sweep]]
            model = "correct"
            locking = "locked-per-cluster"
            calibration = "relative"
            calibration_period = 10
            estimation = "genie"
        "#;
        let cfg = parse(text, None).unwrap();
        assert_eq!(cfg.sweep.len(), 2);
        assert_eq!(cfg.sweep[0].model, SignModel::Inaccurate);
        assert_eq!(cfg.sweep[1].locking, Locking::LockedPerCluster);
        assert_eq!(cfg.sweep[1].calibration, CalibrationMode::Relative);
        assert_eq!(cfg.sweep[1].calibration_period, Some(10));
    }

    #[test]
    fn typos_are_rejected() {
        assert!(parse("horizn = 3", None).is_err());
        assert!(parse("[scenario]\nn_trps = 3", None).is_err());
        assert!(parse("model = 'exact'", None).is_err());
        assert!(parse("preset = 'huge'", None).is_err());
        assert!(parse("horizon = 0", None).is_err());
        assert!(parse("scenario = 3", None).is_err());
    }
}
