use std::collections::HashSet;

use coherent_tdd::calibration::CalibrationMode;
use coherent_tdd::channel_model::Scenario;
use coherent_tdd::estimation::EstimationMode;
use coherent_tdd::experiment::{
    coherence_oracle, emit_csv, headline_sweep, run, run_matrix, run_to_dir, two_trp_config,
    MetricsFrame, RunConfig, CSV_COLUMNS,
};
use coherent_tdd::hw_model::SignModel;
use coherent_tdd::phase_noise::Locking;

fn config(horizon: usize, trials: usize) -> RunConfig {
    RunConfig {
        horizon,
        trials,
        ..RunConfig::default()
    }
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn csv_has_one_row_per_trial_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    emit_csv(&run(&config(3, 2)).unwrap(), &path).unwrap();
    let (header, rows) = read_csv(&path);
    assert_eq!(header, CSV_COLUMNS);
    assert_eq!(rows.len(), 6);
    // Nine significant digits in scientific notation.
    let sinr = &rows[0][3];
    let mantissa = sinr.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 9, "{sinr}");
}

#[test]
fn empty_frame_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_csv(&MetricsFrame::default(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", CSV_COLUMNS.join(",")));
}

#[test]
fn unwritable_path_names_the_file() {
    let err = emit_csv(
        &MetricsFrame::default(),
        std::path::Path::new("/nonexistent/dir/x.csv"),
    )
    .unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/x.csv"), "{err}");
}

#[test]
fn sweep_points_share_channels() {
    let base = config(2, 3);
    let hashes: Vec<Vec<u64>> = headline_sweep()
        .iter()
        .map(|p| {
            run(&p.apply(&base))
                .unwrap()
                .rows
                .iter()
                .map(|r| r.channel_hash)
                .collect()
        })
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    let per_trial: HashSet<u64> = hashes[0].iter().copied().collect();
    assert_eq!(per_trial.len(), 3);
}

#[test]
fn different_seed_changes_output() {
    let a = run(&config(2, 2)).unwrap();
    let b = run(&RunConfig {
        seed: 2,
        ..config(2, 2)
    })
    .unwrap();
    assert_ne!(a.rows[0].channel_hash, b.rows[0].channel_hash);
}

#[test]
fn single_tuple_matrix_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(4, 2);
    let outputs = run_matrix(&cfg, &[cfg.point()], dir.path()).unwrap();
    assert_eq!(outputs.len(), 1);
    let direct = dir.path().join("direct.csv");
    emit_csv(&run(&cfg).unwrap(), &direct).unwrap();
    assert_eq!(
        std::fs::read(&outputs[0].csv).unwrap(),
        std::fs::read(&direct).unwrap()
    );

    let manifest: toml::Table = std::fs::read_to_string(dir.path().join("manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(1));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 1);
}

#[test]
fn matrix_rejects_empty_and_duplicate_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(1, 1);
    assert!(run_matrix(&cfg, &[], dir.path()).is_err());
    assert!(run_matrix(&cfg, &[cfg.point(), cfg.point()], dir.path()).is_err());
}

#[test]
fn summary_file_has_confidence_interval() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = run_to_dir(&config(5, 4), dir.path()).unwrap();
    let (header, rows) = read_csv(&out.summary);
    assert_eq!(
        header,
        [
            "step",
            "time_ms",
            "metric",
            "trials",
            "mean",
            "std_error",
            "ci95_low",
            "ci95_high"
        ]
    );
    assert_eq!(rows.len(), 5);
    for row in rows {
        let v: Vec<f64> = [4, 5, 6, 7]
            .iter()
            .map(|&i| row[i].parse().unwrap())
            .collect();
        assert!(v[2] <= v[0] && v[0] <= v[3]);
        assert!((v[3] - v[0] - 1.96 * v[1]).abs() < 1e-6 * v[0].abs().max(1.0));
    }
}

#[test]
fn ota_cost_per_recalibration_period() {
    for (horizon, k) in [(40, 10), (40, 8), (30, 7), (12, 1)] {
        let cfg = RunConfig {
            calibration_period: k,
            ..config(horizon, 1)
        };
        let last = run(&cfg).unwrap().rows.last().unwrap().ota_slots;
        let per_cluster = 2 * (cfg.scenario.trx_per_cluster() as u64 - 1);
        let events = horizon.div_ceil(k) as u64;
        assert_eq!(
            last,
            cfg.scenario.n_clusters() as u64 * per_cluster * events,
            "horizon {horizon}, k {k}"
        );
        if horizon % k == 0 {
            assert_eq!(events, (horizon / k) as u64);
        }
    }
    let none = RunConfig {
        calibration: CalibrationMode::None,
        ..config(5, 1)
    };
    assert!(run(&none).unwrap().rows.iter().all(|r| r.ota_slots == 0));
}

#[test]
fn curve_ordering_at_step_100() {
    // locked > recalibrated every 30 steps > calibrated once > blind, each by more than 1 dB.
    let base = config(101, 100);
    let cfgs = [
        RunConfig {
            locking: Locking::LockedPerCluster,
            ..base.clone()
        },
        RunConfig {
            calibration_period: 30,
            ..base.clone()
        },
        base.clone(),
        RunConfig {
            calibration: CalibrationMode::Perfect,
            estimation: EstimationMode::Blind,
            ..base.clone()
        },
    ];
    let at100: Vec<f64> = cfgs
        .iter()
        .map(|c| run(c).unwrap().mean_at("mean_sinr_db", 100).unwrap())
        .collect();
    for w in at100.windows(2) {
        assert!(w[0] - w[1] > 1.0, "{at100:?}");
    }
}

#[test]
fn blind_degrades_while_dmrs_tracks_the_ue() {
    // Only the UE LO drifts: DMRS is unaffected, blind detection is not.
    let base = RunConfig {
        locking: Locking::LockedGlobal,
        calibration: CalibrationMode::Perfect,
        scenario: Scenario {
            sigma2: 0.0,
            sigma2_ue: Some(0.01),
            ..Scenario::default()
        },
        ..config(60, 40)
    };
    let dmrs = run(&base).unwrap();
    let blind = run(&RunConfig {
        estimation: EstimationMode::Blind,
        ..base.clone()
    })
    .unwrap();
    let (d0, d59) = (
        dmrs.mean_at("mean_distortion", 0).unwrap(),
        dmrs.mean_at("mean_distortion", 59).unwrap(),
    );
    assert!((d59 / d0 - 1.0).abs() < 1e-9);
    let (b0, b59) = (
        blind.mean_at("mean_distortion", 0).unwrap(),
        blind.mean_at("mean_distortion", 59).unwrap(),
    );
    assert!((b0 / d0 - 1.0).abs() < 1e-9);
    assert!(b59 > 10.0 * b0, "{b0} -> {b59}");
}

#[test]
fn more_srs_does_not_help_blind_detection() {
    let base = RunConfig {
        calibration: CalibrationMode::Perfect,
        estimation: EstimationMode::Blind,
        ..config(60, 40)
    };
    let once = RunConfig {
        scenario: Scenario {
            srs_period: 0,
            ..base.scenario.clone()
        },
        ..base.clone()
    };
    let every = run(&base).unwrap().mean_at("mean_sinr_db", 59).unwrap();
    let single = run(&once).unwrap().mean_at("mean_sinr_db", 59).unwrap();
    assert!(
        every < single,
        "re-sounding {every} dB vs single snapshot {single} dB"
    );
}

#[test]
fn two_trp_setup_matches_coherence_oracle_exactly_per_trial() {
    // With unit gains, |a[n]|^2 / |a[0]|^2 = cos^2(psi / 2), psi the stale
    // c-factor error 2 (d_phi_2 - d_phi_1).
    let cfg = two_trp_config(0.01, 30, 50, 9);
    let frame = run(&cfg).unwrap();
    for t in 0..cfg.trials {
        let rows: Vec<_> = frame.rows.iter().filter(|r| r.trial == t).collect();
        assert!((rows[0].mean_signal_power - 2.0).abs() < 1e-12);
        for r in &rows {
            assert!(r.mean_signal_power <= 2.0 + 1e-12);
        }
    }
    assert!((coherence_oracle(25, 0.01) - (1.0 + (-1f64).exp()) / 2.0).abs() < 1e-15);
}

#[test]
fn inter_cluster_leakage_lowers_sinr() {
    let base = config(1, 20);
    let leaky = RunConfig {
        scenario: Scenario {
            inter_cluster_gain: 0.1,
            ..Scenario::default()
        },
        ..base.clone()
    };
    let clean = run(&base).unwrap().mean_at("mean_sinr_db", 0).unwrap();
    let dirty = run(&leaky).unwrap().mean_at("mean_sinr_db", 0).unwrap();
    assert!(dirty < clean - 3.0, "{clean} vs {dirty}");
}

#[test]
fn noisy_pilots_cost_snr() {
    let base = RunConfig {
        locking: Locking::LockedGlobal,
        ..config(1, 50)
    };
    let noisy = RunConfig {
        scenario: Scenario {
            srs_noise_std: 0.1,
            dmrs_noise_std: 0.1,
            calibration_noise_std: 0.01,
            ..Scenario::default()
        },
        ..base.clone()
    };
    let clean = run(&base).unwrap().mean_at("mean_sinr_db", 0).unwrap();
    let dirty = run(&noisy).unwrap().mean_at("mean_sinr_db", 0).unwrap();
    assert!(dirty < clean - 1.0, "{clean} vs {dirty}");
}

#[test]
fn inaccurate_model_is_flat_for_any_topology() {
    for locking in [
        Locking::FreeRunningPerTrx,
        Locking::LockedPerTrp,
        Locking::LockedGlobal,
    ] {
        let cfg = RunConfig {
            model: SignModel::Inaccurate,
            calibration: CalibrationMode::None,
            locking,
            ..config(50, 5)
        };
        let frame = run(&cfg).unwrap();
        let first = frame.mean_at("mean_sinr_db", 0).unwrap();
        for n in 1..50 {
            assert!((frame.mean_at("mean_sinr_db", n).unwrap() - first).abs() < 1e-9);
        }
    }
}
