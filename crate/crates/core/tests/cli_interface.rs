mod common;

use std::path::Path;
use std::process::{Command, Output};

use thz_mimo::cli::{
    emit_csv, list_presets, parse_sweep_csv, preset, resolve_scenario, run_scenario, RunOptions,
    Variant, SWEEP_HEADER,
};
use thz_mimo::spectra::parse_spectrum;

fn thz_mimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thz-mimo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("THZ_MIMO_SPECTRA_DIR")
        .output()
        .expect("binary runs")
}

fn spectra_arg() -> String {
    common::spectra_dir().to_str().unwrap().to_string()
}

#[test]
fn list_presets_prints_every_preset() {
    let out = thz_mimo(&["list-presets"]);
    assert!(out.status.success());
    let listed: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(listed, list_presets());
}

#[test]
fn smoke_preset_writes_sorted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3.csv");
    let status = thz_mimo(&[
        "run",
        "--preset",
        "fig3_tropic_d10m_1mw",
        "--smoke",
        "--spectra-dir",
        &spectra_arg(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(SWEEP_HEADER));
    let rows = parse_sweep_csv(&text).unwrap();
    assert_eq!(rows.len(), 46 * 4);
    assert!(rows.windows(2).all(|w| w[0].frequency <= w[1].frequency));
    assert!(rows
        .iter()
        .all(|r| r.distance == 10.0 && r.transmit_power == 1e-3));
    for chunk in rows.chunks(4) {
        let order: Vec<Variant> = chunk.iter().map(|r| r.variant).collect();
        assert_eq!(order, Variant::CAPACITY_ALL);
    }
}

#[test]
fn stdout_output_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("att.csv");
    let args = [
        "run",
        "--preset",
        "attenuation_fig2b",
        "--smoke",
        "--spectra-dir",
    ];
    let spectra = spectra_arg();
    let to_file = thz_mimo(
        &[
            &args[..],
            &[spectra.as_str(), "--out", path.to_str().unwrap()],
        ]
        .concat(),
    );
    assert!(to_file.status.success());
    let to_stdout = thz_mimo(&[&args[..], &[spectra.as_str()]].concat());
    assert!(to_stdout.status.success());
    assert_eq!(std::fs::read(&path).unwrap(), to_stdout.stdout);
    let rows = parse_sweep_csv(&String::from_utf8(to_stdout.stdout).unwrap()).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.technique_str() == "none" && r.mean_capacity.is_nan()));
}

#[test]
fn spectra_dir_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_thz-mimo"))
        .args(["run", "--preset", "attenuation_fig2b_winter", "--smoke"])
        .env("THZ_MIMO_SPECTRA_DIR", common::spectra_dir())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn config_file_overrides_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "[scenario]\nk_per_m = 0.01, 10\nvariants = bf_rerad\n[grid]\nfrequencies_hz = 3e11, 4e11\n\
         distances_m = 0.5\n[array]\nantennas = 4\n[montecarlo]\ntrials = 3\n",
    )
    .unwrap();
    let out = thz_mimo(&[
        "run",
        "--preset",
        "fig1_ksweep",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = parse_sweep_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter()
            .map(|r| (r.frequency, r.absorption))
            .collect::<Vec<_>>(),
        vec![(3e11, 0.01), (3e11, 10.0), (4e11, 0.01), (4e11, 10.0)]
    );
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[grid]\ndistances_m = -1\n[array]\nantennas = 10\n").unwrap();
    let out = thz_mimo(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("perfect square") && stderr.contains("distances"),
        "{stderr}"
    );

    assert_eq!(
        thz_mimo(&["run", "--preset", "no_such_preset"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(thz_mimo(&["run"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = thz_mimo(&[
        "run",
        "--preset",
        "fig3_tropic_d1m_1mw",
        "--smoke",
        "--spectra-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.mix"), "name=bad\nH2O=100\n").unwrap();
    std::fs::write(
        dir.path().join("H2O.csv"),
        "frequency_hz,k_per_m\n1e11,0.1\n2e11,-0.1\n",
    )
    .unwrap();
    let out = thz_mimo(&[
        "mix",
        "--mixture",
        dir.path().join("bad.mix").to_str().unwrap(),
        "--spectra-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative coefficient at line 3"));
}

#[test]
fn mix_subcommand_produces_loadable_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tropic.csv");
    let mixture = common::spectra_dir().join("tropic.mix");
    let status = thz_mimo(&[
        "mix",
        "--mixture",
        mixture.to_str().unwrap(),
        "--spectra-dir",
        &spectra_arg(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let spectrum = parse_spectrum(&std::fs::read_to_string(&out).unwrap(), "tropic").unwrap();
    assert_eq!(spectrum.len(), 3601);
    assert!(spectrum.sample(557e9).unwrap() > spectrum.sample(500e9).unwrap());
}

#[test]
fn dump_matrix_is_reproducible() {
    let args = [
        "dump-matrix",
        "--antennas",
        "4",
        "--frequency",
        "3e11",
        "--distance",
        "1",
        "--k",
        "0.5",
        "--seed",
        "9",
    ];
    let a = thz_mimo(&args);
    let b = thz_mimo(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let h =
        thz_mimo::channel::ChannelMatrix::from_csv(&String::from_utf8(a.stdout).unwrap()).unwrap();
    assert_eq!((h.nrows(), h.ncols(), h.seed), (4, 4, Some(9)));
}

#[test]
fn library_run_round_trips_through_csv() {
    let scenario = resolve_scenario(&RunOptions {
        preset: Some("fig1_ksweep".into()),
        antennas: Some(4),
        trials: Some(4),
        ..Default::default()
    })
    .unwrap();
    let rows = run_scenario(&scenario, Path::new("unused")).unwrap();
    assert_eq!(rows.len(), scenario.expected_rows());
    let mut buf = Vec::new();
    emit_csv(&rows, &mut buf).unwrap();
    let back = parse_sweep_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.variant, b.variant);
        for (x, y) in [
            (a.mean_capacity, b.mean_capacity),
            (a.k_factor, b.k_factor),
            (a.total_attenuation_db, b.total_attenuation_db),
        ] {
            assert!(x == y || (x - y).abs() <= 1e-8 * x.abs(), "{x} vs {y}");
        }
    }
}

#[test]
fn seed_changes_random_columns_only() {
    let base = RunOptions {
        preset: Some("fig3_tropic_d0.1m_1mw".into()),
        smoke: true,
        ..Default::default()
    };
    let dir = common::spectra_dir();
    let mut a = resolve_scenario(&base).unwrap();
    a.frequencies.truncate(3);
    let mut b = a.clone();
    b.seed += 1;
    let (ra, rb) = (
        run_scenario(&a, &dir).unwrap(),
        run_scenario(&b, &dir).unwrap(),
    );
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.total_attenuation_db, y.total_attenuation_db);
        if matches!(
            x.variant,
            Variant::Capacity(_, thz_mimo::capacity::Reradiation::Ignored)
        ) {
            assert_eq!(x.mean_capacity, y.mean_capacity);
        }
    }
    assert!(ra
        .iter()
        .zip(&rb)
        .any(|(x, y)| x.mean_capacity != y.mean_capacity));
    assert!(preset("fig3_tropic_d0.1m_1mw").is_some());
}
