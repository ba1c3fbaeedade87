mod common;

use std::collections::BTreeMap;

use thz_mimo::cli::load_mixture_spectrum;
use thz_mimo::propagation::total_attenuation_db;
use thz_mimo::spectra::{parse_mixture, parse_spectrum};

const SPECIES: [&str; 8] = ["H2O", "O2", "N2", "CO2", "O3", "N2O", "CO", "CH4"];
const MIXTURES: [&str; 5] = [
    "tropic",
    "midlat_summer",
    "midlat_winter",
    "highlat_summer",
    "highlat_winter",
];

fn read(name: &str) -> String {
    std::fs::read_to_string(common::spectra_dir().join(name)).unwrap()
}

#[test]
fn every_species_file_parses_on_one_grid() {
    let spectra: BTreeMap<_, _> = SPECIES
        .iter()
        .map(|s| (*s, parse_spectrum(&read(&format!("{s}.csv")), s).unwrap()))
        .collect();
    let grid = spectra["H2O"].frequencies();
    assert_eq!(grid.len(), 3601);
    assert_eq!((grid[0], grid[grid.len() - 1]), (1e11, 1e12));
    for s in spectra.values() {
        assert_eq!(s.frequencies(), grid);
        assert!(s.coefficients().iter().all(|k| k.is_finite() && *k >= 0.0));
    }
}

#[test]
fn water_lines_sit_at_known_frequencies() {
    let h2o = parse_spectrum(&read("H2O.csv"), "H2O").unwrap();
    let peak_near = |lo: f64, hi: f64| {
        h2o.frequencies()
            .iter()
            .zip(h2o.coefficients())
            .filter(|(f, _)| (lo..=hi).contains(*f))
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(f, _)| *f)
            .unwrap()
    };
    for line in [183.31e9, 556.94e9, 752.03e9, 987.93e9] {
        assert!(
            (peak_near(line - 5e9, line + 5e9) - line).abs() <= 0.5e9,
            "{line}"
        );
    }
    let o2 = parse_spectrum(&read("O2.csv"), "O2").unwrap();
    assert!(o2.sample(118.75e9).unwrap() > 10.0 * o2.sample(140e9).unwrap());
}

#[test]
fn mixture_files_sum_to_one() {
    for name in MIXTURES {
        let m = parse_mixture(&read(&format!("{name}.mix"))).unwrap();
        assert_eq!(m.name(), name);
        assert!(
            (m.ratio_sum() - 1.0).abs() < 1e-4,
            "{name}: {}",
            m.ratio_sum()
        );
        assert_eq!(m.components().len(), SPECIES.len());
    }
}

#[test]
fn humid_air_absorbs_more_than_dry_air() {
    let dir = common::spectra_dir();
    let k = |name: &str, f: f64| {
        load_mixture_spectrum(&dir.join(format!("{name}.mix")), &dir)
            .unwrap()
            .sample(f)
            .unwrap()
    };
    for f in [300e9, 557e9, 900e9] {
        assert!(k("tropic", f) > k("midlat_summer", f));
        assert!(k("midlat_summer", f) > k("highlat_winter", f));
    }
}

#[test]
fn tropic_attenuation_peaks_at_water_line() {
    let dir = common::spectra_dir();
    let tropic = load_mixture_spectrum(&dir.join("tropic.mix"), &dir).unwrap();
    let at = |f: f64| total_attenuation_db(f, 10.0, tropic.sample(f).unwrap());
    assert!(at(557e9) > at(500e9) + 100.0);
    assert!(at(400e9) < at(557e9));
}
