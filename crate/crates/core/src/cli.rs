//! Batch experiment runner: scenario configs, figure presets, sweeps and
//! CSV output.
//!
//! # Config grammar
//!
//! A config file is flat `key = value` text grouped under `[section]`
//! headers. `#` starts a comment. Keys not listed here are errors.
//!
//! ```text
//! [scenario]
//! name = my_run
//! mixture = tropic                 # <spectra-dir>/tropic.mix
//! k_per_m = logspace(1e-5, 1e3, 17) # direct k values instead of a mixture
//! variants = bf_los, bf_rerad, mux_los, mux_rerad   # or `attenuation`
//!
//! [grid]
//! frequencies_hz = range(1e11, 1e12, 2e9)
//! distances_m = 0.1, 1, 10
//!
//! [link]
//! pt_dbm = 0                       # or pt_w
//! noise_dbm = -80                  # or noise_w
//! snr_threshold_db = 0
//!
//! [array]
//! antennas = 225
//!
//! [montecarlo]
//! trials = 1000
//! seed = 1
//! ```
//!
//! Numeric lists accept comma-separated values, `range(start, stop, step)`
//! (inclusive of `stop` when it lands on the grid), `linspace(a, b, n)` and
//! `logspace(a, b, n)` (endpoints given as values, not exponents).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use thiserror::Error;

use crate::capacity::{
    monte_carlo_techniques, CapacityConfig, CapacityError, CapacityResult, LinkScenario,
    Reradiation, Technique,
};
use crate::channel::{derive_seed, facing_arrays, ChannelError};
use crate::propagation::{dbm_to_watts, k_factor, total_attenuation_db, DEFAULT_NOISE_POWER_W};
use crate::spectra::{
    mix_spectra, parse_mixture, parse_spectrum, AbsorptionSpectrum, SpectrumError,
};

/// Environment variable naming the default spectra directory.
pub const SPECTRA_DIR_ENV: &str = "THZ_MIMO_SPECTRA_DIR";
/// Fixed header of sweep CSV output.
pub const SWEEP_HEADER: &str = "f_hz,k_per_m,d_m,pt_w,technique,reradiation,mean_capacity_bps_hz,std_bps_hz,active_streams,k_factor,total_attenuation_db";

/// Antenna count and trials used unless full scale is requested.
pub const SCALED_ANTENNAS: usize = 16;
pub const SCALED_TRIALS: usize = 50;
/// Full-scale values of the figure presets.
pub const FULL_ANTENNAS: usize = 225;
pub const FULL_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;

const SMOKE_MAX_FREQUENCIES: usize = 50;
const SMOKE_FREQUENCY_STRIDE: usize = 10;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("spectrum error in {path}: {source}")]
    Spectrum {
        path: PathBuf,
        #[source]
        source: SpectrumError,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    /// Process exit code: 1 for configuration problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }

    fn config(msg: impl Into<String>) -> Self {
        RunError::Config(vec![msg.into()])
    }
}

/// One output column set of a sweep: a technique with or without
/// re-radiation, or plain attenuation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Capacity(Technique, Reradiation),
    Attenuation,
}

impl Variant {
    /// Row order within one grid point: beamforming before multiplexing,
    /// each without then with re-radiation.
    pub const CAPACITY_ALL: [Variant; 4] = [
        Variant::Capacity(Technique::Beamforming, Reradiation::Ignored),
        Variant::Capacity(Technique::Beamforming, Reradiation::Included),
        Variant::Capacity(Technique::Multiplexing, Reradiation::Ignored),
        Variant::Capacity(Technique::Multiplexing, Reradiation::Included),
    ];

    pub fn key(self) -> &'static str {
        match self {
            Variant::Capacity(Technique::Beamforming, Reradiation::Ignored) => "bf_los",
            Variant::Capacity(Technique::Beamforming, Reradiation::Included) => "bf_rerad",
            Variant::Capacity(Technique::Multiplexing, Reradiation::Ignored) => "mux_los",
            Variant::Capacity(Technique::Multiplexing, Reradiation::Included) => "mux_rerad",
            Variant::Attenuation => "attenuation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::CAPACITY_ALL
            .into_iter()
            .chain([Variant::Attenuation])
            .find(|v| v.key() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbsorptionSource {
    /// Mixture file `<spectra-dir>/<name>.mix` with species CSVs alongside.
    Mixture(String),
    /// Direct absorption coefficients, 1/m.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub absorption: AbsorptionSource,
    pub frequencies: Vec<f64>,
    pub distances: Vec<f64>,
    pub transmit_power: f64,
    pub noise_power: f64,
    /// Linear per-stream SNR threshold.
    pub snr_threshold: f64,
    pub antennas: usize,
    pub trials: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
}

impl Scenario {
    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<(), RunError> {
        let mut errors = Vec::new();
        if self.name.trim().is_empty() {
            errors.push("scenario name is empty".to_string());
        }
        if self.frequencies.is_empty() {
            errors.push("frequency grid is empty".to_string());
        }
        if self
            .frequencies
            .iter()
            .any(|f| !(f.is_finite() && *f > 0.0))
        {
            errors.push("frequencies must be positive".to_string());
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            errors.push("frequencies must be strictly ascending".to_string());
        }
        if self.distances.is_empty() {
            errors.push("distance grid is empty".to_string());
        }
        if self.distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            errors.push("distances must be positive".to_string());
        }
        match &self.absorption {
            AbsorptionSource::Fixed(ks) if ks.is_empty() => {
                errors.push("k_per_m list is empty".to_string())
            }
            AbsorptionSource::Fixed(ks) if ks.iter().any(|k| !(k.is_finite() && *k >= 0.0)) => {
                errors.push("k_per_m values must be non-negative".to_string())
            }
            AbsorptionSource::Mixture(name) if name.trim().is_empty() => {
                errors.push("mixture name is empty".to_string())
            }
            _ => {}
        }
        if !(self.transmit_power.is_finite() && self.transmit_power > 0.0) {
            errors.push(format!(
                "transmit power must be positive, got {}",
                self.transmit_power
            ));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            errors.push(format!(
                "noise power must be positive, got {}",
                self.noise_power
            ));
        }
        if !(self.snr_threshold.is_finite() && self.snr_threshold >= 0.0) {
            errors.push("SNR threshold must be non-negative".to_string());
        }
        let side = (self.antennas as f64).sqrt().round() as usize;
        if self.antennas == 0 || side * side != self.antennas {
            errors.push(format!(
                "antennas must be a positive perfect square, got {}",
                self.antennas
            ));
        }
        if self.trials == 0 {
            errors.push("trials must be at least 1".to_string());
        }
        if self.variants.is_empty() {
            errors.push("no variants requested".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(RunError::Config(errors))
        }
    }

    /// Number of absorption grid points per frequency.
    fn k_points(&self) -> usize {
        match &self.absorption {
            AbsorptionSource::Fixed(ks) => ks.len(),
            AbsorptionSource::Mixture(_) => 1,
        }
    }

    /// Rows [`run_scenario`] will produce.
    pub fn expected_rows(&self) -> usize {
        self.frequencies.len() * self.k_points() * self.distances.len() * self.variants.len()
    }

    /// Thins the frequency grid for quick end-to-end checks.
    pub fn reduce_for_smoke(&mut self) {
        if self.frequencies.len() > SMOKE_MAX_FREQUENCIES {
            self.frequencies = self
                .frequencies
                .iter()
                .copied()
                .step_by(SMOKE_FREQUENCY_STRIDE)
                .collect();
        }
    }
}

/// One output line of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub frequency: f64,
    pub absorption: f64,
    pub distance: f64,
    pub transmit_power: f64,
    pub variant: Variant,
    pub mean_capacity: f64,
    pub std_capacity: f64,
    pub active_streams: f64,
    pub k_factor: f64,
    pub total_attenuation_db: f64,
}

impl SweepRow {
    pub fn technique_str(&self) -> &'static str {
        match self.variant {
            Variant::Capacity(t, _) => t.as_str(),
            Variant::Attenuation => "none",
        }
    }

    pub fn reradiation_str(&self) -> &'static str {
        match self.variant {
            Variant::Capacity(_, r) => r.as_str(),
            Variant::Attenuation => "ignored",
        }
    }
}

pub fn list_presets() -> Vec<&'static str> {
    let mut names = vec!["fig1_ksweep"];
    names.extend(FIG3_PRESETS.iter().map(|p| p.0));
    names.extend(["attenuation_fig2b", "attenuation_fig2b_winter"]);
    names
}

const FIG3_PRESETS: [(&str, f64, f64); 6] = [
    ("fig3_tropic_d0.1m_1mw", 0.1, 0.0),
    ("fig3_tropic_d0.1m_10mw", 0.1, 10.0),
    ("fig3_tropic_d1m_1mw", 1.0, 0.0),
    ("fig3_tropic_d1m_10mw", 1.0, 10.0),
    ("fig3_tropic_d10m_1mw", 10.0, 0.0),
    ("fig3_tropic_d10m_10mw", 10.0, 10.0),
];

/// 0.1–1 THz in 2 GHz steps.
pub fn default_frequency_grid() -> Vec<f64> {
    (0..=450).map(|i| 1e11 + 2e9 * i as f64).collect()
}

/// Full-scale preset scenario by name.
pub fn preset(name: &str) -> Option<Scenario> {
    let base = Scenario {
        name: name.to_string(),
        absorption: AbsorptionSource::Mixture("tropic".into()),
        frequencies: default_frequency_grid(),
        distances: vec![1.0],
        transmit_power: dbm_to_watts(0.0),
        noise_power: DEFAULT_NOISE_POWER_W,
        snr_threshold: 1.0,
        antennas: FULL_ANTENNAS,
        trials: FULL_TRIALS,
        seed: DEFAULT_SEED,
        variants: Variant::CAPACITY_ALL.to_vec(),
    };
    match name {
        "fig1_ksweep" => Some(Scenario {
            absorption: AbsorptionSource::Fixed(logspace(1e-5, 1e3, 17)),
            frequencies: vec![5e11],
            distances: vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            ..base
        }),
        "attenuation_fig2b" => Some(Scenario {
            distances: vec![0.1, 1.0, 10.0],
            variants: vec![Variant::Attenuation],
            ..base
        }),
        "attenuation_fig2b_winter" => Some(Scenario {
            absorption: AbsorptionSource::Mixture("highlat_winter".into()),
            distances: vec![0.1, 1.0, 10.0],
            variants: vec![Variant::Attenuation],
            ..base
        }),
        _ => FIG3_PRESETS
            .iter()
            .find(|p| p.0 == name)
            .map(|&(_, d, pt_dbm)| Scenario {
                distances: vec![d],
                transmit_power: dbm_to_watts(pt_dbm),
                ..base
            }),
    }
}

/// `n` log-uniform points from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.log10(), b.log10());
    (0..n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Parses a comma list or one of `range(..)`, `linspace(..)`, `logspace(..)`.
pub fn parse_number_list(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    let numbers = |inner: &str| -> Result<Vec<f64>, String> {
        inner
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("`{}` is not a number", s.trim()))
            })
            .collect()
    };
    for func in ["range", "linspace", "logspace"] {
        let Some(rest) = text.strip_prefix(func) else {
            continue;
        };
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected `{func}(...)`"))?;
        let args = numbers(inner)?;
        if args.len() != 3 {
            return Err(format!("`{func}` takes 3 arguments"));
        }
        let (a, b, c) = (args[0], args[1], args[2]);
        return match func {
            "range" => {
                if c.is_nan() || c <= 0.0 || b < a {
                    return Err("range needs step > 0 and stop >= start".into());
                }
                let n = ((b - a) / c * (1.0 + 1e-12)).floor() as usize + 1;
                Ok((0..n).map(|i| a + c * i as f64).collect())
            }
            _ => {
                if c < 1.0 || c.fract() != 0.0 {
                    return Err(format!("`{func}` point count must be a positive integer"));
                }
                if func == "logspace" && !(a > 0.0 && b > 0.0) {
                    return Err("logspace endpoints must be positive".into());
                }
                Ok(if func == "linspace" {
                    linspace(a, b, c as usize)
                } else {
                    logspace(a, b, c as usize)
                })
            }
        };
    }
    numbers(text)
}

/// Values a config file may set; `None` leaves the base scenario alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOverrides {
    pub name: Option<String>,
    pub absorption: Option<AbsorptionSource>,
    pub frequencies: Option<Vec<f64>>,
    pub distances: Option<Vec<f64>>,
    pub transmit_power: Option<f64>,
    pub noise_power: Option<f64>,
    pub snr_threshold: Option<f64>,
    pub antennas: Option<usize>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<Variant>>,
}

impl ScenarioOverrides {
    pub fn apply(&self, base: &mut Scenario) {
        if let Some(v) = &self.name {
            base.name = v.clone();
        }
        if let Some(v) = &self.absorption {
            base.absorption = v.clone();
        }
        if let Some(v) = &self.frequencies {
            base.frequencies = v.clone();
        }
        if let Some(v) = &self.distances {
            base.distances = v.clone();
        }
        if let Some(v) = self.transmit_power {
            base.transmit_power = v;
        }
        if let Some(v) = self.noise_power {
            base.noise_power = v;
        }
        if let Some(v) = self.snr_threshold {
            base.snr_threshold = v;
        }
        if let Some(v) = self.antennas {
            base.antennas = v;
        }
        if let Some(v) = self.trials {
            base.trials = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        if let Some(v) = &self.variants {
            base.variants = v.clone();
        }
    }
}

/// Parses the sectioned key-value config format. All problems are
/// collected before returning.
pub fn parse_config(text: &str) -> Result<ScenarioOverrides, RunError> {
    let mut out = ScenarioOverrides::default();
    let mut errors = Vec::new();
    let mut section = String::new();
    let mut seen = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            section = name.trim().to_string();
            if !["scenario", "grid", "link", "array", "montecarlo"].contains(&section.as_str()) {
                errors.push(format!("line {line}: unknown section [{section}]"));
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(format!("line {line}: expected `key = value`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let qualified = format!("{section}.{key}");
        if let Some(prev) = seen.insert(qualified.clone(), line) {
            errors.push(format!(
                "line {line}: `{qualified}` already set on line {prev}"
            ));
        }
        let mut fail = |msg: String| errors.push(format!("line {line}: {qualified}: {msg}"));
        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("`{v}` is not a number"))
        };
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| format!("`{v}` is not a count"))
        };
        match qualified.as_str() {
            "scenario.name" => out.name = Some(value.to_string()),
            "scenario.mixture" => {
                if matches!(out.absorption, Some(AbsorptionSource::Fixed(_))) {
                    fail("set either `mixture` or `k_per_m`, not both".into());
                }
                out.absorption = Some(AbsorptionSource::Mixture(value.to_string()));
            }
            "scenario.k_per_m" => {
                if matches!(out.absorption, Some(AbsorptionSource::Mixture(_))) {
                    fail("set either `mixture` or `k_per_m`, not both".into());
                }
                match parse_number_list(value) {
                    Ok(v) => out.absorption = Some(AbsorptionSource::Fixed(v)),
                    Err(e) => fail(e),
                }
            }
            "scenario.variants" => {
                let mut variants = Vec::new();
                for item in value.split(',').map(str::trim) {
                    match Variant::parse(item) {
                        Some(v) => variants.push(v),
                        None => fail(format!("unknown variant `{item}`")),
                    }
                }
                variants.sort();
                variants.dedup();
                out.variants = Some(variants);
            }
            "grid.frequencies_hz" => match parse_number_list(value) {
                Ok(v) => out.frequencies = Some(v),
                Err(e) => fail(e),
            },
            "grid.distances_m" => match parse_number_list(value) {
                Ok(v) => out.distances = Some(v),
                Err(e) => fail(e),
            },
            "link.pt_dbm" | "link.pt_w" | "link.noise_dbm" | "link.noise_w" => {
                match number(value) {
                    Ok(v) => {
                        let watts = if key.ends_with("_dbm") {
                            dbm_to_watts(v)
                        } else {
                            v
                        };
                        let slot = if key.starts_with("pt") {
                            &mut out.transmit_power
                        } else {
                            &mut out.noise_power
                        };
                        if slot.replace(watts).is_some() {
                            fail("power given twice (dBm and W)".into());
                        }
                    }
                    Err(e) => fail(e),
                }
            }
            "link.snr_threshold_db" => match number(value) {
                Ok(v) => out.snr_threshold = Some(10f64.powf(v / 10.0)),
                Err(e) => fail(e),
            },
            "array.antennas" => match count(value) {
                Ok(v) => out.antennas = Some(v),
                Err(e) => fail(e),
            },
            "montecarlo.trials" => match count(value) {
                Ok(v) => out.trials = Some(v),
                Err(e) => fail(e),
            },
            "montecarlo.seed" => match value.parse::<u64>() {
                Ok(v) => out.seed = Some(v),
                Err(_) => fail(format!("`{value}` is not a u64")),
            },
            _ => fail("unknown key".into()),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(RunError::Config(errors))
    }
}

/// How `run` turns a preset and/or config into a concrete scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub preset: Option<String>,
    pub config: Option<ScenarioOverrides>,
    pub seed: Option<u64>,
    pub antennas: Option<usize>,
    pub trials: Option<usize>,
    /// Keep the preset's full-scale antennas and trials.
    pub full_scale: bool,
    /// Scaled-down antennas/trials plus a thinned frequency grid.
    pub smoke: bool,
}

/// Precedence, lowest first: preset (or a blank template), config file,
/// CI scaling (unless `full_scale` or the config set the value), smoke
/// mode, then explicit flags.
pub fn resolve_scenario(opts: &RunOptions) -> Result<Scenario, RunError> {
    let mut scenario = match &opts.preset {
        Some(name) => preset(name).ok_or_else(|| {
            RunError::config(format!(
                "unknown preset `{name}`; available: {}",
                list_presets().join(", ")
            ))
        })?,
        None => {
            if opts.config.is_none() {
                return Err(RunError::config("either --config or --preset is required"));
            }
            Scenario {
                name: "custom".into(),
                absorption: AbsorptionSource::Mixture(String::new()),
                frequencies: Vec::new(),
                distances: Vec::new(),
                transmit_power: dbm_to_watts(0.0),
                noise_power: DEFAULT_NOISE_POWER_W,
                snr_threshold: 1.0,
                antennas: FULL_ANTENNAS,
                trials: FULL_TRIALS,
                seed: DEFAULT_SEED,
                variants: Variant::CAPACITY_ALL.to_vec(),
            }
        }
    };
    let overrides = opts.config.clone().unwrap_or_default();
    overrides.apply(&mut scenario);
    if !opts.full_scale {
        if overrides.antennas.is_none() {
            scenario.antennas = SCALED_ANTENNAS;
        }
        if overrides.trials.is_none() {
            scenario.trials = SCALED_TRIALS;
        }
    }
    if opts.smoke {
        scenario.antennas = SCALED_ANTENNAS;
        scenario.trials = SCALED_TRIALS;
        scenario.reduce_for_smoke();
    }
    if let Some(v) = opts.antennas {
        scenario.antennas = v;
    }
    if let Some(v) = opts.trials {
        scenario.trials = v;
    }
    if let Some(v) = opts.seed {
        scenario.seed = v;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn read_file(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a mixture file and the species spectra next to `spectra_dir`, and
/// returns the mixed spectrum. Species on differing grids are resampled to
/// the first species' grid.
pub fn load_mixture_spectrum(
    mixture_path: &Path,
    spectra_dir: &Path,
) -> Result<AbsorptionSpectrum, RunError> {
    let mixture =
        parse_mixture(&read_file(mixture_path)?).map_err(|source| RunError::Spectrum {
            path: mixture_path.to_path_buf(),
            source,
        })?;
    let mut species = BTreeMap::new();
    let mut grid: Option<Vec<f64>> = None;
    for (label, _) in mixture.components() {
        let path = spectra_dir.join(format!("{label}.csv"));
        if !path.exists() {
            return Err(RunError::Data(format!(
                "mixture `{}` needs species `{label}` but {} does not exist",
                mixture.name(),
                path.display()
            )));
        }
        let mut spectrum =
            parse_spectrum(&read_file(&path)?, label).map_err(|source| RunError::Spectrum {
                path: path.clone(),
                source,
            })?;
        match &grid {
            None => grid = Some(spectrum.frequencies().to_vec()),
            Some(g) if g.as_slice() != spectrum.frequencies() => {
                debug!("resampling {label} onto the {} grid", mixture.name());
                spectrum = spectrum
                    .resample_to_grid(g)
                    .map_err(|source| RunError::Spectrum {
                        path: path.clone(),
                        source,
                    })?;
            }
            Some(_) => {}
        }
        species.insert(label.clone(), spectrum);
    }
    mix_spectra(&mixture, &species).map_err(|source| RunError::Spectrum {
        path: mixture_path.to_path_buf(),
        source,
    })
}

/// Absorption coefficients per frequency: `k_table[fi]` lists the k values
/// swept at `scenario.frequencies[fi]`.
fn absorption_table(scenario: &Scenario, spectra_dir: &Path) -> Result<Vec<Vec<f64>>, RunError> {
    match &scenario.absorption {
        AbsorptionSource::Fixed(ks) => Ok(vec![ks.clone(); scenario.frequencies.len()]),
        AbsorptionSource::Mixture(name) => {
            let path = spectra_dir.join(format!("{name}.mix"));
            if !path.exists() {
                return Err(RunError::Data(format!(
                    "mixture file {} does not exist",
                    path.display()
                )));
            }
            let spectrum = load_mixture_spectrum(&path, spectra_dir)?;
            let outside: Vec<String> = scenario
                .frequencies
                .iter()
                .filter(|f| !spectrum.covers(**f))
                .map(|f| format!("{f:e}"))
                .collect();
            if !outside.is_empty() {
                return Err(RunError::Data(format!(
                    "frequencies outside spectrum range [{:e}, {:e}] Hz: {}",
                    spectrum.min_frequency(),
                    spectrum.max_frequency(),
                    outside.join(", ")
                )));
            }
            scenario
                .frequencies
                .iter()
                .map(|&f| {
                    spectrum
                        .sample(f)
                        .map(|k| vec![k])
                        .map_err(|e| RunError::Data(e.to_string()))
                })
                .collect()
        }
    }
}

struct GridPoint {
    f_index: usize,
    k_index: usize,
    d_index: usize,
    frequency: f64,
    absorption: f64,
    distance: f64,
}

fn evaluate_point(scenario: &Scenario, point: &GridPoint) -> Result<Vec<SweepRow>, RunError> {
    let seed = derive_seed(
        scenario.seed,
        &[
            point.f_index as u64,
            point.k_index as u64,
            point.d_index as u64,
        ],
    );
    let row = |variant: Variant, result: Option<&CapacityResult>| SweepRow {
        frequency: point.frequency,
        absorption: point.absorption,
        distance: point.distance,
        transmit_power: scenario.transmit_power,
        variant,
        mean_capacity: result.map_or(f64::NAN, |r| r.mean_capacity),
        std_capacity: result.map_or(f64::NAN, |r| r.std_capacity),
        active_streams: result.map_or(0.0, |r| r.active_streams_mean),
        k_factor: k_factor(point.absorption, point.distance),
        total_attenuation_db: total_attenuation_db(
            point.frequency,
            point.distance,
            point.absorption,
        ),
    };

    let needs_channel = scenario
        .variants
        .iter()
        .any(|v| matches!(v, Variant::Capacity(..)));
    let mut results: BTreeMap<Variant, CapacityResult> = BTreeMap::new();
    if needs_channel {
        let (tx, rx) = facing_arrays(scenario.antennas, point.frequency, point.distance)?;
        let base = CapacityConfig {
            transmit_power: scenario.transmit_power,
            noise_power: scenario.noise_power,
            snr_threshold: scenario.snr_threshold,
            technique: Technique::Beamforming,
            reradiation: Reradiation::Ignored,
        }
        .validated()?;
        let link = LinkScenario {
            tx,
            rx,
            frequency: point.frequency,
            absorption: point.absorption,
            config: base,
        };
        for reradiation in [Reradiation::Ignored, Reradiation::Included] {
            let techniques: Vec<Technique> = scenario
                .variants
                .iter()
                .filter_map(|v| match v {
                    Variant::Capacity(t, r) if *r == reradiation => Some(*t),
                    _ => None,
                })
                .collect();
            if techniques.is_empty() {
                continue;
            }
            let mut link = link.clone();
            link.config.reradiation = reradiation;
            let estimates = monte_carlo_techniques(&link, &techniques, scenario.trials, seed)?;
            for (t, r) in techniques.into_iter().zip(estimates) {
                results.insert(Variant::Capacity(t, reradiation), r);
            }
        }
    }
    Ok(scenario
        .variants
        .iter()
        .map(|&v| row(v, results.get(&v)))
        .collect())
}

/// Runs every grid point × variant of `scenario`. Grid points are evaluated
/// in parallel; rows come back ordered by frequency, then absorption,
/// distance and variant. Progress goes to the log, never to the rows.
pub fn run_scenario(scenario: &Scenario, spectra_dir: &Path) -> Result<Vec<SweepRow>, RunError> {
    scenario.validate()?;
    let k_table = absorption_table(scenario, spectra_dir)?;
    let mut points = Vec::new();
    for (fi, &frequency) in scenario.frequencies.iter().enumerate() {
        for (ki, &absorption) in k_table[fi].iter().enumerate() {
            for (di, &distance) in scenario.distances.iter().enumerate() {
                points.push(GridPoint {
                    f_index: fi,
                    k_index: ki,
                    d_index: di,
                    frequency,
                    absorption,
                    distance,
                });
            }
        }
    }
    info!(
        "scenario {}: {} grid points x {} variants, n = {}, {} trials",
        scenario.name,
        points.len(),
        scenario.variants.len(),
        scenario.antennas,
        scenario.trials
    );
    let total = points.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let per_point: Vec<Vec<SweepRow>> = points
        .par_iter()
        .map(|p| {
            let rows = evaluate_point(scenario, p);
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            if n.is_multiple_of(25) || n == total {
                info!("{n}/{total} grid points");
            }
            rows
        })
        .collect::<Result<_, _>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Formats with 9 significant digits; infinities and NaN become `inf`,
/// `-inf` and `nan`.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.8e}")
    }
}

struct Sig9(f64);

impl fmt::Display for Sig9 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_sig9(self.0))
    }
}

/// Writes the sweep CSV (fixed header, LF endings) to `out`.
pub fn emit_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    if rows.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "no rows to write",
        ));
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            Sig9(r.frequency),
            Sig9(r.absorption),
            Sig9(r.distance),
            Sig9(r.transmit_power),
            r.technique_str(),
            r.reradiation_str(),
            Sig9(r.mean_capacity),
            Sig9(r.std_capacity),
            Sig9(r.active_streams),
            Sig9(r.k_factor),
            Sig9(r.total_attenuation_db),
        )?;
    }
    out.flush()
}

pub fn emit_csv_file(rows: &[SweepRow], path: &Path) -> Result<(), RunError> {
    let io_err = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    emit_csv(rows, io::BufWriter::new(file)).map_err(io_err)
}

/// Reads a sweep CSV produced by [`emit_csv`].
pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err("missing sweep header".into());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 11 {
                return Err(format!("line {line}: expected 11 fields"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| format!("line {line}: `{s}` is not a number"))
            };
            let variant = match (f[4], f[5]) {
                ("none", _) => Variant::Attenuation,
                (t, r) => {
                    let technique = match t {
                        "beamforming" => Technique::Beamforming,
                        "multiplexing" => Technique::Multiplexing,
                        _ => return Err(format!("line {line}: unknown technique `{t}`")),
                    };
                    let reradiation = match r {
                        "included" => Reradiation::Included,
                        "ignored" => Reradiation::Ignored,
                        _ => return Err(format!("line {line}: unknown reradiation `{r}`")),
                    };
                    Variant::Capacity(technique, reradiation)
                }
            };
            Ok(SweepRow {
                frequency: num(f[0])?,
                absorption: num(f[1])?,
                distance: num(f[2])?,
                transmit_power: num(f[3])?,
                variant,
                mean_capacity: num(f[6])?,
                std_capacity: num(f[7])?,
                active_streams: num(f[8])?,
                k_factor: num(f[9])?,
                total_attenuation_db: num(f[10])?,
            })
        })
        .collect()
}

/// Spectra directory: explicit flag, then the environment, then
/// `data/spectra` relative to the working directory.
pub fn spectra_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(SPECTRA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/spectra"))
}
