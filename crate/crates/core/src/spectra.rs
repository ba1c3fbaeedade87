//! Absorption-coefficient spectra and gas mixtures.
//!
//! Spectra are sampled curves k(f) in 1/m over frequency in Hz, ingested
//! from CSV exports of line-database tools. A medium's coefficient is the
//! ratio-weighted sum of its species' coefficients, evaluated on a shared
//! frequency grid.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

/// Header line of the spectrum CSV format.
pub const SPECTRUM_HEADER: &str = "frequency_hz,k_per_m";

/// Default temperature metadata for ingested spectra (kelvin).
pub const DEFAULT_TEMPERATURE_K: f64 = 273.0;
/// Default pressure metadata for ingested spectra (atm).
pub const DEFAULT_PRESSURE_ATM: f64 = 1.0;

const RATIO_SUM_MIN: f64 = 0.99;
const RATIO_SUM_MAX: f64 = 1.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("missing or wrong header at line 1, expected `{SPECTRUM_HEADER}`")]
    MissingHeader,
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("negative coefficient at line {line}")]
    NegativeCoefficient { line: usize },
    #[error("duplicate frequency {frequency} Hz at line {line}")]
    DuplicateFrequency { line: usize, frequency: f64 },
    #[error("spectrum needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("frequencies and coefficients differ in length ({frequencies} vs {coefficients})")]
    LengthMismatch {
        frequencies: usize,
        coefficients: usize,
    },
    #[error("frequencies must be positive, finite and strictly ascending (index {0})")]
    NotAscending(usize),
    #[error("coefficient at index {0} is negative or not finite")]
    InvalidCoefficient(usize),
    #[error("frequency {frequency} Hz outside spectrum range [{min}, {max}] Hz")]
    OutOfRange { frequency: f64, min: f64, max: f64 },
    #[error("mixture species `{0}` has no spectrum")]
    MissingSpecies(String),
    #[error("spectrum `{0}` does not share the mixture's frequency grid")]
    GridMismatch(String),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("malformed mixture line {line}: {reason}")]
    MalformedMixtureLine { line: usize, reason: String },
}

/// Sampled absorption coefficient k(f) of one species or a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionSpectrum {
    label: String,
    frequencies: Vec<f64>,
    coefficients: Vec<f64>,
    temperature_k: f64,
    pressure_atm: f64,
}

impl AbsorptionSpectrum {
    /// Builds a spectrum from already ordered samples, validating every
    /// invariant. Temperature and pressure are opaque metadata.
    pub fn new(
        label: impl Into<String>,
        frequencies: Vec<f64>,
        coefficients: Vec<f64>,
    ) -> Result<Self, SpectrumError> {
        if frequencies.len() != coefficients.len() {
            return Err(SpectrumError::LengthMismatch {
                frequencies: frequencies.len(),
                coefficients: coefficients.len(),
            });
        }
        if frequencies.len() < 2 {
            return Err(SpectrumError::TooFewSamples(frequencies.len()));
        }
        for (i, &f) in frequencies.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) || (i > 0 && f <= frequencies[i - 1]) {
                return Err(SpectrumError::NotAscending(i));
            }
        }
        if let Some(i) = coefficients
            .iter()
            .position(|k| !(k.is_finite() && *k >= 0.0))
        {
            return Err(SpectrumError::InvalidCoefficient(i));
        }
        Ok(Self {
            label: label.into(),
            frequencies,
            coefficients,
            temperature_k: DEFAULT_TEMPERATURE_K,
            pressure_atm: DEFAULT_PRESSURE_ATM,
        })
    }

    pub fn with_conditions(mut self, temperature_k: f64, pressure_atm: f64) -> Self {
        self.temperature_k = temperature_k;
        self.pressure_atm = pressure_atm;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    pub fn pressure_atm(&self) -> f64 {
        self.pressure_atm
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn min_frequency(&self) -> f64 {
        self.frequencies[0]
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies[self.frequencies.len() - 1]
    }

    /// Returns `true` when `f` lies inside the sampled range.
    pub fn covers(&self, f: f64) -> bool {
        f >= self.min_frequency() && f <= self.max_frequency()
    }

    /// Linearly interpolated k at `f`; see [`sample_k`].
    pub fn sample(&self, f: f64) -> Result<f64, SpectrumError> {
        sample_k(self, f)
    }

    /// Re-samples this spectrum onto `grid` by linear interpolation.
    pub fn resample_to_grid(&self, grid: &[f64]) -> Result<Self, SpectrumError> {
        let coefficients = grid
            .iter()
            .map(|&f| sample_k(self, f))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(self.label.clone(), grid.to_vec(), coefficients)?
            .with_conditions(self.temperature_k, self.pressure_atm))
    }

    /// Serializes to the spectrum CSV format with LF line endings. Values
    /// use the shortest representation that parses back to the same `f64`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 1));
        out.push_str(SPECTRUM_HEADER);
        out.push('\n');
        for (f, k) in self.frequencies.iter().zip(&self.coefficients) {
            let _ = writeln!(out, "{f:e},{k:e}");
        }
        out
    }
}

/// Parses the spectrum CSV format: a `frequency_hz,k_per_m` header, then one
/// `frequency,coefficient` sample per line. Blank lines are skipped, CRLF is
/// accepted. Rows may arrive in any order; they are returned ascending.
pub fn parse_spectrum(text: &str, label: &str) -> Result<AbsorptionSpectrum, SpectrumError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .map(|(_, l)| l.trim().trim_start_matches('\u{feff}'));
    if header != Some(SPECTRUM_HEADER) {
        return Err(SpectrumError::MissingHeader);
    }

    // (frequency, coefficient, line number)
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let (Some(f_txt), Some(k_txt), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(SpectrumError::MalformedRow {
                line,
                reason: "expected exactly two comma-separated fields".into(),
            });
        };
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SpectrumError::MalformedRow {
                    line,
                    reason: format!("{what} `{}` is not a number", s.trim()),
                })
        };
        let f = parse(f_txt, "frequency")?;
        let k = parse(k_txt, "coefficient")?;
        if !f.is_finite() || f <= 0.0 {
            return Err(SpectrumError::MalformedRow {
                line,
                reason: "frequency must be positive and finite".into(),
            });
        }
        if !k.is_finite() {
            return Err(SpectrumError::MalformedRow {
                line,
                reason: "coefficient must be finite".into(),
            });
        }
        if k < 0.0 {
            return Err(SpectrumError::NegativeCoefficient { line });
        }
        rows.push((f, k, line));
    }

    if rows.len() < 2 {
        return Err(SpectrumError::TooFewSamples(rows.len()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(SpectrumError::DuplicateFrequency {
            line: w[0].2.max(w[1].2),
            frequency: w[1].0,
        });
    }
    let (frequencies, coefficients) = rows.into_iter().map(|(f, k, _)| (f, k)).unzip();
    AbsorptionSpectrum::new(label, frequencies, coefficients)
}

/// Evaluates k(f) by linear interpolation between the bracketing samples.
/// Exact at grid points; no extrapolation outside the sampled range.
pub fn sample_k(spectrum: &AbsorptionSpectrum, f: f64) -> Result<f64, SpectrumError> {
    let freqs = &spectrum.frequencies;
    let coeffs = &spectrum.coefficients;
    if !spectrum.covers(f) {
        return Err(SpectrumError::OutOfRange {
            frequency: f,
            min: spectrum.min_frequency(),
            max: spectrum.max_frequency(),
        });
    }
    // index of the first sample strictly greater than f
    let hi = freqs.partition_point(|&x| x <= f);
    if hi == 0 {
        return Ok(coeffs[0]);
    }
    let lo = hi - 1;
    if freqs[lo] == f || hi == freqs.len() {
        return Ok(coeffs[lo]);
    }
    let t = (f - freqs[lo]) / (freqs[hi] - freqs[lo]);
    let (k0, k1) = (coeffs[lo], coeffs[hi]);
    // clamp guards the rounding of k0 + t*(k1-k0) to the bracket
    let value = k0 + t * (k1 - k0);
    Ok(value.clamp(k0.min(k1), k0.max(k1)))
}

/// A named atmosphere: species labels with molar ratios as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct GasMixture {
    name: String,
    components: Vec<(String, f64)>,
}

impl GasMixture {
    pub fn new(
        name: impl Into<String>,
        components: Vec<(String, f64)>,
    ) -> Result<Self, SpectrumError> {
        let mut seen = HashSet::new();
        for (species, ratio) in &components {
            if !seen.insert(species.as_str()) {
                return Err(SpectrumError::InvalidMixture(format!(
                    "species `{species}` listed twice"
                )));
            }
            if !(0.0..=1.0).contains(ratio) {
                return Err(SpectrumError::InvalidMixture(format!(
                    "ratio {ratio} for `{species}` outside [0, 1]"
                )));
            }
        }
        let total: f64 = components.iter().map(|(_, r)| r).sum();
        if !(RATIO_SUM_MIN..=RATIO_SUM_MAX).contains(&total) {
            return Err(SpectrumError::InvalidMixture(format!(
                "ratios sum to {total}, expected within [{RATIO_SUM_MIN}, {RATIO_SUM_MAX}]"
            )));
        }
        Ok(Self {
            name: name.into(),
            components,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> &[(String, f64)] {
        &self.components
    }

    pub fn ratio_sum(&self) -> f64 {
        self.components.iter().map(|(_, r)| r).sum()
    }
}

/// Parses a mixture file: `name=<text>` plus one `species=percent` line per
/// component. Percentages are divided by 100. `#` starts a comment.
pub fn parse_mixture(text: &str) -> Result<GasMixture, SpectrumError> {
    let mut name = None;
    let mut components = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(SpectrumError::MalformedMixtureLine {
                line,
                reason: "expected `key=value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(SpectrumError::MalformedMixtureLine {
                line,
                reason: "empty key".into(),
            });
        }
        if key == "name" {
            name = Some(value.to_string());
            continue;
        }
        let percent: f64 = value
            .parse()
            .map_err(|_| SpectrumError::MalformedMixtureLine {
                line,
                reason: format!("ratio `{value}` is not a number"),
            })?;
        components.push((key.to_string(), percent / 100.0));
    }
    let name = name.ok_or_else(|| SpectrumError::InvalidMixture("missing `name=` line".into()))?;
    GasMixture::new(name, components)
}

/// Ratio-weighted sum of species spectra on their common grid. Every
/// spectrum referenced by the mixture must share one frequency grid; use
/// [`AbsorptionSpectrum::resample_to_grid`] first otherwise.
pub fn mix_spectra(
    mixture: &GasMixture,
    species: &BTreeMap<String, AbsorptionSpectrum>,
) -> Result<AbsorptionSpectrum, SpectrumError> {
    let mut parts = Vec::with_capacity(mixture.components.len());
    for (label, ratio) in &mixture.components {
        let spectrum = species
            .get(label)
            .ok_or_else(|| SpectrumError::MissingSpecies(label.clone()))?;
        parts.push((spectrum, *ratio));
    }
    let Some((first, _)) = parts.first() else {
        return Err(SpectrumError::InvalidMixture(
            "mixture has no components".into(),
        ));
    };
    let grid = first.frequencies.clone();
    if let Some((odd, _)) = parts.iter().find(|(s, _)| s.frequencies != grid) {
        return Err(SpectrumError::GridMismatch(odd.label.clone()));
    }
    let mut coefficients = vec![0.0; grid.len()];
    for (spectrum, ratio) in &parts {
        for (acc, k) in coefficients.iter_mut().zip(&spectrum.coefficients) {
            *acc += ratio * k;
        }
    }
    Ok(
        AbsorptionSpectrum::new(mixture.name.clone(), grid, coefficients)?
            .with_conditions(first.temperature_k, first.pressure_atm),
    )
}
