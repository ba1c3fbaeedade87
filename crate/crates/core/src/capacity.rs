//! Eigenchannel capacity for beamforming and blind spatial multiplexing.
//!
//! Per-stream SNRs come from the singular values of the channel matrix.
//! Multiplexing spreads the power uniformly over all n_t transmit streams;
//! beamforming puts all of it on the dominant eigenchannel. A stream whose
//! SNR falls below the detection threshold contributes nothing, and its
//! power share is not handed to the others.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    channel_components, derive_seed, los_channel, ArrayGeometry, ChannelError, ChannelMatrix,
};
use crate::propagation::DEFAULT_NOISE_POWER_W;

/// Trials per Monte Carlo estimate unless configured otherwise.
pub const DEFAULT_TRIALS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("channel matrix has a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("invalid capacity configuration: {0}")]
    InvalidConfig(String),
    #[error("at least one Monte Carlo trial is required")]
    NoTrials,
    #[error("lower bound needs a positive absorption coefficient, got {0}")]
    NoAbsorption(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Beamforming,
    Multiplexing,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Beamforming => "beamforming",
            Technique::Multiplexing => "multiplexing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reradiation {
    Included,
    Ignored,
}

impl Reradiation {
    pub fn as_str(self) -> &'static str {
        match self {
            Reradiation::Included => "included",
            Reradiation::Ignored => "ignored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityConfig {
    /// Total transmit power, W.
    pub transmit_power: f64,
    /// Noise power per receive antenna, W.
    pub noise_power: f64,
    /// Minimum linear per-stream SNR for a stream to count (1.0 = 0 dB).
    pub snr_threshold: f64,
    pub technique: Technique,
    pub reradiation: Reradiation,
}

impl CapacityConfig {
    /// Config with σ² = -80 dBm, a 0 dB threshold and re-radiation included.
    pub fn new(transmit_power: f64, technique: Technique) -> Result<Self, CapacityError> {
        Self {
            transmit_power,
            noise_power: DEFAULT_NOISE_POWER_W,
            snr_threshold: 1.0,
            technique,
            reradiation: Reradiation::Included,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, CapacityError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.transmit_power) {
            return Err(CapacityError::InvalidConfig(format!(
                "transmit power must be positive, got {}",
                self.transmit_power
            )));
        }
        if !positive(self.noise_power) {
            return Err(CapacityError::InvalidConfig(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        if !(self.snr_threshold.is_finite() && self.snr_threshold >= 0.0) {
            return Err(CapacityError::InvalidConfig(format!(
                "SNR threshold must be non-negative, got {}",
                self.snr_threshold
            )));
        }
        Ok(self)
    }

    pub fn with_noise_power(mut self, noise_power: f64) -> Result<Self, CapacityError> {
        self.noise_power = noise_power;
        self.validated()
    }

    pub fn with_threshold(mut self, snr_threshold: f64) -> Result<Self, CapacityError> {
        self.snr_threshold = snr_threshold;
        self.validated()
    }

    pub fn with_technique(mut self, technique: Technique) -> Self {
        self.technique = technique;
        self
    }

    pub fn with_reradiation(mut self, reradiation: Reradiation) -> Self {
        self.reradiation = reradiation;
        self
    }

    fn power_to_noise(&self) -> f64 {
        self.transmit_power / self.noise_power
    }
}

/// Capacity of one channel realization and how many streams carried it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamCapacity {
    /// bps/Hz
    pub capacity: f64,
    pub active_streams: usize,
}

fn check_finite(h: &ChannelMatrix) -> Result<(), CapacityError> {
    h.check_finite().map_err(|e| match e {
        ChannelError::NonFinite(i, j) => CapacityError::NonFinite(i, j),
        other => CapacityError::Channel(other),
    })
}

/// Full singular spectrum, descending, of length min(n_r, n_t).
pub fn singular_values(h: &ChannelMatrix) -> Result<Vec<f64>, CapacityError> {
    check_finite(h)?;
    if h.nrows() == 0 || h.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = h
        .entries
        .clone()
        .singular_values()
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Multiplexing capacity from a singular spectrum with `n_tx` transmit
/// streams sharing the power uniformly.
pub fn multiplexing_from_singular_values(
    sv: &[f64],
    n_tx: usize,
    cfg: &CapacityConfig,
) -> StreamCapacity {
    let per_stream = cfg.power_to_noise() / n_tx as f64;
    let mut capacity = 0.0;
    let mut active_streams = 0;
    for s in sv {
        let snr = per_stream * s * s;
        if snr > 0.0 && snr >= cfg.snr_threshold {
            capacity += snr.ln_1p() / std::f64::consts::LN_2;
            active_streams += 1;
        }
    }
    StreamCapacity {
        capacity,
        active_streams,
    }
}

/// Beamforming capacity from a singular spectrum: one stream on σ₁.
pub fn beamforming_from_singular_values(sv: &[f64], cfg: &CapacityConfig) -> StreamCapacity {
    let top = sv.first().copied().unwrap_or(0.0);
    let snr = cfg.power_to_noise() * top * top;
    if snr > 0.0 && snr >= cfg.snr_threshold {
        StreamCapacity {
            capacity: snr.ln_1p() / std::f64::consts::LN_2,
            active_streams: 1,
        }
    } else {
        StreamCapacity {
            capacity: 0.0,
            active_streams: 0,
        }
    }
}

/// Σ log₂(1 + SNR_i) over streams with SNR_i = P·σ_i²/(n_t·σ²) at or above
/// the threshold.
pub fn capacity_multiplexing(
    h: &ChannelMatrix,
    cfg: &CapacityConfig,
) -> Result<StreamCapacity, CapacityError> {
    let sv = singular_values(h)?;
    Ok(multiplexing_from_singular_values(&sv, h.ncols(), cfg))
}

/// log₂(1 + P·σ₁²/σ²), or zero when that single stream misses the threshold.
pub fn capacity_beamforming(h: &ChannelMatrix, cfg: &CapacityConfig) -> Result<f64, CapacityError> {
    let sv = singular_values(h)?;
    Ok(beamforming_from_singular_values(&sv, cfg).capacity)
}

/// Evaluates whichever technique `cfg` names.
pub fn capacity_for(
    h: &ChannelMatrix,
    cfg: &CapacityConfig,
) -> Result<StreamCapacity, CapacityError> {
    let sv = singular_values(h)?;
    Ok(match cfg.technique {
        Technique::Beamforming => beamforming_from_singular_values(&sv, cfg),
        Technique::Multiplexing => multiplexing_from_singular_values(&sv, h.ncols(), cfg),
    })
}

/// log₂ det(I + P/(n_t σ²)·H H†) with uniform allocation and no threshold,
/// computed through a Cholesky factor rather than the singular values.
pub fn capacity_formula_det(h: &ChannelMatrix, cfg: &CapacityConfig) -> Result<f64, CapacityError> {
    check_finite(h)?;
    let (nr, nt) = (h.nrows(), h.ncols());
    if nr == 0 || nt == 0 {
        return Ok(0.0);
    }
    let a = Complex64::from(cfg.power_to_noise() / nt as f64);
    let gram = &h.entries * h.entries.adjoint();
    let m = DMatrix::<Complex64>::identity(nr, nr) + gram * a;
    let chol = Cholesky::new(m)
        .ok_or_else(|| CapacityError::InvalidConfig("I + a·HH† is not positive definite".into()))?;
    let l = chol.l_dirty();
    let log_det: f64 = (0..nr).map(|i| 2.0 * l[(i, i)].re.ln()).sum();
    Ok(log_det / std::f64::consts::LN_2)
}

/// Everything a Monte Carlo capacity estimate needs.
#[derive(Debug, Clone)]
pub struct LinkScenario {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    pub frequency: f64,
    pub absorption: f64,
    pub config: CapacityConfig,
}

impl LinkScenario {
    /// Center-to-center link distance, m.
    pub fn distance(&self) -> f64 {
        let (a, b) = (self.tx.center(), self.rx.center());
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    /// bps/Hz
    pub mean_capacity: f64,
    /// Sample standard deviation, bps/Hz.
    pub std_capacity: f64,
    pub trials: usize,
    pub active_streams_mean: f64,
    pub technique: Technique,
    pub reradiation: Reradiation,
    pub frequency: f64,
    pub distance: f64,
    pub absorption: f64,
}

impl CapacityResult {
    pub fn standard_error(&self) -> f64 {
        self.std_capacity / (self.trials as f64).sqrt()
    }
}

/// Mean and sample standard deviation, accumulated in slice order.
pub fn mean_and_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Seed of Monte Carlo trial `trial` under base seed `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[trial as u64])
}

/// Monte Carlo capacity for the scenario's configured technique.
///
/// With re-radiation included, trial `t` uses the channel realization seeded
/// by [`trial_seed`]`(seed, t)`. With re-radiation ignored the LoS matrix is
/// deterministic, so a single evaluation is reported.
pub fn monte_carlo_capacity(
    scenario: &LinkScenario,
    trials: usize,
    seed: u64,
) -> Result<CapacityResult, CapacityError> {
    let mut out = monte_carlo_techniques(scenario, &[scenario.config.technique], trials, seed)?;
    Ok(out.remove(0))
}

/// Like [`monte_carlo_capacity`], but evaluates several techniques on the
/// same realizations; each result equals a separate call with that
/// technique.
pub fn monte_carlo_techniques(
    scenario: &LinkScenario,
    techniques: &[Technique],
    trials: usize,
    seed: u64,
) -> Result<Vec<CapacityResult>, CapacityError> {
    if trials == 0 {
        return Err(CapacityError::NoTrials);
    }
    let cfg = scenario.config.validated()?;
    let n_tx = scenario.tx.len();
    let evaluate = |sv: &[f64]| -> Vec<StreamCapacity> {
        techniques
            .iter()
            .map(|t| match t {
                Technique::Beamforming => beamforming_from_singular_values(sv, &cfg),
                Technique::Multiplexing => multiplexing_from_singular_values(sv, n_tx, &cfg),
            })
            .collect()
    };

    let per_trial: Vec<Vec<StreamCapacity>> = match cfg.reradiation {
        Reradiation::Ignored => {
            let h = los_channel(
                &scenario.tx,
                &scenario.rx,
                scenario.frequency,
                scenario.absorption,
            )?;
            vec![evaluate(&singular_values(&h)?)]
        }
        Reradiation::Included => (0..trials)
            .into_par_iter()
            .map(|t| {
                let h = channel_components(
                    &scenario.tx,
                    &scenario.rx,
                    scenario.frequency,
                    scenario.absorption,
                    trial_seed(seed, t),
                )?
                .total();
                Ok(evaluate(&singular_values(&h)?))
            })
            .collect::<Result<_, CapacityError>>()?,
    };

    let distance = scenario.distance();
    Ok(techniques
        .iter()
        .enumerate()
        .map(|(idx, &technique)| {
            let caps: Vec<f64> = per_trial.iter().map(|r| r[idx].capacity).collect();
            let streams: Vec<f64> = per_trial
                .iter()
                .map(|r| r[idx].active_streams as f64)
                .collect();
            let (mean_capacity, std_capacity) = mean_and_std(&caps);
            let (active_streams_mean, _) = mean_and_std(&streams);
            CapacityResult {
                mean_capacity,
                std_capacity,
                trials: per_trial.len(),
                active_streams_mean,
                technique,
                reradiation: cfg.reradiation,
                frequency: scenario.frequency,
                distance,
                absorption: scenario.absorption,
            }
        })
        .collect())
}

/// Monte Carlo estimates of both sides of E[C(H)] ≥ E[C(√(1-e^{-kd})·H_a)].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundEstimate {
    pub mean_full: f64,
    pub mean_nlos_only: f64,
    pub se_full: f64,
    pub se_nlos_only: f64,
    pub trials: usize,
}

impl LowerBoundEstimate {
    /// Three combined standard errors.
    pub fn margin(&self) -> f64 {
        3.0 * (self.se_full.powi(2) + self.se_nlos_only.powi(2)).sqrt()
    }

    pub fn holds(&self) -> bool {
        self.mean_full >= self.mean_nlos_only - self.margin()
    }
}

/// Both sides use [`capacity_formula_det`] on the same realizations: the full
/// channel H and its re-radiation part alone.
pub fn rician_lower_bound(
    scenario: &LinkScenario,
    trials: usize,
    seed: u64,
) -> Result<LowerBoundEstimate, CapacityError> {
    if trials == 0 {
        return Err(CapacityError::NoTrials);
    }
    if scenario.absorption.is_nan() || scenario.absorption <= 0.0 {
        return Err(CapacityError::NoAbsorption(scenario.absorption));
    }
    let cfg = scenario.config.validated()?;
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let comps = channel_components(
                &scenario.tx,
                &scenario.rx,
                scenario.frequency,
                scenario.absorption,
                trial_seed(seed, t),
            )?;
            let full = capacity_formula_det(&comps.total(), &cfg)?;
            let nlos = capacity_formula_det(&comps.reradiation, &cfg)?;
            Ok((full, nlos))
        })
        .collect::<Result<_, CapacityError>>()?;
    let (full, nlos): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (mean_full, sd_full) = mean_and_std(&full);
    let (mean_nlos_only, sd_nlos) = mean_and_std(&nlos);
    let root_n = (trials as f64).sqrt();
    Ok(LowerBoundEstimate {
        mean_full,
        mean_nlos_only,
        se_full: sd_full / root_n,
        se_nlos_only: sd_nlos / root_n,
        trials,
    })
}
