//! Terahertz MIMO channel simulation.
//!
//! Molecular absorption attenuates the line-of-sight wave and re-radiates the
//! absorbed energy with random phase, turning a LoS link into a Rician
//! channel. This crate ingests absorption spectra, synthesizes the resulting
//! MIMO channel matrices for square planar arrays and compares beamforming
//! against blind spatial multiplexing over frequency, distance and power.
//!
//! Modules, bottom-up:
//! - [`spectra`]: absorption-coefficient spectra and gas mixtures
//! - [`propagation`]: spreading/absorption loss, received powers, K-factor
//! - [`channel`]: array geometry and channel matrices
//! - [`capacity`]: eigenchannel capacity and Monte Carlo estimates
//! - [`cli`]: scenario configs, presets, sweeps and CSV output

pub mod capacity;
pub mod channel;
pub mod cli;
pub mod propagation;
pub mod spectra;
