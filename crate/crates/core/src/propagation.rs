//! Scalar link-budget physics for a single transmitter/receiver pair.
//!
//! All powers are in watts and all attenuations are linear power ratios;
//! decibels appear only in [`total_attenuation_db`] and at the CLI edge.

use std::f64::consts::PI;

use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference temperature for molecular noise, kelvin.
pub const REFERENCE_TEMPERATURE_K: f64 = 296.0;
/// Receiver noise power per antenna, watts (-80 dBm).
pub const DEFAULT_NOISE_POWER_W: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("{name} must be {requirement}, got {value}")]
    OutOfDomain {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn check(name: &'static str, value: f64, positive: bool) -> Result<(), LinkError> {
    let ok = value.is_finite() && if positive { value > 0.0 } else { value >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(LinkError::OutOfDomain {
            name,
            requirement: if positive {
                "positive and finite"
            } else {
                "non-negative and finite"
            },
            value,
        })
    }
}

/// Operating point of one link: carrier, distance, medium and powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCondition {
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Transmitter/receiver separation, m.
    pub distance: f64,
    /// Medium absorption coefficient at `frequency`, 1/m.
    pub absorption: f64,
    /// Total transmit power, W.
    pub transmit_power: f64,
    /// Reference temperature, K.
    pub reference_temperature: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
}

impl LinkCondition {
    pub fn new(
        frequency: f64,
        distance: f64,
        absorption: f64,
        transmit_power: f64,
    ) -> Result<Self, LinkError> {
        check("frequency", frequency, true)?;
        check("distance", distance, true)?;
        check("absorption coefficient", absorption, false)?;
        check("transmit power", transmit_power, true)?;
        Ok(Self {
            frequency,
            distance,
            absorption,
            transmit_power,
            reference_temperature: REFERENCE_TEMPERATURE_K,
            noise_power: DEFAULT_NOISE_POWER_W,
        })
    }

    pub fn with_noise_power(mut self, noise_power: f64) -> Result<Self, LinkError> {
        check("noise power", noise_power, true)?;
        self.noise_power = noise_power;
        Ok(self)
    }

    pub fn with_reference_temperature(mut self, kelvin: f64) -> Result<Self, LinkError> {
        check("reference temperature", kelvin, true)?;
        self.reference_temperature = kelvin;
        Ok(self)
    }

    /// Free-space received power Pt·(c/4πfd)², the budget shared between the
    /// attenuated LoS wave and the re-radiated wave.
    pub fn free_space_power(&self) -> f64 {
        self.transmit_power / spreading_attenuation(self.frequency, self.distance)
    }

    /// Fraction of power surviving molecular absorption, e^{-kd}.
    pub fn transmittance(&self) -> f64 {
        (-self.absorption * self.distance).exp()
    }
}

/// Wavelength c/f in meters.
pub fn wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// Free-space amplitude gain c/(4πfd) of an isotropic pair.
pub fn free_space_amplitude(frequency: f64, distance: f64) -> f64 {
    SPEED_OF_LIGHT / (4.0 * PI * frequency * distance)
}

/// Spreading loss (4πfd/c)².
pub fn spreading_attenuation(frequency: f64, distance: f64) -> f64 {
    let x = 4.0 * PI * frequency * distance / SPEED_OF_LIGHT;
    x * x
}

/// Molecular absorption loss e^{kd}.
pub fn absorption_attenuation(absorption: f64, distance: f64) -> f64 {
    (absorption * distance).exp()
}

/// Received power of the attenuated line-of-sight wave.
pub fn los_received_power(cond: &LinkCondition) -> f64 {
    cond.free_space_power() * cond.transmittance()
}

/// Received power of the molecular re-radiation, Pt·(1-e^{-kd})·(c/4πfd)².
pub fn reradiated_power(cond: &LinkCondition) -> f64 {
    let absorbed = -(-cond.absorption * cond.distance).exp_m1();
    cond.free_space_power() * absorbed
}

/// Sky-noise PSD in W/Hz. With `infinite_path` the absorbed fraction is
/// taken as one, i.e. the d→∞ background that no longer depends on k or d.
pub fn sky_noise_psd(cond: &LinkCondition, infinite_path: bool) -> f64 {
    let absorbed = if infinite_path {
        1.0
    } else {
        -(-cond.absorption * cond.distance).exp_m1()
    };
    let a = SPEED_OF_LIGHT / ((4.0 * PI).sqrt() * cond.frequency);
    BOLTZMANN * cond.reference_temperature * absorbed * a * a
}

/// Self-induced noise PSD. Same expression as [`reradiated_power`] with the
/// transmit power read as a PSD.
pub fn self_induced_noise_psd(cond: &LinkCondition) -> f64 {
    reradiated_power(cond)
}

/// Total molecular noise PSD, sky noise plus self-induced noise.
pub fn molecular_noise_psd(cond: &LinkCondition, infinite_path: bool) -> f64 {
    sky_noise_psd(cond, infinite_path) + self_induced_noise_psd(cond)
}

/// Rician K-factor e^{-kd}/(1-e^{-kd}): LoS power over re-radiated power.
/// A transparent medium (kd = 0) yields `f64::INFINITY`.
pub fn k_factor(absorption: f64, distance: f64) -> f64 {
    let x = absorption * distance;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    // e^{-x}/(1-e^{-x}) = 1/(e^x - 1)
    1.0 / x.exp_m1()
}

/// Spreading plus absorption loss in dB.
pub fn total_attenuation_db(frequency: f64, distance: f64, absorption: f64) -> f64 {
    // log-domain sum keeps large kd from overflowing
    10.0 * spreading_attenuation(frequency, distance).log10()
        + 10.0 * std::f64::consts::LOG10_E * absorption * distance
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // values from a 40-digit mpmath evaluation of the closed forms
    const SPREAD_500GHZ_1M: f64 = 439_256_635.603_964_56;
    const EXP_26: f64 = 195_729_609_428.838_76;
    const LOS_1MW_500GHZ_1M_K001: f64 = 2.253_921_178_419_717e-12;
    const SKY_1THZ_296K: f64 = 2.922_850_050_718_496_5e-29;
    const K_001: f64 = 99.500_833_331_944_45;

    #[test]
    fn spreading_examples() {
        let f = SPEED_OF_LIGHT / (4.0 * PI);
        assert_relative_eq!(spreading_attenuation(f, 1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            spreading_attenuation(5e11, 1.0),
            SPREAD_500GHZ_1M,
            max_relative = 1e-13
        );
        let db10 = 10.0 * spreading_attenuation(5e11, 10.0).log10();
        assert!((db10 - 106.427).abs() < 1e-3);
        assert!((db10 - 107.0).abs() < 1.0);
    }

    #[test]
    fn absorption_examples() {
        assert_eq!(absorption_attenuation(0.0, 5.0), 1.0);
        assert_relative_eq!(
            absorption_attenuation(10f64.ln(), 1.0),
            10.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            absorption_attenuation(2.6, 10.0),
            EXP_26,
            max_relative = 1e-13
        );
        assert!(
            (total_attenuation_db(1e9, 1.0, 2.6)
                - total_attenuation_db(1e9, 1.0, 0.0)
                - 112.9166 / 10.0)
                .abs()
                < 1e-3
        );
    }

    #[test]
    fn los_power_examples() {
        let free = LinkCondition::new(5e11, 1.0, 0.0, 1e-3).unwrap();
        assert_relative_eq!(
            los_received_power(&free),
            1e-3 * free_space_amplitude(5e11, 1.0).powi(2),
            max_relative = 1e-14
        );
        let far = LinkCondition::new(5e11, 2.0, 0.0, 1e-3).unwrap();
        assert_relative_eq!(
            los_received_power(&far),
            los_received_power(&free) / 4.0,
            max_relative = 1e-14
        );
        let lossy = LinkCondition::new(5e11, 1.0, 0.01, 1e-3).unwrap();
        assert_relative_eq!(
            los_received_power(&lossy),
            LOS_1MW_500GHZ_1M_K001,
            max_relative = 1e-12
        );
        // the c ≈ 3e8 hand value 2.257e-12 agrees within the constant's 0.14 %
        assert_relative_eq!(los_received_power(&lossy), 2.257e-12, max_relative = 2e-3);
    }

    #[test]
    fn reradiated_power_limits() {
        let none = LinkCondition::new(5e11, 1.0, 0.0, 1e-3).unwrap();
        assert_eq!(reradiated_power(&none), 0.0);
        let opaque = LinkCondition::new(5e11, 1.0, 1e4, 1e-3).unwrap();
        assert_relative_eq!(
            reradiated_power(&opaque),
            opaque.free_space_power(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn sky_noise_examples() {
        let clear = LinkCondition::new(1e12, 3.0, 0.0, 1e-3).unwrap();
        assert_eq!(sky_noise_psd(&clear, false), 0.0);
        let limit = sky_noise_psd(&clear, true);
        let other = LinkCondition::new(1e12, 0.1, 7.0, 1e-3).unwrap();
        assert_eq!(limit, sky_noise_psd(&other, true));
        assert_relative_eq!(limit, SKY_1THZ_296K, max_relative = 1e-13);
        let thick = LinkCondition::new(1e12, 100.0, 10.0, 1e-3).unwrap();
        assert_relative_eq!(
            sky_noise_psd(&thick, false),
            SKY_1THZ_296K,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            molecular_noise_psd(&thick, false),
            SKY_1THZ_296K + reradiated_power(&thick),
            max_relative = 1e-15
        );
    }

    #[test]
    fn k_factor_examples() {
        assert_relative_eq!(k_factor(2f64.ln(), 1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(k_factor(0.01, 1.0), K_001, max_relative = 1e-13);
        assert_eq!(k_factor(0.0, 1.0), f64::INFINITY);
        let d = 1.0;
        assert!(k_factor(1e-5, d) > k_factor(1e-3, d));
        assert!(k_factor(1e-3, d) > k_factor(1e-1, d));
    }

    #[test]
    fn condition_validation() {
        assert!(LinkCondition::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(LinkCondition::new(1.0, -1.0, 0.0, 1.0).is_err());
        assert!(LinkCondition::new(1.0, 1.0, -0.1, 1.0).is_err());
        assert!(LinkCondition::new(1.0, 1.0, 0.0, 0.0).is_err());
        let c = LinkCondition::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(c.with_noise_power(0.0).is_err());
        assert_eq!(c.noise_power, 1e-11);
        assert_eq!(c.reference_temperature, 296.0);
    }

    #[test]
    fn dbm_boundary() {
        assert_eq!(dbm_to_watts(0.0), 1e-3);
        assert_relative_eq!(dbm_to_watts(10.0), 1e-2, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-80.0), 1e-11, max_relative = 1e-14);
        assert_relative_eq!(watts_to_dbm(1e-2), 10.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn energy_bookkeeping(f in 1e10f64..1e13, d in 1e-3f64..100.0, k in 0.0f64..100.0) {
            let cond = LinkCondition::new(f, d, k, 1e-3).unwrap();
            let sum = los_received_power(&cond) + reradiated_power(&cond);
            let free = 1e-3 * free_space_amplitude(f, d).powi(2);
            prop_assert!(((sum - free) / free).abs() <= 1e-12);
        }

        #[test]
        fn k_factor_depends_on_product(kd in 1e-6f64..50.0, scale in 0.01f64..100.0) {
            let a = k_factor(kd, 1.0);
            let b = k_factor(kd / scale, scale);
            prop_assert!(((a - b) / a).abs() <= 1e-12);
        }

        #[test]
        fn attenuation_monotone(f in 1e10f64..1e13, d in 1e-3f64..100.0, k in 0.0f64..100.0, step in 1.001f64..2.0) {
            let base = total_attenuation_db(f, d, k);
            prop_assert!(total_attenuation_db(f * step, d, k) > base);
            prop_assert!(total_attenuation_db(f, d * step, k) > base);
            prop_assert!(total_attenuation_db(f, d, k * step + 1e-3) > base);
        }
    }
}
