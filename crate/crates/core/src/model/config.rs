use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_FREQUENCY: f64 = 28e9;
const DEFAULT_SPEED_OF_LIGHT: f64 = 3e8;
const DEFAULT_REFRACTIVE_INDEX: f64 = 1.4;

/// Physical and solver constants of one scenario.
///
/// Defaults reproduce the reference mmWave setup: 28 GHz carrier, two input
/// ports spaced 5/4 of a guided wavelength apart, ten PAs per direction on a
/// 1 m pitch, FU at (5, 30) m and BU at (-5, 20) m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Hz.
    pub carrier_frequency: f64,
    /// m/s.
    pub speed_of_light: f64,
    pub effective_refractive_index: f64,
    pub num_ports: usize,
    pub num_pas_per_direction: usize,
    /// m.
    pub port_spacing: f64,
    /// m.
    pub pa_spacing: f64,
    /// Largest PA micro-displacement magnitude, m.
    pub max_displacement: f64,
    pub transmit_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub user_fu_position: [f64; 2],
    pub user_bu_position: [f64; 2],
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub displacement_grid_points: usize,
    /// Relative sum-rate change that stops the outer loop.
    pub convergence_tolerance: f64,
    pub max_iterations: usize,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let guided = DEFAULT_SPEED_OF_LIGHT / DEFAULT_FREQUENCY / DEFAULT_REFRACTIVE_INDEX;
        Self {
            carrier_frequency: DEFAULT_FREQUENCY,
            speed_of_light: DEFAULT_SPEED_OF_LIGHT,
            effective_refractive_index: DEFAULT_REFRACTIVE_INDEX,
            num_ports: 2,
            num_pas_per_direction: 10,
            port_spacing: 1.25 * guided,
            pa_spacing: 1.0,
            max_displacement: 0.01,
            transmit_power_dbm: 20.0,
            noise_power_dbm: -80.0,
            user_fu_position: [5.0, 30.0],
            user_bu_position: [-5.0, 20.0],
            penalty_init: 0.1,
            penalty_growth: 1.02,
            displacement_grid_points: 1000,
            convergence_tolerance: 1e-3,
            max_iterations: 1000,
            rng_seed: 0,
        }
    }
}

/// Quantities recomputed from a [`SystemConfig`]; never stored independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Free-space wavelength, m.
    pub wavelength: f64,
    /// Free-space wavenumber, 1/m.
    pub wavenumber: f64,
    /// In-waveguide wavelength, m.
    pub guided_wavelength: f64,
    /// In-waveguide wavenumber, 1/m.
    pub guided_wavenumber: f64,
    /// Free-space channel factor `lambda / (4 pi)`, m.
    pub path_gain: f64,
    pub transmit_power_mw: f64,
    pub noise_power_mw: f64,
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        }
        positive("carrier_frequency", self.carrier_frequency)?;
        positive("speed_of_light", self.speed_of_light)?;
        if !(self.effective_refractive_index.is_finite() && self.effective_refractive_index >= 1.0)
        {
            return Err(Error::config(
                "effective_refractive_index",
                format!("must be >= 1, got {}", self.effective_refractive_index),
            ));
        }
        if self.num_ports < 1 {
            return Err(Error::config("num_ports", "must be >= 1"));
        }
        if self.num_pas_per_direction < 1 {
            return Err(Error::config("num_pas_per_direction", "must be >= 1"));
        }
        positive("port_spacing", self.port_spacing)?;
        positive("pa_spacing", self.pa_spacing)?;
        if !(self.max_displacement.is_finite() && self.max_displacement >= 0.0) {
            return Err(Error::config("max_displacement", "must be >= 0"));
        }
        if !self.transmit_power_dbm.is_finite() {
            return Err(Error::config("transmit_power_dbm", "must be finite"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::config("noise_power_dbm", "must be finite"));
        }
        for (field, p) in [
            ("user_fu_position", self.user_fu_position),
            ("user_bu_position", self.user_bu_position),
        ] {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::config(field, "coordinates must be finite"));
            }
        }
        positive("penalty_init", self.penalty_init)?;
        if !(self.penalty_growth.is_finite() && self.penalty_growth > 1.0) {
            return Err(Error::config("penalty_growth", "must be > 1"));
        }
        if self.displacement_grid_points < 2 {
            return Err(Error::config("displacement_grid_points", "must be >= 2"));
        }
        positive("convergence_tolerance", self.convergence_tolerance)?;
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Recompute the wavelength family and linear powers from `config`.
pub fn derive_constants(config: &SystemConfig) -> Result<DerivedConstants> {
    if !(config.carrier_frequency.is_finite() && config.carrier_frequency > 0.0) {
        return Err(Error::config("carrier_frequency", "must be positive"));
    }
    if !(config.effective_refractive_index >= 1.0) {
        return Err(Error::config("effective_refractive_index", "must be >= 1"));
    }
    let wavelength = config.speed_of_light / config.carrier_frequency;
    let guided_wavelength = wavelength / config.effective_refractive_index;
    Ok(DerivedConstants {
        wavelength,
        wavenumber: 2.0 * PI / wavelength,
        guided_wavelength,
        guided_wavenumber: 2.0 * PI / guided_wavelength,
        path_gain: wavelength / (4.0 * PI),
        transmit_power_mw: dbm_to_mw(config.transmit_power_dbm),
        noise_power_mw: dbm_to_mw(config.noise_power_dbm),
    })
}

/// A validated configuration together with its derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub consts: DerivedConstants,
}

impl Scenario {
    pub fn new(config: SystemConfig) -> Result<Self> {
        config.validate()?;
        let consts = derive_constants(&config)?;
        Ok(Self { config, consts })
    }

    pub fn num_ports(&self) -> usize {
        self.config.num_ports
    }

    pub fn num_pas(&self) -> usize {
        self.config.num_pas_per_direction
    }

    pub fn transmit_power(&self) -> f64 {
        self.consts.transmit_power_mw
    }

    pub fn noise_power(&self) -> f64 {
        self.consts.noise_power_mw
    }

    /// Same scenario at a different transmit power.
    pub fn with_transmit_power_dbm(&self, dbm: f64) -> Result<Self> {
        let mut config = self.config.clone();
        config.transmit_power_dbm = dbm;
        Self::new(config)
    }
}
