//! RF channel models: free-space range, path loss, SNR, Shannon capacity,
//! range resolution and penetration depth.
//!
//! Everything is computed in linear SI units; the only places decibels
//! appear are the explicit conversions [`db_to_linear`] / [`linear_to_db`]
//! and the functions whose result is defined in dB.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Reference noise temperature, K.
pub const REFERENCE_TEMPERATURE_K: f64 = 290.0;

/// Peak gain of the module antenna.
pub const ANTENNA_GAIN_DBI: f64 = 2.5;

/// Default carrier, inside the 5.5 - 7.5 GHz antenna band.
pub const DEFAULT_CARRIER_HZ: f64 = 6.5e9;

pub const DEFAULT_BANDWIDTH_HZ: f64 = 500e6;

/// -41.3 dBm/MHz spectral mask integrated over 500 MHz (-14.3 dBm).
pub const DEFAULT_TX_POWER_W: f64 = 3.715e-5;

/// Loss added per obstacle crossed (the L * F product), dB.
pub const DEFAULT_OBSTACLE_LOSS_DB: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfError {
    #[error("{what} must be {requirement}, got {value}")]
    Domain {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

fn require_positive(what: &'static str, value: f64) -> Result<f64, RfError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(RfError::Domain {
            what,
            requirement: "positive and finite",
            value,
        })
    }
}

fn require_non_negative(what: &'static str, value: f64) -> Result<f64, RfError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(RfError::Domain {
            what,
            requirement: "non-negative and finite",
            value,
        })
    }
}

/// Radio channel description used by the link-budget functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub tx_gain_linear: f64,
    pub rx_gain_linear: f64,
    /// Path loss coefficient `L`; the product `L * F` is the dB added per obstacle.
    pub path_loss_coeff_l: f64,
    /// Frequency-dependent loss factor `F`.
    pub freq_loss_factor_f: f64,
    /// Receiver noise power used for SNR, W. Defaults to kTB at 290 K.
    pub noise_power_w: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let gain = db_to_linear(ANTENNA_GAIN_DBI);
        Self {
            carrier_frequency_hz: DEFAULT_CARRIER_HZ,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            tx_power_w: DEFAULT_TX_POWER_W,
            tx_gain_linear: gain,
            rx_gain_linear: gain,
            path_loss_coeff_l: DEFAULT_OBSTACLE_LOSS_DB,
            freq_loss_factor_f: 1.0,
            noise_power_w: thermal_noise_w(DEFAULT_BANDWIDTH_HZ, REFERENCE_TEMPERATURE_K),
        }
    }
}

impl ChannelParams {
    /// Unity-gain channel at the default carrier, convenient for textbook checks.
    pub fn isotropic() -> Self {
        Self {
            tx_gain_linear: 1.0,
            rx_gain_linear: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RfError> {
        require_positive("carrier_frequency_hz", self.carrier_frequency_hz)?;
        require_positive("bandwidth_hz", self.bandwidth_hz)?;
        require_positive("tx_power_w", self.tx_power_w)?;
        require_positive("tx_gain_linear", self.tx_gain_linear)?;
        require_positive("rx_gain_linear", self.rx_gain_linear)?;
        require_non_negative("path_loss_coeff_l", self.path_loss_coeff_l)?;
        require_non_negative("freq_loss_factor_f", self.freq_loss_factor_f)?;
        require_positive("noise_power_w", self.noise_power_w)?;
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// dB added by each obstacle on the path (`L * F`).
    pub fn obstacle_loss_db(&self) -> f64 {
        self.path_loss_coeff_l * self.freq_loss_factor_f
    }

    /// Full link budget at `distance_m` through `n_obstacles` obstacles.
    pub fn link_budget(&self, distance_m: f64, n_obstacles: u32) -> Result<LinkBudget, RfError> {
        let attenuation_db = path_loss_db(self, distance_m, n_obstacles)?;
        let rx_power_w = self.tx_power_w * self.tx_gain_linear * self.rx_gain_linear
            / db_to_linear(attenuation_db);
        let snr_db = snr_db(rx_power_w, self.noise_power_w)?;
        let capacity_bps = channel_capacity_bps(self.bandwidth_hz, db_to_linear(snr_db))?;
        Ok(LinkBudget {
            distance_m,
            attenuation_db,
            snr_db,
            capacity_bps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkBudget {
    pub distance_m: f64,
    pub attenuation_db: f64,
    pub snr_db: f64,
    pub capacity_bps: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Thermal noise power kTB, W.
pub fn thermal_noise_w(bandwidth_hz: f64, temperature_k: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz
}

/// Free-space distance at which the received power drops to `rx_power_w`:
/// `D = lambda / (4 pi) * sqrt(Pt Gt Gr / Pr)`.
pub fn free_space_range(params: &ChannelParams, rx_power_w: f64) -> Result<f64, RfError> {
    params.validate()?;
    let rx = require_positive("rx_power_w", rx_power_w)?;
    let eirp = params.tx_power_w * params.tx_gain_linear * params.rx_gain_linear;
    Ok(params.wavelength_m() / (4.0 * PI) * (eirp / rx).sqrt())
}

/// Attenuation `20 log10(4 pi d / lambda) + n L F`, dB.
pub fn path_loss_db(params: &ChannelParams, distance_m: f64, n_obstacles: u32) -> Result<f64, RfError> {
    params.validate()?;
    let d = require_positive("distance_m", distance_m)?;
    let free_space = 20.0 * (4.0 * PI * d / params.wavelength_m()).log10();
    Ok(free_space + f64::from(n_obstacles) * params.obstacle_loss_db())
}

/// `10 log10(P_signal / P_noise)`.
pub fn snr_db(p_signal_w: f64, p_noise_w: f64) -> Result<f64, RfError> {
    let s = require_positive("p_signal_w", p_signal_w)?;
    let n = require_positive("p_noise_w", p_noise_w)?;
    Ok(linear_to_db(s / n))
}

/// Shannon-Hartley capacity `B log2(1 + SNR)` with a *linear* SNR.
pub fn channel_capacity_bps(bandwidth_hz: f64, snr_linear: f64) -> Result<f64, RfError> {
    let b = require_positive("bandwidth_hz", bandwidth_hz)?;
    let snr = require_non_negative("snr_linear", snr_linear)?;
    Ok(b * (1.0 + snr).log2())
}

/// Range resolution `c / (2B)`.
pub fn range_resolution_m(bandwidth_hz: f64) -> Result<f64, RfError> {
    let b = require_positive("bandwidth_hz", bandwidth_hz)?;
    Ok(SPEED_OF_LIGHT / (2.0 * b))
}

/// Penetration depth `v * tau`.
pub fn penetration_depth_m(velocity_mps: f64, delay_s: f64) -> Result<f64, RfError> {
    let v = require_positive("velocity_mps", velocity_mps)?;
    let tau = require_non_negative("delay_s", delay_s)?;
    Ok(v * tau)
}
