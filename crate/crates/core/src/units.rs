//! Unit and spectral conversions.
//!
//! Internal conventions used across the crate: frequencies in Hz, powers in W,
//! distances in km, attenuation in 1/km (power), Raman gain in 1/(W·km),
//! β₂ in s²/km and β₃ in s³/km.

use crate::error::{Error, Result};
use std::f64::consts::{LN_10, PI};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn w_to_dbm(w: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::invalid(format!("power must be non-negative, got {w} W")));
    }
    Ok(10.0 * (w / 1e-3).log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Converts a wavelength in metres to a frequency in Hz. The map is its own
/// inverse, so [`frequency_to_wavelength`] is the same computation.
pub fn wavelength_to_frequency(wavelength_m: f64) -> Result<f64> {
    if !(wavelength_m > 0.0) || !wavelength_m.is_finite() {
        return Err(Error::invalid(format!(
            "wavelength must be positive and finite, got {wavelength_m} m"
        )));
    }
    Ok(SPEED_OF_LIGHT / wavelength_m)
}

pub fn frequency_to_wavelength(frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::invalid(format!(
            "frequency must be positive and finite, got {frequency_hz} Hz"
        )));
    }
    Ok(SPEED_OF_LIGHT / frequency_hz)
}

/// dB/km → 1/km (power attenuation coefficient).
pub fn db_per_km_to_neper(alpha_db: f64) -> f64 {
    alpha_db * LN_10 / 10.0
}

/// Group-velocity dispersion coefficients at a reference wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion {
    /// s²/km
    pub beta2: f64,
    /// s³/km
    pub beta3: f64,
}

/// Converts D [ps/(nm·km)] and S [ps/(nm²·km)] at `wavelength_m` into β₂, β₃.
///
/// β₂ = −Dλ²/(2πc), β₃ = (λ²/(2πc))²·(S + 2D/λ).
pub fn dispersion_to_beta(d_ps_nm_km: f64, s_ps_nm2_km: f64, wavelength_m: f64) -> Result<Dispersion> {
    if !(wavelength_m > 0.0) {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength_m} m"
        )));
    }
    // SI per metre of fibre: D in s/m², S in s/m³.
    let d = d_ps_nm_km * 1e-12 / (1e-9 * 1e3);
    let s = s_ps_nm2_km * 1e-12 / (1e-18 * 1e3);
    let k = wavelength_m * wavelength_m / (2.0 * PI * SPEED_OF_LIGHT);
    let beta2 = -d * k; // s²/m
    let beta3 = k * k * (s + 2.0 * d / wavelength_m); // s³/m
    Ok(Dispersion {
        beta2: beta2 * 1e3,
        beta3: beta3 * 1e3,
    })
}

/// Inverse of [`dispersion_to_beta`].
pub fn beta_to_dispersion(disp: Dispersion, wavelength_m: f64) -> Result<(f64, f64)> {
    if !(wavelength_m > 0.0) {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength_m} m"
        )));
    }
    let k = wavelength_m * wavelength_m / (2.0 * PI * SPEED_OF_LIGHT);
    let beta2 = disp.beta2 * 1e-3;
    let beta3 = disp.beta3 * 1e-3;
    let d = -beta2 / k;
    let s = beta3 / (k * k) - 2.0 * d / wavelength_m;
    Ok((d * (1e-9 * 1e3) / 1e-12, s * (1e-18 * 1e3) / 1e-12))
}

/// Phonon occupancy 1/(exp(hΔf/k_BT) − 1).
pub fn phonon_occupancy(delta_f_hz: f64, temperature_k: f64) -> f64 {
    1.0 / (PLANCK * delta_f_hz / (BOLTZMANN * temperature_k)).exp_m1()
}

/// Which conversion [`convert_units`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    DbmToW,
    WToDbm,
    WavelengthToFrequency,
    FrequencyToWavelength,
}

pub fn convert_units(value: f64, kind: Conversion) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("non-finite input {value}")));
    }
    match kind {
        Conversion::DbmToW => Ok(dbm_to_w(value)),
        Conversion::WToDbm => w_to_dbm(value),
        Conversion::WavelengthToFrequency => wavelength_to_frequency(value),
        Conversion::FrequencyToWavelength => frequency_to_wavelength(value),
    }
}
