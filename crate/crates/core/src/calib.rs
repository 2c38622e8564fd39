//! Power and photon-number conversions.
//!
//! Intracavity photon number from an injected signal power:
//! `N_p = 4 P_s kappa_ext / (hbar omega_s kappa_tot^2)`, all rates angular.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, JpoError, Result};
use crate::potential::ResonatorParams;

/// Reduced Planck constant, CODATA 2018, J s.
pub const HBAR: f64 = 1.054571817e-34;

/// A non-negative power in watts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerLevel(f64);

impl PowerLevel {
    pub fn watts(w: f64) -> Result<Self> {
        ensure_finite("power", w)?;
        if w < 0.0 {
            return Err(invalid(format!("power must be >= 0 W, got {w}")));
        }
        Ok(Self(w))
    }

    pub fn dbm(level: f64) -> Result<Self> {
        Self::watts(dbm_to_watts(level)?)
    }

    pub fn as_watts(self) -> f64 {
        self.0
    }

    pub fn as_dbm(self) -> Result<f64> {
        watts_to_dbm(self.0)
    }
}

pub fn dbm_to_watts(level: f64) -> Result<f64> {
    ensure_finite("power level", level)?;
    Ok(1e-3 * 10f64.powf(level / 10.0))
}

pub fn watts_to_dbm(p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(JpoError::Domain(format!("dBm needs a positive power, got {p} W")));
    }
    Ok(10.0 * (p / 1e-3).log10())
}

pub fn photon_number(p_s: f64, params: &ResonatorParams) -> Result<f64> {
    params.validate()?;
    let p = PowerLevel::watts(p_s)?.as_watts();
    let kt = params.kappa_tot();
    Ok(4.0 * p * params.kappa_ext / (HBAR * params.omega_s * kt * kt))
}

/// Signal power that puts `n_p` photons in the cavity.
pub fn power_for_photon_number(n_p: f64, params: &ResonatorParams) -> Result<f64> {
    params.validate()?;
    ensure_finite("photon number", n_p)?;
    if n_p < 0.0 {
        return Err(invalid(format!("photon number must be >= 0, got {n_p}")));
    }
    let kt = params.kappa_tot();
    Ok(n_p * HBAR * params.omega_s * kt * kt / (4.0 * params.kappa_ext))
}

/// Drive amplitude `|E_s|` in the potential's units for a target photon
/// number: `kappa_tot sqrt(N_p / (4 kappa_ext))`, so that
/// `N_p = 4 kappa_ext |E_s|^2 / kappa_tot^2`.
pub fn ils_amplitude_for_photon_number(n_p: f64, params: &ResonatorParams) -> Result<f64> {
    params.validate()?;
    ensure_finite("photon number", n_p)?;
    if n_p < 0.0 {
        return Err(invalid(format!("photon number must be >= 0, got {n_p}")));
    }
    Ok(params.kappa_tot() * (n_p / (4.0 * params.kappa_ext)).sqrt())
}

pub fn photon_number_for_ils_amplitude(amplitude: f64, params: &ResonatorParams) -> Result<f64> {
    params.validate()?;
    ensure_finite("ILS amplitude", amplitude)?;
    let kt = params.kappa_tot();
    Ok(4.0 * params.kappa_ext * amplitude * amplitude / (kt * kt))
}

/// `P_p / P_th`, the value taken by `DriveConfig::pump_ratio`.
pub fn pump_ratio_from_powers(p_p: f64, p_th: f64) -> Result<f64> {
    ensure_finite("pump power", p_p)?;
    ensure_finite("threshold power", p_th)?;
    if !(p_th > 0.0) {
        return Err(JpoError::Domain(format!("threshold power must be > 0, got {p_th} W")));
    }
    if p_p < 0.0 {
        return Err(invalid(format!("pump power must be >= 0, got {p_p} W")));
    }
    Ok(p_p / p_th)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> ResonatorParams {
        ResonatorParams::from_hz(17e6, 0.3e6, 5.95e9, -1.0).unwrap()
    }

    #[test]
    fn zero_power_zero_photons() {
        assert_eq!(photon_number(0.0, &device()).unwrap(), 0.0);
        assert!(photon_number(-1e-18, &device()).is_err());
    }

    #[test]
    fn linear_in_power() {
        let p = device();
        let a = photon_number(1.3e-16, &p).unwrap();
        let b = photon_number(2.6e-16, &p).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn device_power_for_target() {
        // evaluated independently in double precision
        let p = power_for_photon_number(2.3, &device()).unwrap();
        assert!((p / 2.5076330945795025e-16 - 1.0).abs() < 1e-12);
        assert!((watts_to_dbm(p).unwrap() + 126.007).abs() < 1e-3);
        assert!((photon_number(p, &device()).unwrap() - 2.3).abs() < 1e-12);
    }

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_watts(0.0).unwrap(), 1e-3);
        assert!((dbm_to_watts(-56.0).unwrap() / 2.5118864315095824e-9 - 1.0).abs() < 1e-12);
        for l in [-130.0, -56.0, 0.0, 17.3] {
            let back = watts_to_dbm(dbm_to_watts(l).unwrap()).unwrap();
            assert!((back - l).abs() < 1e-12);
        }
        assert!(matches!(watts_to_dbm(0.0), Err(JpoError::Domain(_))));
        assert!(watts_to_dbm(-1.0).is_err());
    }

    #[test]
    fn pump_ratio() {
        assert_eq!(pump_ratio_from_powers(2e-9, 2e-9).unwrap(), 1.0);
        let r = pump_ratio_from_powers(8e-9, 2e-9).unwrap();
        assert_eq!(r, 4.0);
        assert_eq!(r.sqrt(), 2.0);
        assert!(matches!(pump_ratio_from_powers(1.0, 0.0), Err(JpoError::Domain(_))));
    }

    #[test]
    fn amplitude_round_trip() {
        let p = device();
        let a = ils_amplitude_for_photon_number(2.3, &p).unwrap();
        assert!((photon_number_for_ils_amplitude(a, &p).unwrap() - 2.3).abs() < 1e-12);
    }

    #[test]
    fn power_level() {
        assert!(PowerLevel::watts(-1.0).is_err());
        let l = PowerLevel::dbm(-56.0).unwrap();
        assert!((l.as_dbm().unwrap() + 56.0).abs() < 1e-12);
    }
}
