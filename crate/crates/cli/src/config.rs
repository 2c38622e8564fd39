//! Experiment configuration (JSON) and its resolution into per-member runs.
//!
//! Keys carrying physical quantities end in their unit: `_hz` for ordinary
//! frequencies (`kappa_ext_hz` is `kappa_ext / 2pi`), `_per_s` for angular
//! rates, `_s` for times, `_rad` for angles and `_dbm` for powers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use jpo_core::calib;
use jpo_core::dynamics::{InitialPoint, LabelConfig, SimulationConfig};
use jpo_core::potential::{DriveConfig, EffectivePotential, ResonatorParams};
use jpo_core::spectra::{PhaseReference, RotationMode, WelchConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ResonatorSection {
    /// Dimensionless model: all loss external, `omega_s = 1`. Give either
    /// `gamma_per_s` (negative) or `well_radius`, the no-locking well
    /// position at threshold.
    Scaled {
        kappa_per_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_per_s: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        well_radius: Option<f64>,
    },
    Physical {
        kappa_ext_hz: f64,
        kappa_int_hz: f64,
        omega_s_hz: f64,
        gamma_rad_per_s: f64,
    },
}

impl ResonatorSection {
    pub fn resolve(&self) -> Result<ResonatorParams, CliError> {
        let p = match *self {
            ResonatorSection::Scaled {
                kappa_per_s,
                gamma_per_s,
                well_radius,
            } => match (gamma_per_s, well_radius) {
                (Some(g), None) => ResonatorParams::scaled(kappa_per_s, g),
                (None, Some(r)) => ResonatorParams::scaled_with_well_radius(kappa_per_s, r),
                _ => {
                    return Err(CliError::Config(
                        "scaled resonator needs exactly one of gamma_per_s or well_radius".into(),
                    ))
                }
            },
            ResonatorSection::Physical {
                kappa_ext_hz,
                kappa_int_hz,
                omega_s_hz,
                gamma_rad_per_s,
            } => ResonatorParams::from_hz(kappa_ext_hz, kappa_int_hz, omega_s_hz, gamma_rad_per_s),
        };
        p.map_err(|e| CliError::Config(format!("resonator: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_power_dbm: Option<f64>,
    #[serde(default)]
    pub ils_amplitude: f64,
    #[serde(default = "default_phase")]
    pub ils_phase_rad: f64,
}

fn default_phase() -> f64 {
    -std::f64::consts::FRAC_PI_2
}

impl DriveSection {
    pub fn pump_ratio(&self) -> Result<f64, CliError> {
        match (self.pump_ratio, self.pump_power_dbm, self.threshold_power_dbm) {
            (Some(r), None, None) => Ok(r),
            (None, Some(p), Some(th)) => {
                let conv = |l| calib::dbm_to_watts(l).map_err(|e| CliError::Config(e.to_string()));
                calib::pump_ratio_from_powers(conv(p)?, conv(th)?).map_err(|e| CliError::Config(e.to_string()))
            }
            _ => Err(CliError::Config(
                "drive_base needs pump_ratio or both pump_power_dbm and threshold_power_dbm".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_s: Option<f64>,
    /// Diffusion constant `D` in `q^2 / s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_intensity: Option<f64>,
    /// `D` as a fraction of the no-locking barrier height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_over_barrier: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start")]
    pub initial_point: InitialPoint,
}

fn default_start() -> InitialPoint {
    InitialPoint::Well1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub phase_reference: PhaseReference,
    pub rotation_mode: RotationMode,
    /// Lorentzian fit band; `None` means `(0, fs/20)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_band_hz: Option<(f64, f64)>,
    pub notches_hz: Vec<(f64, f64)>,
    /// Band over which the low-frequency level of `S_aa` is averaged.
    pub plateau_band_hz: (f64, f64),
    pub histogram_bins: usize,
    /// Schmitt thresholds at `+-label_fraction * q*`.
    pub label_fraction: f64,
    pub confidence: f64,
    pub min_contrast: f64,
    pub rate_tolerance: f64,
    /// Reference density for the optional dB column of the spectra CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub db_reference: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            phase_reference: PhaseReference::PrincipalAxis,
            rotation_mode: RotationMode::PerBin,
            fit_band_hz: None,
            notches_hz: Vec::new(),
            plateau_band_hz: (0.0, 200.0),
            histogram_bins: 64,
            label_fraction: 0.5,
            confidence: 0.95,
            min_contrast: 2.0,
            rate_tolerance: 0.2,
            db_reference: None,
        }
    }
}

impl AnalysisSection {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(format!("analysis: {m}")));
        if self.histogram_bins < 2 {
            return bad(format!("histogram_bins must be >= 2, got {}", self.histogram_bins));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction < 1.0) {
            return bad(format!("label_fraction must be in (0, 1), got {}", self.label_fraction));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must be in (0, 1), got {}", self.confidence));
        }
        if !(self.plateau_band_hz.0 < self.plateau_band_hz.1) {
            return bad("plateau_band_hz must be increasing".into());
        }
        if let Some((lo, hi)) = self.fit_band_hz {
            if !(lo < hi) {
                return bad("fit_band_hz must be increasing".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    /// Target intracavity photon number; converted to `|E_s|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photon_number: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ils_amplitude: Option<f64>,
    /// Overrides `drive_base.ils_phase_rad`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ils_phase_rad: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub resonator: ResonatorSection,
    pub drive_base: DriveSection,
    pub sim: SimSection,
    #[serde(default)]
    pub welch: WelchConfig,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub sweep: Vec<SweepEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

pub fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

/// Photon numbers of the built-in locking sweep.
pub const TEMPLATE_PHOTON_NUMBERS: [f64; 5] = [0.0, 0.005, 0.02, 0.045, 2.3];

impl ExperimentConfig {
    /// Five members at `theta_s = -pi/2` from no locking to full pinning, one
    /// second (10^6 samples) each.
    pub fn template() -> Self {
        Self {
            resonator: ResonatorSection::Scaled {
                kappa_per_s: 1.86e6,
                gamma_per_s: None,
                well_radius: Some(10.8f64.sqrt()),
            },
            drive_base: DriveSection {
                pump_ratio: Some(1.0),
                pump_power_dbm: None,
                threshold_power_dbm: None,
                ils_amplitude: 0.0,
                ils_phase_rad: default_phase(),
            },
            sim: SimSection {
                duration_s: 1.0,
                sample_rate_hz: 1e6,
                dt_s: None,
                noise_intensity: None,
                noise_over_barrier: Some(0.2),
                seed: 1,
                initial_point: InitialPoint::Well1,
            },
            welch: WelchConfig::default(),
            analysis: AnalysisSection::default(),
            sweep: TEMPLATE_PHOTON_NUMBERS
                .iter()
                .map(|&n| SweepEntry {
                    photon_number: Some(n),
                    ils_amplitude: None,
                    ils_phase_rad: None,
                })
                .collect(),
            output_dir: None,
            formats: all_formats(),
            workers: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        // a run manifest carries the config it was produced from
        let value = match value.get("config") {
            Some(inner) if value.get("files").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        if self.sweep.is_empty() {
            return Err(CliError::Config("sweep must have at least one member".into()));
        }
        self.welch
            .validate()
            .map_err(|e| CliError::Config(format!("welch: {e}")))?;
        self.analysis.validate()?;
        let params = self.resonator.resolve()?;
        let pump_ratio = self.drive_base.pump_ratio()?;
        let base = DriveConfig::new(pump_ratio, self.drive_base.ils_amplitude, self.drive_base.ils_phase_rad)
            .map_err(|e| CliError::Config(format!("drive_base: {e}")))?;
        if pump_ratio < 1.0 {
            return Err(CliError::Config(format!(
                "pump ratio {pump_ratio} is below threshold; the bistable model needs P_p/P_th >= 1"
            )));
        }
        let unlocked = EffectivePotential::new(&params, &DriveConfig::unlocked(pump_ratio))
            .map_err(|e| CliError::Config(e.to_string()))?;
        let noise = match (self.sim.noise_intensity, self.sim.noise_over_barrier) {
            (Some(d), None) => d,
            (None, Some(f)) => f * unlocked.unlocked_barrier(),
            _ => {
                return Err(CliError::Config(
                    "sim needs exactly one of noise_intensity or noise_over_barrier".into(),
                ))
            }
        };
        let labels = LabelConfig::symmetric(unlocked.well_radius(), self.analysis.label_fraction);
        let mut members = Vec::with_capacity(self.sweep.len());
        for (index, entry) in self.sweep.iter().enumerate() {
            let ctx = |e: String| CliError::Config(format!("sweep[{index}]: {e}"));
            let (amplitude, photon_number) = match (entry.photon_number, entry.ils_amplitude) {
                (Some(n), None) => (
                    calib::ils_amplitude_for_photon_number(n, &params).map_err(|e| ctx(e.to_string()))?,
                    n,
                ),
                (None, Some(a)) => (
                    a,
                    calib::photon_number_for_ils_amplitude(a, &params).map_err(|e| ctx(e.to_string()))?,
                ),
                _ => return Err(ctx("give exactly one of photon_number or ils_amplitude".into())),
            };
            let drive = DriveConfig::new(
                pump_ratio,
                amplitude,
                entry.ils_phase_rad.unwrap_or(base.ils_phase),
            )
            .map_err(|e| ctx(e.to_string()))?;
            let sim = SimulationConfig {
                dt: self.sim.dt_s,
                duration: self.sim.duration_s,
                sample_rate: self.sim.sample_rate_hz,
                noise_intensity: noise,
                seed: self.sim.seed,
                stream: index as u64,
                initial_point: self.sim.initial_point,
            };
            sim.validate().map_err(|e| ctx(e.to_string()))?;
            sim.sample_count().map_err(|e| ctx(e.to_string()))?;
            members.push(ResolvedMember {
                index,
                drive,
                photon_number,
                sim,
            });
        }
        Ok(Resolved {
            params,
            members,
            labels,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedMember {
    pub index: usize,
    pub drive: DriveConfig,
    pub photon_number: f64,
    pub sim: SimulationConfig,
}

impl ResolvedMember {
    pub fn dir_name(&self) -> String {
        format!("member_{:02}", self.index)
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: ResonatorParams,
    pub members: Vec<ResolvedMember>,
    pub labels: LabelConfig,
}
