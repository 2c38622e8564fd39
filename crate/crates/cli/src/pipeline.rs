//! `potential`, `run` and `analyze`: per-member artifacts and the run
//! manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use jpo_core::dynamics::{self, HistogramAxis, LabelConfig, QuadratureTrace, SwitchingStats};
use jpo_core::fitting::{self, FitMask, LorentzianConfig, LorentzianFit};
use jpo_core::potential::{self, StationaryKind};
use jpo_core::spectra::{self, DiagonalizeOptions, WelchConfig};
use jpo_core::trace_io;
use jpo_core::JpoError;

use crate::config::{AnalysisSection, ExperimentConfig, Format, Resolved};
use crate::{svg, CliError};

pub const MANIFEST: &str = "manifest.json";
pub const TRACE_FILE: &str = "trace.jpt";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const STATS_FILE: &str = "stats.json";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const FIT_FILE: &str = "fit.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Everything the analysis stage needs besides the trace.
#[derive(Debug, Clone)]
pub struct AnalysisSettings {
    pub welch: WelchConfig,
    pub analysis: AnalysisSection,
    /// Schmitt thresholds on I; derived from the data when absent.
    pub labels: Option<LabelConfig>,
    pub formats: Vec<Format>,
}

impl AnalysisSettings {
    pub fn from_config(cfg: &ExperimentConfig, resolved: Option<&Resolved>) -> Self {
        Self {
            welch: cfg.welch,
            analysis: cfg.analysis.clone(),
            labels: resolved.map(|r| r.labels),
            formats: cfg.formats.clone(),
        }
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Headline numbers of one analysed trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub switch_count: usize,
    pub switching_rate_per_s: f64,
    /// Fractions of time in `[0pi (I > 0), 1pi (I < 0)]`.
    pub occupation: [f64; 2],
    pub mean_field: [f64; 2],
    pub histogram_bin_width: f64,
    pub histogram_modes: usize,
    /// Histogram peaks on the `I > 0` and `I < 0` sides.
    pub histogram_peaks: [Option<f64>; 2],
    /// Mean of `S_aa` over the plateau band.
    pub low_frequency_level: Option<f64>,
    pub lorentzian_accepted: bool,
    pub plateau: Option<f64>,
    pub corner_hz: Option<f64>,
    pub white_floor: Option<f64>,
    pub rolloff_exponent: Option<f64>,
    pub rate_consistent: Option<bool>,
}

/// Thresholds at a quarter of the 5-95 % spread around its midpoint. The
/// returned offset is subtracted from I before labelling.
fn data_labels(trace: &QuadratureTrace) -> (f64, LabelConfig) {
    let mut v = trace.i_samples.clone();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.05), q(0.95));
    let half = ((hi - lo) / 4.0).max(f64::MIN_POSITIVE);
    (0.5 * (lo + hi), LabelConfig { lower: -half, upper: half })
}

fn error_json(e: &JpoError) -> serde_json::Value {
    json!({ "error": e.to_string() })
}

/// Runs statistics, histogram, spectra and fits on one trace and writes the
/// requested artifacts into `dir`.
pub fn analyze_into(trace: &QuadratureTrace, settings: &AnalysisSettings, dir: &Path) -> Result<MemberSummary, CliError> {
    fs::create_dir_all(dir)?;
    let a = &settings.analysis;
    let (offset, labels) = match settings.labels {
        Some(l) => (0.0, l),
        None => data_labels(trace),
    };
    let stats: SwitchingStats = if offset == 0.0 {
        dynamics::label_states(trace, &labels)?
    } else {
        dynamics::label_states(&trace.affine(1.0, -offset, 0.0), &labels)?
    };
    let hist = dynamics::histogram(trace, HistogramAxis::I, a.histogram_bins)?;
    let mid = offset + 0.5 * (labels.lower + labels.upper);
    let peaks = [
        hist.peak_between(mid, f64::INFINITY),
        hist.peak_between(f64::NEG_INFINITY, mid),
    ];

    let opts = DiagonalizeOptions {
        reference: a.phase_reference,
        mode: a.rotation_mode,
    };
    let sp = spectra::analyze_trace(trace, &settings.welch, &opts)?;
    let s_aa = sp.s_aa.clone().unwrap_or_default();
    let band = a.fit_band_hz.unwrap_or((0.0, trace.sample_rate / 20.0));
    let mut mask = FitMask::band(band.0, band.1);
    mask.notches = a.notches_hz.clone();
    let lcfg = LorentzianConfig {
        mask,
        confidence: a.confidence,
        min_contrast: a.min_contrast,
        ..LorentzianConfig::default()
    };
    let fit: Result<LorentzianFit, JpoError> = fitting::fit_lorentzian(&sp.freqs, &s_aa, &lcfg);
    let accepted = fit.as_ref().ok().filter(|f| f.accepted);
    let rolloff = accepted.map(|f| fitting::fit_powerlaw(&sp.freqs, &s_aa, (2.0 * f.corner_hz, 20.0 * f.corner_hz)));
    let rate = fit
        .as_ref()
        .map_err(|e| JpoError::Precondition(format!("no Lorentzian fit: {e}")))
        .and_then(|f| fitting::rate_consistency(&stats, f, a.rate_tolerance));
    let level = spectra::band_average(&sp.freqs, &s_aa, a.plateau_band_hz.0, a.plateau_band_hz.1);

    if settings.wants(Format::Csv) {
        hist.write_csv(create_file(&dir.join(HISTOGRAM_FILE))?)?;
        sp.write_csv(create_file(&dir.join(SPECTRA_FILE))?, a.db_reference)?;
    }
    if settings.wants(Format::Json) {
        write_json(
            &dir.join(STATS_FILE),
            &json!({
                "thresholds": { "lower": labels.lower + offset, "upper": labels.upper + offset },
                "stats": stats,
                "mean_dwell_s": stats.mean_dwell(),
            }),
        )?;
        write_json(
            &dir.join(FIT_FILE),
            &json!({
                "lorentzian": fit.as_ref().map_or_else(error_json, |f| json!(f)),
                "rolloff": match &rolloff {
                    None => serde_json::Value::Null,
                    Some(Ok(p)) => json!(p),
                    Some(Err(e)) => error_json(e),
                },
                "low_frequency_level": level,
                "plateau_band_hz": a.plateau_band_hz,
                "rate_consistency": rate.as_ref().map_or_else(error_json, |r| json!(r)),
                "welch": settings.welch,
                "n_segments": sp.n_segments,
                "high_variance": sp.high_variance,
                "diagonalize": opts,
            }),
        )?;
    }
    Ok(MemberSummary {
        switch_count: stats.switch_count,
        switching_rate_per_s: stats.switching_rate,
        occupation: stats.occupation,
        mean_field: sp.mean_field,
        histogram_bin_width: hist.bin_width(),
        histogram_modes: hist.mode_count(0.05),
        histogram_peaks: peaks,
        low_frequency_level: level,
        lorentzian_accepted: accepted.is_some(),
        plateau: fit.as_ref().ok().map(|f| f.plateau),
        corner_hz: fit.as_ref().ok().map(|f| f.corner_hz),
        white_floor: fit.as_ref().ok().map(|f| f.white_floor),
        rolloff_exponent: rolloff.and_then(|r| r.ok()).map(|p| p.exponent),
        rate_consistent: rate.ok().map(|r| r.pass),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub index: usize,
    pub dir: String,
    pub photon_number: f64,
    pub ils_amplitude: f64,
    pub ils_phase_rad: f64,
    pub seed: u64,
    pub stream: u64,
    pub noise_intensity: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<MemberSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
    pub members: Vec<MemberRecord>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self, CliError> {
        let path = run_dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path != root.join(MANIFEST) {
            out.push(path);
        }
    }
    Ok(())
}

/// Every file under `root` except the manifest, sorted, with checksums.
pub fn checksum_tree(root: &Path) -> Result<Vec<FileEntry>, CliError> {
    let mut paths = Vec::new();
    collect_files(root, root, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            Ok(FileEntry {
                path: p
                    .strip_prefix(root)
                    .unwrap_or(p)
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/"),
                bytes: fs::metadata(p)?.len(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn prepare_empty_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        if entries.next().is_some() {
            return Err(CliError::Io(format!("output directory {} is not empty", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start workers: {e}")))
}

pub struct RunOutcome {
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn failed(&self) -> usize {
        self.manifest.members.iter().filter(|m| !m.ok).count()
    }
}

/// Simulates and analyses every sweep member into `out`, then writes the
/// manifest. Member failures are recorded, not fatal.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, workers: Option<usize>) -> Result<RunOutcome, CliError> {
    let resolved = cfg.resolve()?;
    prepare_empty_dir(out)?;
    let settings = AnalysisSettings::from_config(cfg, Some(&resolved));
    let started = Instant::now();
    let pool = thread_pool(workers.or(cfg.workers))?;
    let members: Vec<MemberRecord> = pool.install(|| {
        resolved
            .members
            .par_iter()
            .map(|m| {
                let dir_name = m.dir_name();
                let result = (|| -> Result<MemberSummary, CliError> {
                    let trace = dynamics::simulate_trace(&resolved.params, &m.drive, &m.sim)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    let dir = out.join(&dir_name);
                    fs::create_dir_all(&dir)?;
                    trace_io::save_binary(&dir.join(TRACE_FILE), &trace)?;
                    analyze_into(&trace, &settings, &dir)
                })();
                MemberRecord {
                    index: m.index,
                    dir: dir_name,
                    photon_number: m.photon_number,
                    ils_amplitude: m.drive.ils_amplitude,
                    ils_phase_rad: m.drive.ils_phase,
                    seed: m.sim.seed,
                    stream: m.sim.stream,
                    noise_intensity: m.sim.noise_intensity,
                    ok: result.is_ok(),
                    error: result.as_ref().err().map(|e| match e {
                        CliError::Config(s) | CliError::Io(s) => s.clone(),
                        other => other.to_string(),
                    }),
                    summary: result.ok(),
                }
            })
            .collect()
    });
    let manifest = Manifest {
        tool: "jpo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
        members,
        files: checksum_tree(out)?,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(RunOutcome { manifest })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzedInput {
    pub input: String,
    pub output: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<MemberSummary>,
}

/// Expands run directories into their member traces.
fn expand_inputs(inputs: &[PathBuf]) -> Result<(Vec<(String, PathBuf)>, Option<ExperimentConfig>), CliError> {
    let mut traces = Vec::new();
    let mut manifest_config = None;
    for input in inputs {
        if input.is_dir() {
            if input.join(MANIFEST).is_file() && manifest_config.is_none() {
                manifest_config = Some(Manifest::load(input)?.config);
            }
            let mut found: Vec<PathBuf> = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(TRACE_FILE).is_file())
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(CliError::Io(format!("{} holds no member traces", input.display())));
            }
            for dir in found {
                let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
                traces.push((name, dir.join(TRACE_FILE)));
            }
        } else {
            let name = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            traces.push((name, input.clone()));
        }
    }
    Ok((traces, manifest_config))
}

/// Runs the analysis stage on existing trace files or run directories.
pub fn cmd_analyze(
    inputs: &[PathBuf],
    cfg: Option<&ExperimentConfig>,
    out: &Path,
    formats: Option<&[Format]>,
    workers: Option<usize>,
) -> Result<Vec<AnalyzedInput>, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Config("no input traces given".into()));
    }
    let (traces, manifest_config) = expand_inputs(inputs)?;
    let cfg = cfg.cloned().or(manifest_config);
    let mut settings = match &cfg {
        Some(c) => AnalysisSettings::from_config(c, Some(&c.resolve()?)),
        None => AnalysisSettings {
            welch: WelchConfig::default(),
            analysis: AnalysisSection::default(),
            labels: None,
            formats: crate::config::all_formats(),
        },
    };
    if let Some(f) = formats {
        settings.formats = f.to_vec();
    }
    fs::create_dir_all(out)?;
    let pool = thread_pool(workers)?;
    let results: Vec<(AnalyzedInput, Option<CliError>)> = pool.install(|| {
        traces
            .par_iter()
            .map(|(name, path)| {
                let dir = out.join(name);
                let r = trace_io::load(path)
                    .map_err(CliError::from)
                    .and_then(|t| analyze_into(&t, &settings, &dir));
                let rec = AnalyzedInput {
                    input: path.display().to_string(),
                    output: dir.display().to_string(),
                    ok: r.is_ok(),
                    error: r.as_ref().err().map(|e| e.to_string()),
                    summary: r.as_ref().ok().cloned(),
                };
                (rec, r.err())
            })
            .collect()
    });
    let records: Vec<AnalyzedInput> = results.iter().map(|(r, _)| r.clone()).collect();
    write_json(&out.join("analysis.json"), &records)?;
    let failed = records.iter().filter(|r| !r.ok).count();
    if failed == records.len() {
        if let Some((_, Some(e))) = results.into_iter().next() {
            return Err(e);
        }
    }
    if failed > 0 {
        return Err(CliError::Partial {
            failed,
            total: records.len(),
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEntry {
    pub index: usize,
    pub photon_number: f64,
    pub ils_amplitude: f64,
    pub ils_phase_rad: f64,
    pub stationary_points: Vec<potential::StationaryPoint>,
    pub deeper_well_energy: Option<f64>,
    /// `U(1pi well) - U(0pi well)`; absent for a monostable member.
    pub well_energy_splitting: Option<f64>,
    pub barrier_from_each_well: Option<[f64; 2]>,
    pub monostable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Cross-sections `U(qx, 0)` and stationary points per sweep member.
pub fn cmd_potential(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PotentialEntry>, CliError> {
    let resolved = cfg.resolve()?;
    fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    let mut plot = svg::Plot::new("U(qx, 0)", svg::Axis::linear("qx"), svg::Axis::linear("U"));
    for m in &resolved.members {
        let q_star = potential::EffectivePotential::new(&resolved.params, &m.drive)?.well_radius();
        let grid = potential::linspace(-2.0 * q_star, 2.0 * q_star, 401);
        let curve = potential::cross_section(&resolved.params, &m.drive, &grid)?;
        let points = potential::find_stationary_points(&resolved.params, &m.drive, &Default::default())?;
        let deeper = points
            .iter()
            .filter(|p| p.kind == StationaryKind::Minimum)
            .map(|p| p.energy)
            .reduce(f64::min);
        let barrier = potential::barrier_from_points(&points);
        let entry = PotentialEntry {
            index: m.index,
            photon_number: m.photon_number,
            ils_amplitude: m.drive.ils_amplitude,
            ils_phase_rad: m.drive.ils_phase,
            deeper_well_energy: deeper,
            well_energy_splitting: barrier.as_ref().ok().map(|b| b.well_energy_splitting),
            barrier_from_each_well: barrier.as_ref().ok().map(|b| b.barrier_from_each_well),
            monostable: barrier.is_err(),
            note: barrier.as_ref().err().map(|e| e.to_string()),
            stationary_points: points,
        };
        let stem = m.dir_name();
        if cfg.wants(Format::Csv) {
            potential::write_cross_section_csv(create_file(&out.join(format!("{stem}_cross_section.csv")))?, &curve)?;
        }
        if cfg.wants(Format::Json) {
            write_json(&out.join(format!("{stem}_stationary.json")), &entry)?;
        }
        plot.push(svg::Series::new(
            format!("N_p = {:.3}", m.photon_number),
            svg::color(m.index),
            curve,
        ));
        entries.push(entry);
    }
    if cfg.wants(Format::Json) {
        write_json(&out.join("potential_report.json"), &entries)?;
    }
    if cfg.wants(Format::Svg) {
        fs::write(out.join("potential.svg"), plot.render())?;
    }
    Ok(entries)
}
