//! Welch spectral estimation and the IQ noise covariance matrix.
//!
//! For demeaned channels `dI`, `dQ` the per-bin covariance is
//!
//! ```text
//! S(nu) = [[S_II, S_IQ], [S_IQ*, S_QQ]]
//! ```
//!
//! and the phase/amplitude densities are the eigenvalues of `Re S(nu)` after an
//! orthogonal rotation `O(nu)^T Re S(nu) O(nu) = diag(S_aa, S_bb)`. `Im S_IQ` is
//! kept in the output but does not enter the rotation.
//!
//! Densities are one-sided with window-power normalisation: white noise of
//! variance `s2` sampled at `fs` has level `2 s2 / fs`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadratureTrace;
use crate::error::{invalid, JpoError, Result};
use crate::sym2::{axis_distance, eig_sym2, wrap_axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
    Blackman,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let tau = std::f64::consts::TAU;
        (0..n)
            .map(|k| {
                let x = tau * k as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Rectangular => 1.0,
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    Mean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sideness {
    #[default]
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
    pub detrend: Detrend,
    #[serde(default)]
    pub sideness: Sideness,
}

impl Default for WelchConfig {
    /// Hann, 50 % overlap, 2^16-sample segments.
    fn default() -> Self {
        Self {
            segment_length: 1 << 16,
            overlap_fraction: 0.5,
            window: Window::Hann,
            detrend: Detrend::Mean,
            sideness: Sideness::OneSided,
        }
    }
}

impl WelchConfig {
    /// 2^20-sample segments for sub-Hz structure at 1 MSa/s.
    pub fn low_frequency() -> Self {
        Self {
            segment_length: 1 << 20,
            ..Self::default()
        }
    }

    pub fn with_segment_length(self, segment_length: usize) -> Self {
        Self {
            segment_length,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 8 || !self.segment_length.is_power_of_two() {
            return Err(invalid(format!(
                "segment_length must be a power of two >= 8, got {}",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(invalid(format!(
                "overlap_fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        let overlap = (self.segment_length as f64 * self.overlap_fraction).round() as usize;
        (self.segment_length - overlap).max(1)
    }

    pub fn segment_count(&self, len: usize) -> usize {
        if len < self.segment_length {
            0
        } else {
            (len - self.segment_length) / self.step() + 1
        }
    }
}

/// One-sided frequency grid `k fs / N`, `k = 0..=N/2`.
pub fn frequency_grid(fs: f64, segment_length: usize) -> Vec<f64> {
    (0..=segment_length / 2)
        .map(|k| k as f64 * fs / segment_length as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub n_segments: usize,
    /// Set when fewer than two segments were averaged.
    pub high_variance: bool,
}

struct WelchPlan {
    cfg: WelchConfig,
    fs: f64,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl WelchPlan {
    fn new(fs: f64, len: usize, cfg: &WelchConfig) -> Result<Self> {
        cfg.validate()?;
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(invalid(format!("sample rate must be > 0, got {fs}")));
        }
        if cfg.segment_length > len {
            return Err(invalid(format!(
                "segment_length {} exceeds series length {len}",
                cfg.segment_length
            )));
        }
        let window = cfg.window.coefficients(cfg.segment_length);
        let power: f64 = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(cfg.segment_length);
        Ok(Self {
            cfg: *cfg,
            fs,
            window,
            fft,
            scale: 1.0 / (fs * power),
        })
    }

    fn segment_spectrum(&self, data: &[f64], scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        let mean = match self.cfg.detrend {
            Detrend::Mean => data.iter().sum::<f64>() / data.len() as f64,
            Detrend::None => 0.0,
        };
        let mut buf: Vec<Complex64> = data
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
            .collect();
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex64::default());
        self.fft.process_with_scratch(&mut buf, scratch);
        buf.truncate(self.cfg.segment_length / 2 + 1);
        buf
    }

    /// Averaged `conj(X) X`, `conj(Y) Y` and `conj(X) Y` over all segments.
    /// Segments are summed in fixed-size blocks whose partial sums are then
    /// added in block order, so the result does not depend on thread count.
    fn accumulate(&self, x: &[f64], y: Option<&[f64]>) -> (Vec<f64>, Vec<f64>, Vec<Complex64>, usize) {
        const BLOCK: usize = 8;
        let n = self.cfg.segment_length;
        let bins = n / 2 + 1;
        let step = self.cfg.step();
        let n_seg = self.cfg.segment_count(x.len());
        let blocks: Vec<(usize, usize)> = (0..n_seg)
            .step_by(BLOCK)
            .map(|s| (s, (s + BLOCK).min(n_seg)))
            .collect();
        let partials: Vec<(Vec<f64>, Vec<f64>, Vec<Complex64>)> = blocks
            .par_iter()
            .map(|&(first, last)| {
                let mut sxx = vec![0.0; bins];
                let mut syy = vec![0.0; bins];
                let mut sxy = vec![Complex64::default(); bins];
                let mut scratch = Vec::new();
                for seg in first..last {
                    let start = seg * step;
                    let fx = self.segment_spectrum(&x[start..start + n], &mut scratch);
                    match y {
                        Some(y) => {
                            let fy = self.segment_spectrum(&y[start..start + n], &mut scratch);
                            for k in 0..bins {
                                sxx[k] += fx[k].norm_sqr();
                                syy[k] += fy[k].norm_sqr();
                                sxy[k] += fx[k].conj() * fy[k];
                            }
                        }
                        None => {
                            for k in 0..bins {
                                sxx[k] += fx[k].norm_sqr();
                            }
                        }
                    }
                }
                (sxx, syy, sxy)
            })
            .collect();
        let mut sxx = vec![0.0; bins];
        let mut syy = vec![0.0; bins];
        let mut sxy = vec![Complex64::default(); bins];
        for (px, py, pxy) in partials {
            for k in 0..bins {
                sxx[k] += px[k];
                syy[k] += py[k];
                sxy[k] += pxy[k];
            }
        }
        for k in 0..bins {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            let f = one_sided * self.scale / n_seg as f64;
            sxx[k] *= f;
            syy[k] *= f;
            sxy[k] *= f;
        }
        (sxx, syy, sxy, n_seg)
    }
}

/// Welch cross-spectral density `<conj(X) Y>` of two equal-length series.
pub fn welch_csd(x: &[f64], y: &[f64], fs: f64, cfg: &WelchConfig) -> Result<CrossSpectrum> {
    if x.len() != y.len() {
        return Err(invalid(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let plan = WelchPlan::new(fs, x.len(), cfg)?;
    let (_, _, sxy, n_seg) = plan.accumulate(x, Some(y));
    Ok(CrossSpectrum {
        freqs: frequency_grid(plan.fs, cfg.segment_length),
        values: sxy,
        n_segments: n_seg,
        high_variance: n_seg < 2,
    })
}

/// Welch power spectral density of one series.
pub fn welch_psd(x: &[f64], fs: f64, cfg: &WelchConfig) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let plan = WelchPlan::new(fs, x.len(), cfg)?;
    let (sxx, _, _, n_seg) = plan.accumulate(x, None);
    Ok((frequency_grid(fs, cfg.segment_length), sxx, n_seg))
}

/// Per-channel fluctuations about the record mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Fluctuations {
    pub delta_i: Vec<f64>,
    pub delta_q: Vec<f64>,
    /// `(mean I, mean Q)`.
    pub mean_field: [f64; 2],
}

pub fn fluctuations(trace: &QuadratureTrace) -> Result<Fluctuations> {
    trace.validate()?;
    let n = trace.len() as f64;
    let mi = trace.i_samples.iter().sum::<f64>() / n;
    let mq = trace.q_samples.iter().sum::<f64>() / n;
    Ok(Fluctuations {
        delta_i: trace.i_samples.iter().map(|v| v - mi).collect(),
        delta_q: trace.q_samples.iter().map(|v| v - mq).collect(),
        mean_field: [mi, mq],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectra {
    pub sample_rate: f64,
    pub freqs: Vec<f64>,
    pub s_ii: Vec<f64>,
    pub s_qq: Vec<f64>,
    pub s_iq: Vec<Complex64>,
    pub mean_field: [f64; 2],
    pub n_segments: usize,
    pub high_variance: bool,
    /// Phase-quadrature density, filled by [`diagonalize`].
    pub s_aa: Option<Vec<f64>>,
    /// Amplitude-quadrature density, filled by [`diagonalize`].
    pub s_bb: Option<Vec<f64>>,
    /// Direction of the phase eigenvector per bin, in (-pi/2, pi/2].
    pub rotation_angle: Option<Vec<f64>>,
}

impl NoiseSpectra {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Bin indices excluding DC and Nyquist.
    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.freqs.len().saturating_sub(1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, db_reference: Option<f64>) -> std::io::Result<()> {
        write!(out, "freq_hz,s_ii,s_qq,re_s_iq,im_s_iq,s_aa,s_bb,rotation_rad")?;
        if db_reference.is_some() {
            write!(out, ",s_aa_db")?;
        }
        writeln!(out)?;
        let nan = f64::NAN;
        for k in 0..self.len() {
            let aa = self.s_aa.as_ref().map_or(nan, |v| v[k]);
            let bb = self.s_bb.as_ref().map_or(nan, |v| v[k]);
            let rot = self.rotation_angle.as_ref().map_or(nan, |v| v[k]);
            write!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.freqs[k], self.s_ii[k], self.s_qq[k], self.s_iq[k].re, self.s_iq[k].im, aa, bb, rot
            )?;
            if let Some(r) = db_reference {
                write!(out, ",{:e}", 10.0 * (aa / r).log10())?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`NoiseSpectra::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| JpoError::Format {
                offset: 0,
                message: "empty spectra file".into(),
            })??;
        if !header.starts_with("freq_hz,s_ii,s_qq,re_s_iq,im_s_iq,s_aa,s_bb,rotation_rad") {
            return Err(JpoError::Format {
                offset: 0,
                message: format!("unexpected spectra header '{header}'"),
            });
        }
        let mut cols: [Vec<f64>; 8] = Default::default();
        let mut offset = header.len() as u64 + 1;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 8 {
                return Err(JpoError::Format {
                    offset,
                    message: "spectra row has fewer than 8 fields".into(),
                });
            }
            for (c, f) in cols.iter_mut().zip(&fields) {
                c.push(f.trim().parse::<f64>().map_err(|e| JpoError::Format {
                    offset,
                    message: e.to_string(),
                })?);
            }
            offset += line.len() as u64 + 1;
        }
        let [freqs, s_ii, s_qq, re, im, aa, bb, rot] = cols;
        if freqs.len() < 2 {
            return Err(JpoError::Format {
                offset,
                message: "spectra file holds fewer than two bins".into(),
            });
        }
        let filled = |v: Vec<f64>| if v.iter().all(|x| x.is_nan()) { None } else { Some(v) };
        let df = freqs[1] - freqs[0];
        Ok(Self {
            sample_rate: 2.0 * (freqs.len() - 1) as f64 * df,
            s_iq: re.iter().zip(&im).map(|(r, i)| Complex64::new(*r, *i)).collect(),
            freqs,
            s_ii,
            s_qq,
            mean_field: [f64::NAN, f64::NAN],
            n_segments: 0,
            high_variance: false,
            s_aa: filled(aa),
            s_bb: filled(bb),
            rotation_angle: filled(rot),
        })
    }
}

/// Builds the spectral noise covariance matrix of a trace (phase/amplitude
/// entries left unset).
pub fn noise_covariance(trace: &QuadratureTrace, cfg: &WelchConfig) -> Result<NoiseSpectra> {
    let fl = fluctuations(trace)?;
    let plan = WelchPlan::new(trace.sample_rate, trace.len(), cfg)?;
    let (s_ii, s_qq, s_iq, n_seg) = plan.accumulate(&fl.delta_i, Some(&fl.delta_q));
    Ok(NoiseSpectra {
        sample_rate: trace.sample_rate,
        freqs: frequency_grid(trace.sample_rate, cfg.segment_length),
        s_ii,
        s_qq,
        s_iq,
        mean_field: fl.mean_field,
        n_segments: n_seg,
        high_variance: n_seg < 2,
        s_aa: None,
        s_bb: None,
        rotation_angle: None,
    })
}

/// How the phase quadrature is told apart from the amplitude quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "angle_rad")]
pub enum PhaseReference {
    /// Phase is the axis along which the record fluctuates most (the major
    /// axis of the total fluctuation covariance). For a bistable oscillator
    /// this is the axis joining the two states, so telegraph switching lands
    /// in the phase density.
    PrincipalAxis,
    /// Phase is perpendicular to the mean field `(mean I, mean Q)`.
    MeanField,
    /// Phase is perpendicular to a carrier at the given angle.
    Carrier(f64),
}

impl Default for PhaseReference {
    fn default() -> Self {
        PhaseReference::PrincipalAxis
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// One rotation per frequency bin.
    #[default]
    PerBin,
    /// A single rotation taken from the band-averaged `Re S`.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagonalizeOptions {
    #[serde(default)]
    pub reference: PhaseReference,
    #[serde(default)]
    pub mode: RotationMode,
}

fn band_covariance(spectra: &NoiseSpectra) -> (f64, f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for k in spectra.interior() {
        a += spectra.s_ii[k];
        b += spectra.s_iq[k].re;
        c += spectra.s_qq[k];
    }
    (a, b, c)
}

/// Direction of the phase axis in the IQ plane.
pub fn phase_axis(spectra: &NoiseSpectra, reference: PhaseReference) -> Result<f64> {
    match reference {
        PhaseReference::PrincipalAxis => {
            let (a, b, c) = band_covariance(spectra);
            Ok(eig_sym2(a, b, c).major_angle)
        }
        PhaseReference::MeanField => {
            let [mi, mq] = spectra.mean_field;
            if !(mi.is_finite() && mq.is_finite()) || (mi == 0.0 && mq == 0.0) {
                return Err(JpoError::AmbiguousPhaseReference(
                    "mean field is zero; supply an explicit carrier angle".into(),
                ));
            }
            Ok(wrap_axis(mq.atan2(mi) + FRAC_PI_2))
        }
        PhaseReference::Carrier(angle) => {
            if !angle.is_finite() {
                return Err(invalid("carrier angle must be finite"));
            }
            Ok(wrap_axis(angle + FRAC_PI_2))
        }
    }
}

/// Rotates `Re S(nu)` into its eigenbasis and assigns the eigenvector closer
/// to the phase axis to `S_aa`.
pub fn diagonalize(spectra: &NoiseSpectra, opts: &DiagonalizeOptions) -> Result<NoiseSpectra> {
    let psi = phase_axis(spectra, opts.reference)?;
    let n = spectra.len();
    let mut s_aa = Vec::with_capacity(n);
    let mut s_bb = Vec::with_capacity(n);
    let mut rotation = Vec::with_capacity(n);
    match opts.mode {
        RotationMode::PerBin => {
            for k in 0..n {
                let e = eig_sym2(spectra.s_ii[k], spectra.s_iq[k].re, spectra.s_qq[k]);
                if axis_distance(e.major_angle, psi) <= FRAC_PI_4 {
                    s_aa.push(e.major);
                    s_bb.push(e.minor);
                    rotation.push(e.major_angle);
                } else {
                    s_aa.push(e.minor);
                    s_bb.push(e.major);
                    rotation.push(wrap_axis(e.major_angle + FRAC_PI_2));
                }
            }
        }
        RotationMode::Global => {
            let (a, b, c) = band_covariance(spectra);
            let e = eig_sym2(a, b, c);
            let alpha = if axis_distance(e.major_angle, psi) <= FRAC_PI_4 {
                e.major_angle
            } else {
                wrap_axis(e.major_angle + FRAC_PI_2)
            };
            let (s, co) = alpha.sin_cos();
            for k in 0..n {
                let (a, b, c) = (spectra.s_ii[k], spectra.s_iq[k].re, spectra.s_qq[k]);
                s_aa.push(co * co * a + 2.0 * s * co * b + s * s * c);
                s_bb.push(s * s * a - 2.0 * s * co * b + co * co * c);
                rotation.push(alpha);
            }
        }
    }
    Ok(NoiseSpectra {
        s_aa: Some(s_aa),
        s_bb: Some(s_bb),
        rotation_angle: Some(rotation),
        ..spectra.clone()
    })
}

/// Phase-quadrature density of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoise {
    pub freqs: Vec<f64>,
    pub s_aa: Vec<f64>,
}

impl PhaseNoise {
    /// `10 log10(S_aa / reference)`.
    pub fn decibels(&self, reference: f64) -> Vec<f64> {
        to_db(&self.s_aa, reference)
    }
}

pub fn to_db(values: &[f64], reference: f64) -> Vec<f64> {
    values.iter().map(|v| 10.0 * (v / reference).log10()).collect()
}

/// Fluctuations, covariance matrix and rotation in one call.
pub fn analyze_trace(trace: &QuadratureTrace, cfg: &WelchConfig, opts: &DiagonalizeOptions) -> Result<NoiseSpectra> {
    diagonalize(&noise_covariance(trace, cfg)?, opts)
}

pub fn phase_noise_psd(trace: &QuadratureTrace, cfg: &WelchConfig, opts: &DiagonalizeOptions) -> Result<PhaseNoise> {
    let sp = analyze_trace(trace, cfg, opts)?;
    Ok(PhaseNoise {
        freqs: sp.freqs,
        s_aa: sp.s_aa.unwrap_or_default(),
    })
}

/// Mean of `values` over bins with `lo <= f <= hi`, DC and Nyquist excluded.
pub fn band_average(freqs: &[f64], values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let last = freqs.len().saturating_sub(1);
    let (sum, n) = freqs
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(k, (f, _))| *k != 0 && *k != last && **f >= lo && **f <= hi)
        .fold((0.0, 0usize), |(s, n), (_, (_, v))| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
