//! Overdamped Langevin dynamics in the effective potential.
//!
//! The trajectory obeys `dq = -grad U(q) dt + sqrt(2 D) dW` with independent
//! Wiener increments on both quadratures, integrated by Euler-Maruyama and
//! decimated to the output sample rate. Time is in scaled units; the sample
//! rate only fixes the axis labelling and the spectral frequency scale.
//!
//! Random streams come from ChaCha8 keyed by `seed` with a separate `stream`
//! word, so sweep members drawn from one base seed never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, JpoError, Result};
use crate::potential::{
    find_stationary_points, DriveConfig, EffectivePotential, PhasePoint, ResonatorParams, SearchConfig,
    StationaryKind, StationaryPoint,
};

/// Where a simulation starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialPoint {
    /// Minimum with the larger `qx`.
    Well0,
    /// Minimum with the smaller `qx`.
    Well1,
    Saddle,
    #[serde(untagged)]
    Point(PhasePoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Integration step; `None` selects `min(0.01 / lambda_max, 1 / sample_rate)`
    /// with `lambda_max` the largest Hessian eigenvalue at the wells.
    pub dt: Option<f64>,
    pub duration: f64,
    pub sample_rate: f64,
    /// Diffusion coefficient `D` (potential units squared per time).
    pub noise_intensity: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub initial_point: InitialPoint,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: None,
            duration: 10.0,
            sample_rate: 1e6,
            noise_intensity: 0.0,
            seed: 0,
            stream: 0,
            initial_point: InitialPoint::Well0,
        }
    }
}

impl SimulationConfig {
    /// Number of output samples, `sample_rate * duration`.
    pub fn sample_count(&self) -> Result<usize> {
        let n = self.sample_rate * self.duration;
        let rounded = n.round();
        if !(rounded >= 2.0) || (n - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(invalid(format!(
                "sample_rate * duration must be an integer >= 2, got {n}"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(invalid(format!("sample_rate must be > 0, got {}", self.sample_rate)));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.noise_intensity >= 0.0) || !self.noise_intensity.is_finite() {
            return Err(invalid(format!(
                "noise_intensity must be >= 0, got {}",
                self.noise_intensity
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(invalid(format!("dt must be > 0, got {dt}")));
            }
            if dt > 1.0 / self.sample_rate * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "dt = {dt} exceeds the sample interval {}",
                    1.0 / self.sample_rate
                )));
            }
        }
        self.sample_count()?;
        Ok(())
    }
}

/// Provenance carried alongside a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub source: String,
    pub params: Option<ResonatorParams>,
    pub drive: Option<DriveConfig>,
    pub sim: Option<SimulationConfig>,
    pub seed: u64,
}

/// Uniformly sampled two-channel record. `i_samples` is the `qx` channel and
/// `q_samples` the `qy` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTrace {
    pub sample_rate: f64,
    pub i_samples: Vec<f64>,
    pub q_samples: Vec<f64>,
    pub metadata: Option<TraceMetadata>,
}

impl QuadratureTrace {
    pub fn new(sample_rate: f64, i_samples: Vec<f64>, q_samples: Vec<f64>) -> Result<Self> {
        let t = Self {
            sample_rate,
            i_samples,
            q_samples,
            metadata: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_metadata(mut self, metadata: TraceMetadata) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(invalid(format!("sample_rate must be > 0, got {}", self.sample_rate)));
        }
        if self.i_samples.len() != self.q_samples.len() {
            return Err(invalid(format!(
                "channel lengths differ: {} vs {}",
                self.i_samples.len(),
                self.q_samples.len()
            )));
        }
        if self.i_samples.len() < 2 {
            return Err(invalid("a trace needs at least two samples"));
        }
        if let Some(k) = self
            .i_samples
            .iter()
            .zip(&self.q_samples)
            .position(|(i, q)| !i.is_finite() || !q.is_finite())
        {
            return Err(invalid(format!("sample {k} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.i_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn seed(&self) -> u64 {
        self.metadata.as_ref().map_or(0, |m| m.seed)
    }

    /// Affine display transform `i' = gain * i + i_offset`, `q' = gain * q + q_offset`.
    pub fn affine(&self, gain: f64, i_offset: f64, q_offset: f64) -> Self {
        Self {
            sample_rate: self.sample_rate,
            i_samples: self.i_samples.iter().map(|v| gain * v + i_offset).collect(),
            q_samples: self.q_samples.iter().map(|v| gain * v + q_offset).collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// The first `n` samples (or all of them when shorter).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            sample_rate: self.sample_rate,
            i_samples: self.i_samples[..n].to_vec(),
            q_samples: self.q_samples[..n].to_vec(),
            metadata: self.metadata.clone(),
        }
    }
}

fn minima(points: &[StationaryPoint]) -> impl Iterator<Item = &StationaryPoint> {
    points.iter().filter(|p| p.kind == StationaryKind::Minimum)
}

/// Resolves `well0` / `well1` / `saddle` tokens against the stationary points
/// of the potential.
pub fn resolve_initial_point(
    params: &ResonatorParams,
    drive: &DriveConfig,
    initial: InitialPoint,
) -> Result<PhasePoint> {
    let point = match initial {
        InitialPoint::Point(p) => return PhasePoint::new(p.qx, p.qy),
        other => other,
    };
    let pts = find_stationary_points(params, drive, &SearchConfig::default())?;
    let pick = |target: f64| {
        minima(&pts)
            .min_by(|a, b| {
                let da = (a.location.qx - target).abs();
                let db = (b.location.qx - target).abs();
                da.total_cmp(&db)
            })
            .map(|p| p.location)
    };
    let q_star = EffectivePotential::new(params, drive)?.well_radius();
    let found = match point {
        InitialPoint::Well0 => pick(q_star),
        InitialPoint::Well1 => pick(-q_star),
        InitialPoint::Saddle => pts
            .iter()
            .filter(|p| p.kind == StationaryKind::Saddle)
            .min_by(|a, b| a.energy.total_cmp(&b.energy))
            .map(|p| p.location),
        InitialPoint::Point(_) => unreachable!(),
    };
    found.ok_or_else(|| JpoError::Domain(format!("potential has no {point:?} stationary point")))
}

/// Default integration step `min(0.01 / lambda_max, 1 / sample_rate)`.
pub fn default_time_step(params: &ResonatorParams, drive: &DriveConfig, sample_rate: f64) -> Result<f64> {
    let pts = find_stationary_points(params, drive, &SearchConfig::default())?;
    let lambda_max = minima(&pts)
        .map(|p| p.hessian_eigenvalues[1])
        .fold(0.0, f64::max);
    if !(lambda_max > 0.0) {
        return Err(JpoError::Domain("no minimum to derive a stable time step from".into()));
    }
    Ok((0.01 / lambda_max).min(1.0 / sample_rate))
}

/// Integration step and sub-steps per output sample actually used.
pub fn integration_grid(
    params: &ResonatorParams,
    drive: &DriveConfig,
    sim: &SimulationConfig,
) -> Result<(f64, usize)> {
    let dt_max = match sim.dt {
        Some(dt) => dt,
        None => default_time_step(params, drive, sim.sample_rate)?,
    };
    let interval = 1.0 / sim.sample_rate;
    let substeps = (interval / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((interval / substeps as f64, substeps))
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Euler-Maruyama integration of the overdamped Langevin equation.
///
/// Sample `k` is the state at `t_k = k / sample_rate`; sample 0 is the initial
/// point. Fails with [`JpoError::Instability`] if `|q|` exceeds four times the
/// no-locking well radius.
pub fn simulate_trace(
    params: &ResonatorParams,
    drive: &DriveConfig,
    sim: &SimulationConfig,
) -> Result<QuadratureTrace> {
    sim.validate()?;
    if drive.pump_ratio < 1.0 {
        return Err(JpoError::BelowThreshold(drive.pump_ratio));
    }
    let pot = EffectivePotential::new(params, drive)?;
    let n = sim.sample_count()?;
    let (dt, substeps) = integration_grid(params, drive, sim)?;
    let start = resolve_initial_point(params, drive, sim.initial_point)?;
    let limit = 4.0 * pot.well_radius();
    let limit2 = limit * limit;
    let sigma = (2.0 * sim.noise_intensity * dt).sqrt();

    let mut rng = rng_for(sim.seed, sim.stream);
    let mut i_samples = Vec::with_capacity(n);
    let mut q_samples = Vec::with_capacity(n);
    let mut q = start;
    for k in 0..n {
        i_samples.push(q.qx);
        q_samples.push(q.qy);
        if k + 1 == n {
            break;
        }
        for _ in 0..substeps {
            let g = pot.gradient(q);
            q.qx -= g[0] * dt;
            q.qy -= g[1] * dt;
            if sigma > 0.0 {
                let wx: f64 = StandardNormal.sample(&mut rng);
                let wy: f64 = StandardNormal.sample(&mut rng);
                q.qx += sigma * wx;
                q.qy += sigma * wy;
            }
        }
        let r2 = q.qx * q.qx + q.qy * q.qy;
        if !(r2 <= limit2) {
            return Err(JpoError::Instability {
                time: (k + 1) as f64 / sim.sample_rate,
                radius: r2.sqrt(),
                limit,
            });
        }
    }
    Ok(QuadratureTrace {
        sample_rate: sim.sample_rate,
        i_samples,
        q_samples,
        metadata: Some(TraceMetadata {
            source: "langevin".into(),
            params: Some(*params),
            drive: Some(*drive),
            sim: Some(*sim),
            seed: sim.seed,
        }),
    })
}

/// The two oscillating states, distinguished by the sign of the projection
/// on the inter-well (`qx`) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WellState {
    /// `qx > 0`.
    #[serde(rename = "0pi")]
    ZeroPi,
    /// `qx < 0`.
    #[serde(rename = "1pi")]
    OnePi,
}

impl WellState {
    pub fn index(self) -> usize {
        match self {
            WellState::ZeroPi => 0,
            WellState::OnePi => 1,
        }
    }
}

/// Schmitt-trigger thresholds on the `qx` projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub lower: f64,
    pub upper: f64,
}

impl LabelConfig {
    /// Thresholds at `+-fraction * well_radius`.
    pub fn symmetric(well_radius: f64, fraction: f64) -> Self {
        Self {
            lower: -fraction * well_radius,
            upper: fraction * well_radius,
        }
    }

    pub fn for_potential(params: &ResonatorParams, drive: &DriveConfig) -> Result<Self> {
        Ok(Self::symmetric(EffectivePotential::new(params, drive)?.well_radius(), 0.5))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < 0.0 && self.upper > 0.0) {
            return Err(invalid(format!(
                "label thresholds must straddle zero, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingStats {
    #[serde(skip)]
    pub labels: Vec<WellState>,
    /// Length of each visit, in seconds, in order. The first and last visits
    /// are censored by the record boundaries.
    pub dwell_times: Vec<f64>,
    pub dwell_states: Vec<WellState>,
    /// Fraction of samples in `[0pi, 1pi]`.
    pub occupation: [f64; 2],
    pub switch_count: usize,
    /// `switch_count / duration`.
    pub switching_rate: f64,
    pub duration: f64,
}

impl SwitchingStats {
    /// Mean visit length over visits that are not censored by the record
    /// boundaries; falls back to all visits when there are fewer than three.
    pub fn mean_dwell(&self) -> f64 {
        let inner = if self.dwell_times.len() >= 3 {
            &self.dwell_times[1..self.dwell_times.len() - 1]
        } else {
            &self.dwell_times[..]
        };
        inner.iter().sum::<f64>() / inner.len() as f64
    }
}

/// Labels every sample with a hysteresis (Schmitt-trigger) rule: the state
/// only flips when the projection crosses the far threshold.
pub fn label_states(trace: &QuadratureTrace, rule: &LabelConfig) -> Result<SwitchingStats> {
    trace.validate()?;
    rule.validate()?;
    let projection = &trace.i_samples;
    let mut state = if projection[0] >= 0.0 {
        WellState::ZeroPi
    } else {
        WellState::OnePi
    };
    let dt = 1.0 / trace.sample_rate;
    let mut labels = Vec::with_capacity(projection.len());
    let mut counts = [0usize; 2];
    let mut dwell_times = Vec::new();
    let mut dwell_states = Vec::new();
    let mut run = 0usize;
    for &p in projection {
        let next = match state {
            WellState::ZeroPi if p < rule.lower => WellState::OnePi,
            WellState::OnePi if p > rule.upper => WellState::ZeroPi,
            s => s,
        };
        if next != state {
            dwell_times.push(run as f64 * dt);
            dwell_states.push(state);
            run = 0;
            state = next;
        }
        run += 1;
        counts[state.index()] += 1;
        labels.push(state);
    }
    dwell_times.push(run as f64 * dt);
    dwell_states.push(state);
    let total = labels.len() as f64;
    let switch_count = dwell_times.len() - 1;
    let duration = trace.duration();
    Ok(SwitchingStats {
        labels,
        dwell_times,
        dwell_states,
        occupation: [counts[0] as f64 / total, counts[1] as f64 / total],
        switch_count,
        switching_rate: switch_count as f64 / duration,
        duration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramAxis {
    I,
    Q,
    /// Projection onto the direction at `angle` radians from the I axis.
    Projection(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..self.counts.len()).map(|k| self.lo + (k as f64 + 0.5) * w).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of samples in bins whose centre lies in `(lo, hi)`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let inside: u64 = self
            .centers()
            .iter()
            .zip(&self.counts)
            .filter(|(c, _)| **c > lo && **c < hi)
            .map(|(_, n)| *n)
            .sum();
        inside as f64 / self.total() as f64
    }

    /// Location of the tallest bin with centre in `(lo, hi)`, refined by a
    /// three-point parabola through its neighbours.
    pub fn peak_between(&self, lo: f64, hi: f64) -> Option<f64> {
        let centers = self.centers();
        let k = (0..self.counts.len())
            .filter(|&k| centers[k] > lo && centers[k] < hi)
            .max_by_key(|&k| self.counts[k])?;
        if self.counts[k] == 0 {
            return None;
        }
        let mut x = centers[k];
        if k > 0 && k + 1 < self.counts.len() {
            let (a, b, c) = (
                self.counts[k - 1] as f64,
                self.counts[k] as f64,
                self.counts[k + 1] as f64,
            );
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                x += 0.5 * (a - c) / denom * self.bin_width();
            }
        }
        Some(x)
    }

    /// Number of local maxima that hold at least `min_fraction` of the tallest
    /// bin's count (after merging plateaus).
    pub fn mode_count(&self, min_fraction: f64) -> usize {
        let peak = *self.counts.iter().max().unwrap_or(&0) as f64;
        let c = &self.counts;
        let mut modes = 0;
        let mut k = 0;
        while k < c.len() {
            let mut end = k;
            while end + 1 < c.len() && c[end + 1] == c[k] {
                end += 1;
            }
            let left_ok = k == 0 || c[k - 1] < c[k];
            let right_ok = end + 1 == c.len() || c[end + 1] < c[k];
            if left_ok && right_ok && c[k] as f64 >= min_fraction * peak && c[k] > 0 {
                modes += 1;
            }
            k = end + 1;
        }
        modes
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_center,count")?;
        for (c, n) in self.centers().iter().zip(&self.counts) {
            writeln!(out, "{c:e},{n}")?;
        }
        Ok(())
    }
}

/// Bin counts over `[min, max]` of the chosen channel.
pub fn histogram(trace: &QuadratureTrace, axis: HistogramAxis, bins: usize) -> Result<Histogram> {
    trace.validate()?;
    if bins < 2 {
        return Err(invalid(format!("need at least 2 bins, got {bins}")));
    }
    let values: Vec<f64> = match axis {
        HistogramAxis::I => trace.i_samples.clone(),
        HistogramAxis::Q => trace.q_samples.clone(),
        HistogramAxis::Projection(angle) => {
            let (s, c) = angle.sin_cos();
            trace
                .i_samples
                .iter()
                .zip(&trace.q_samples)
                .map(|(i, q)| c * i + s * q)
                .collect()
        }
    };
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

/// Two-state Markov telegraph signal on the I channel (Q is zero). The process
/// leaves `+amplitude` at `rates[0]` and `-amplitude` at `rates[1]` (events/s).
pub fn asymmetric_telegraph(
    rates: [f64; 2],
    amplitude: f64,
    sample_rate: f64,
    duration: f64,
    seed: u64,
) -> Result<QuadratureTrace> {
    for &rate in &rates {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid(format!("telegraph rate must be > 0, got {rate}")));
        }
        if rate >= sample_rate / 10.0 {
            return Err(JpoError::Aliasing { rate, sample_rate });
        }
    }
    if !amplitude.is_finite() {
        return Err(invalid("telegraph amplitude must be finite"));
    }
    let sim = SimulationConfig {
        duration,
        sample_rate,
        ..SimulationConfig::default()
    };
    let n = sim.sample_count()?;
    let mut rng = rng_for(seed, 0);
    let leave = [Exp::new(rates[0]).map_err(|e| invalid(e.to_string()))?, Exp::new(rates[1]).map_err(|e| invalid(e.to_string()))?];
    // stationary start: P(+) = r1 / (r0 + r1)
    let u: f64 = rand::Rng::random(&mut rng);
    let mut state = if u < rates[1] / (rates[0] + rates[1]) { 0 } else { 1 };
    let mut next_switch = leave[state].sample(&mut rng);
    let levels = [amplitude, -amplitude];
    let mut i_samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / sample_rate;
        while next_switch <= t {
            state = 1 - state;
            next_switch += leave[state].sample(&mut rng);
        }
        i_samples.push(levels[state]);
    }
    Ok(QuadratureTrace {
        sample_rate,
        i_samples,
        q_samples: vec![0.0; n],
        metadata: Some(TraceMetadata {
            source: format!("telegraph(rates={rates:?}, amplitude={amplitude})"),
            params: None,
            drive: None,
            sim: None,
            seed,
        }),
    })
}

/// Symmetric random telegraph reference with `rate` events/s out of each state.
/// Its autocorrelation is `amplitude^2 exp(-2 rate tau)`.
pub fn telegraph_reference(
    rate: f64,
    amplitude: f64,
    sample_rate: f64,
    duration: f64,
    seed: u64,
) -> Result<QuadratureTrace> {
    asymmetric_telegraph([rate, rate], amplitude, sample_rate, duration, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub ils_amplitude: f64,
    pub stream: u64,
    /// Measured switching rate, or the member's error message.
    pub switching_rate: std::result::Result<f64, String>,
}

/// Simulates and labels one trace per locking amplitude. Member `k` uses the
/// base seed with random stream `sim.stream + k`, so the first member
/// reproduces a standalone [`simulate_trace`] call with the same config.
pub fn kramers_scan(
    params: &ResonatorParams,
    drive_base: &DriveConfig,
    ils_amplitudes: &[f64],
    sim: &SimulationConfig,
) -> Vec<ScanEntry> {
    ils_amplitudes
        .par_iter()
        .enumerate()
        .map(|(k, &amp)| {
            let stream = sim.stream + k as u64;
            let member_sim = SimulationConfig { stream, ..*sim };
            let drive = DriveConfig {
                ils_amplitude: amp,
                ..*drive_base
            };
            let rate = (|| {
                let trace = simulate_trace(params, &drive, &member_sim)?;
                let rule = LabelConfig::for_potential(params, &drive)?;
                Ok::<_, JpoError>(label_states(&trace, &rule)?.switching_rate)
            })()
            .map_err(|e| e.to_string());
            ScanEntry {
                ils_amplitude: amp,
                stream,
                switching_rate: rate,
            }
        })
        .collect()
}
