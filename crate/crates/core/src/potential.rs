//! Rotating-frame effective potential of the pumped oscillator.
//!
//! ```text
//! U(qx, qy) = (kappa/4) sqrt(P_p/P_th) (qy^2 - qx^2)
//!           - 3 gamma (qx^2 + qy^2)^2
//!           + sqrt(kappa_ext) |E_s| (qy cos(theta_s) - qx sin(theta_s))
//! ```
//!
//! `gamma` is stored signed and must be negative: with `gamma >= 0` the quartic
//! term is unbounded below and the cross-section `U(qx, 0)` has no double well.
//! The model is only meaningful near the wells; `|q| <= 2 q*` is the region of
//! validity used throughout the crate.
//!
//! Quantities are dimensionless "scaled units" unless the caller builds
//! [`ResonatorParams`] from physical rates. With `kappa = 4`, `P_p/P_th = 1`
//! and `gamma = -1/12` the wells sit at `(+-sqrt(2), 0)` with `U = -1`.
//!
//! With the linear locking term the favoured well is the one along
//! `(sin theta_s, -cos theta_s)`; for `theta_s = -pi/2` that is the `qx < 0`
//! well.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, JpoError, Result, SearchDiagnostics};
use crate::sym2::eig_sym2;

/// Device constants. Rates and frequencies are angular (rad/s, or rad per
/// scaled time unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub kappa_ext: f64,
    pub kappa_int: f64,
    pub omega_s: f64,
    pub gamma: f64,
}

impl ResonatorParams {
    pub fn new(kappa_ext: f64, kappa_int: f64, omega_s: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            kappa_ext,
            kappa_int,
            omega_s,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Physical device given as ordinary frequencies (Hz), i.e. `kappa/2pi`.
    pub fn from_hz(kappa_ext_hz: f64, kappa_int_hz: f64, omega_s_hz: f64, gamma: f64) -> Result<Self> {
        let tau = std::f64::consts::TAU;
        Self::new(tau * kappa_ext_hz, tau * kappa_int_hz, tau * omega_s_hz, gamma)
    }

    /// Scaled-unit resonator: all loss is external and `omega_s = 1`.
    pub fn scaled(kappa: f64, gamma: f64) -> Result<Self> {
        Self::new(kappa, 0.0, 1.0, gamma)
    }

    /// Scaled resonator whose no-locking wells sit at `qx = +-well_radius`
    /// when `P_p/P_th = 1`.
    pub fn scaled_with_well_radius(kappa: f64, well_radius: f64) -> Result<Self> {
        if !(well_radius > 0.0) || !well_radius.is_finite() {
            return Err(invalid(format!("well radius must be positive, got {well_radius}")));
        }
        Self::scaled(kappa, -kappa / (24.0 * well_radius * well_radius))
    }

    pub fn kappa_tot(&self) -> f64 {
        self.kappa_ext + self.kappa_int
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("kappa_ext", self.kappa_ext)?;
        ensure_finite("kappa_int", self.kappa_int)?;
        ensure_finite("omega_s", self.omega_s)?;
        ensure_finite("gamma", self.gamma)?;
        if !(self.kappa_ext > 0.0) {
            return Err(invalid(format!("kappa_ext must be > 0, got {}", self.kappa_ext)));
        }
        if self.kappa_int < 0.0 {
            return Err(invalid(format!("kappa_int must be >= 0, got {}", self.kappa_int)));
        }
        if !(self.omega_s > 0.0) {
            return Err(invalid(format!("omega_s must be > 0, got {}", self.omega_s)));
        }
        if !(self.gamma < 0.0) {
            return Err(invalid(format!(
                "gamma must be negative for a bounded double well, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Pump ratio and injection-locking signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// P_p / P_th.
    pub pump_ratio: f64,
    /// |E_s| in sqrt(photons / time).
    pub ils_amplitude: f64,
    /// theta_s in radians.
    pub ils_phase: f64,
}

impl DriveConfig {
    pub fn new(pump_ratio: f64, ils_amplitude: f64, ils_phase: f64) -> Result<Self> {
        let d = Self {
            pump_ratio,
            ils_amplitude,
            ils_phase: ils_phase.rem_euclid(std::f64::consts::TAU),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn unlocked(pump_ratio: f64) -> Self {
        Self {
            pump_ratio,
            ils_amplitude: 0.0,
            ils_phase: 0.0,
        }
    }

    pub fn with_ils(self, amplitude: f64, phase: f64) -> Self {
        Self {
            ils_amplitude: amplitude,
            ils_phase: phase,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("pump_ratio", self.pump_ratio)?;
        ensure_finite("ils_amplitude", self.ils_amplitude)?;
        ensure_finite("ils_phase", self.ils_phase)?;
        if self.pump_ratio < 0.0 {
            return Err(invalid(format!("pump_ratio must be >= 0, got {}", self.pump_ratio)));
        }
        if self.ils_amplitude < 0.0 {
            return Err(invalid(format!(
                "ils_amplitude must be >= 0, got {}",
                self.ils_amplitude
            )));
        }
        Ok(())
    }
}

/// A point `(qx, qy)` in the rotating-frame phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub qx: f64,
    pub qy: f64,
}

impl PhasePoint {
    pub fn new(qx: f64, qy: f64) -> Result<Self> {
        ensure_finite("q_x", qx)?;
        ensure_finite("q_y", qy)?;
        Ok(Self { qx, qy })
    }

    pub const ORIGIN: PhasePoint = PhasePoint { qx: 0.0, qy: 0.0 };

    pub fn norm(&self) -> f64 {
        self.qx.hypot(self.qy)
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        (self.qx - other.qx).hypot(self.qy - other.qy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryKind {
    Minimum,
    Saddle,
    Maximum,
}

impl StationaryKind {
    fn from_eigenvalues(lo: f64, hi: f64) -> Self {
        if lo > 0.0 {
            StationaryKind::Minimum
        } else if hi < 0.0 {
            StationaryKind::Maximum
        } else {
            StationaryKind::Saddle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    #[serde(flatten)]
    pub location: PhasePoint,
    pub energy: f64,
    pub kind: StationaryKind,
    /// Hessian eigenvalues, ascending.
    #[serde(rename = "hess_eigs")]
    pub hessian_eigenvalues: [f64; 2],
}

/// Multi-start damped Newton search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Starts are placed at this multiple of the analytic well radius.
    pub start_scale: f64,
    /// Deduplication radius as a fraction of the analytic well radius.
    pub dedup_fraction: f64,
    pub max_iterations: usize,
    /// Convergence threshold on |grad U|, relative to `kappa sqrt(P_p/P_th) q*`.
    pub gradient_tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            start_scale: 1.0,
            dedup_fraction: 1e-6,
            max_iterations: 200,
            gradient_tolerance: 1e-12,
        }
    }
}

/// Precomputed polynomial coefficients of the potential for one
/// (resonator, drive) pair. This is the hot-path evaluator used by the
/// integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePotential {
    quadratic: f64,
    quartic: f64,
    linear_x: f64,
    linear_y: f64,
    kappa: f64,
    pump_ratio: f64,
    gamma: f64,
}

impl EffectivePotential {
    pub fn new(params: &ResonatorParams, drive: &DriveConfig) -> Result<Self> {
        params.validate()?;
        drive.validate()?;
        let kappa = params.kappa_tot();
        let tilt = params.kappa_ext.sqrt() * drive.ils_amplitude;
        let (sin_t, cos_t) = drive.ils_phase.sin_cos();
        Ok(Self {
            quadratic: 0.25 * kappa * drive.pump_ratio.sqrt(),
            quartic: -3.0 * params.gamma,
            linear_x: -tilt * sin_t,
            linear_y: tilt * cos_t,
            kappa,
            pump_ratio: drive.pump_ratio,
            gamma: params.gamma,
        })
    }

    #[inline]
    pub fn value(&self, q: PhasePoint) -> f64 {
        let (x, y) = (q.qx, q.qy);
        let r2 = x * x + y * y;
        self.quadratic * (y * y - x * x) + self.quartic * r2 * r2 + self.linear_x * x + self.linear_y * y
    }

    #[inline]
    pub fn gradient(&self, q: PhasePoint) -> [f64; 2] {
        let (x, y) = (q.qx, q.qy);
        let radial = 4.0 * self.quartic * (x * x + y * y);
        [
            (radial - 2.0 * self.quadratic) * x + self.linear_x,
            (radial + 2.0 * self.quadratic) * y + self.linear_y,
        ]
    }

    /// `[[Uxx, Uxy], [Uxy, Uyy]]`.
    pub fn hessian(&self, q: PhasePoint) -> [[f64; 2]; 2] {
        let (x, y) = (q.qx, q.qy);
        let xx = -2.0 * self.quadratic + 4.0 * self.quartic * (3.0 * x * x + y * y);
        let yy = 2.0 * self.quadratic + 4.0 * self.quartic * (x * x + 3.0 * y * y);
        let xy = 8.0 * self.quartic * x * y;
        [[xx, xy], [xy, yy]]
    }

    pub fn hessian_eigenvalues(&self, q: PhasePoint) -> [f64; 2] {
        let h = self.hessian(q);
        let e = eig_sym2(h[0][0], h[0][1], h[1][1]);
        [e.minor, e.major]
    }

    /// No-locking well radius `q* = sqrt(kappa sqrt(P_p/P_th) / (24 |gamma|))`.
    pub fn well_radius(&self) -> f64 {
        (self.kappa * self.pump_ratio.sqrt() / (24.0 * self.gamma.abs())).sqrt()
    }

    /// No-locking barrier `kappa^2 (P_p/P_th) / (192 |gamma|)`.
    pub fn unlocked_barrier(&self) -> f64 {
        self.kappa * self.kappa * self.pump_ratio / (192.0 * self.gamma.abs())
    }

    /// Curvature `kappa sqrt(P_p/P_th)` of both principal directions at a
    /// no-locking well.
    pub fn well_curvature(&self) -> f64 {
        self.kappa * self.pump_ratio.sqrt()
    }

    pub fn is_locked(&self) -> bool {
        self.linear_x != 0.0 || self.linear_y != 0.0
    }
}

pub fn potential_value(params: &ResonatorParams, drive: &DriveConfig, q: PhasePoint) -> Result<f64> {
    let q = PhasePoint::new(q.qx, q.qy)?;
    Ok(EffectivePotential::new(params, drive)?.value(q))
}

pub fn potential_gradient(params: &ResonatorParams, drive: &DriveConfig, q: PhasePoint) -> Result<[f64; 2]> {
    let q = PhasePoint::new(q.qx, q.qy)?;
    Ok(EffectivePotential::new(params, drive)?.gradient(q))
}

fn solve2(h: [[f64; 2]; 2], g: [f64; 2]) -> Option<[f64; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let scale = h[0][0].abs().max(h[1][1].abs()).max(h[0][1].abs());
    if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([
        (h[1][1] * g[0] - h[0][1] * g[1]) / det,
        (h[0][0] * g[1] - h[1][0] * g[0]) / det,
    ])
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

/// Damped Newton on grad U = 0 with backtracking on |grad U|^2. Falls back to
/// descent on the merit function when the Hessian is singular.
fn newton_root(pot: &EffectivePotential, start: PhasePoint, tol: f64, max_iter: usize) -> (PhasePoint, f64, bool) {
    let mut q = start;
    let mut g = pot.gradient(q);
    let mut merit = norm2(g);
    for _ in 0..max_iter {
        if merit.sqrt() <= tol {
            // a couple of undamped polishing steps
            for _ in 0..2 {
                if let Some(step) = solve2(pot.hessian(q), g) {
                    let cand = PhasePoint {
                        qx: q.qx - step[0],
                        qy: q.qy - step[1],
                    };
                    let cg = pot.gradient(cand);
                    if norm2(cg) <= merit {
                        q = cand;
                        g = cg;
                        merit = norm2(g);
                    }
                }
            }
            return (q, merit.sqrt(), true);
        }
        let h = pot.hessian(q);
        let direction = match solve2(h, g) {
            Some(s) => [-s[0], -s[1]],
            None => {
                // -H g is the descent direction of |g|^2 / 2
                let hg = [h[0][0] * g[0] + h[0][1] * g[1], h[1][0] * g[0] + h[1][1] * g[1]];
                let n = norm2(hg).sqrt().max(f64::MIN_POSITIVE);
                let len = g.iter().map(|v| v.abs()).fold(0.0, f64::max) / n;
                [-hg[0] * len, -hg[1] * len]
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = PhasePoint {
                qx: q.qx + alpha * direction[0],
                qy: q.qy + alpha * direction[1],
            };
            let cg = pot.gradient(cand);
            let cm = norm2(cg);
            if cm.is_finite() && cm < (1.0 - 1e-4 * alpha) * merit {
                q = cand;
                g = cg;
                merit = cm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = merit.sqrt() <= tol;
    (q, merit.sqrt(), converged)
}

/// Locates and classifies the stationary points of the potential.
///
/// Nine starts (origin, `+-q*` on both axes, four diagonals) are refined by
/// damped Newton and deduplicated. Requires `P_p/P_th >= 1`.
pub fn find_stationary_points(
    params: &ResonatorParams,
    drive: &DriveConfig,
    search: &SearchConfig,
) -> Result<Vec<StationaryPoint>> {
    let pot = EffectivePotential::new(params, drive)?;
    if drive.pump_ratio < 1.0 {
        return Err(JpoError::BelowThreshold(drive.pump_ratio));
    }
    if !(search.start_scale > 0.0) || !(search.dedup_fraction > 0.0) || search.max_iterations == 0 {
        return Err(invalid("search config needs positive scale, dedup fraction and iteration budget"));
    }
    let q_star = pot.well_radius();
    let s = search.start_scale * q_star;
    let d = s * std::f64::consts::FRAC_1_SQRT_2;
    let starts = [
        (0.0, 0.0),
        (s, 0.0),
        (-s, 0.0),
        (0.0, s),
        (0.0, -s),
        (d, d),
        (d, -d),
        (-d, d),
        (-d, -d),
    ];
    let force_scale = pot.well_curvature() * q_star;
    let tol = search.gradient_tolerance * force_scale;
    let dedup = search.dedup_fraction * q_star;

    let mut found: Vec<PhasePoint> = Vec::new();
    let mut best = f64::INFINITY;
    for &(x, y) in &starts {
        let (q, gnorm, ok) = newton_root(&pot, PhasePoint { qx: x, qy: y }, tol, search.max_iterations);
        best = best.min(gnorm);
        if ok && !found.iter().any(|p| p.distance(&q) < dedup) {
            found.push(q);
        }
    }
    if found.is_empty() {
        return Err(JpoError::Convergence(SearchDiagnostics {
            starts: starts.len(),
            max_iterations: search.max_iterations,
            best_gradient_norm: best,
        }));
    }
    let mut points: Vec<StationaryPoint> = found
        .into_iter()
        .map(|q| {
            let eigs = pot.hessian_eigenvalues(q);
            StationaryPoint {
                location: q,
                energy: pot.value(q),
                kind: StationaryKind::from_eigenvalues(eigs[0], eigs[1]),
                hessian_eigenvalues: eigs,
            }
        })
        .collect();
    points.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(b.location.qx.total_cmp(&a.location.qx))
    });
    Ok(points)
}

/// Barrier heights seen from each well and the energy splitting between the
/// wells. Well 0 is the minimum with the larger `qx` (the `qx > 0` well), well
/// 1 the other one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub wells: [StationaryPoint; 2],
    pub saddle: StationaryPoint,
    /// `U(saddle) - U(well_i)`.
    pub barrier_from_each_well: [f64; 2],
    /// `U(well_1) - U(well_0)`.
    pub well_energy_splitting: f64,
}

impl BarrierReport {
    /// Index of the lower-energy well.
    pub fn deeper_well(&self) -> usize {
        if self.wells[1].energy < self.wells[0].energy {
            1
        } else {
            0
        }
    }

    pub fn shallow_barrier(&self) -> f64 {
        self.barrier_from_each_well[0].min(self.barrier_from_each_well[1])
    }
}

pub fn barrier_and_asymmetry(params: &ResonatorParams, drive: &DriveConfig) -> Result<BarrierReport> {
    let points = find_stationary_points(params, drive, &SearchConfig::default())?;
    barrier_from_points(&points)
}

pub fn barrier_from_points(points: &[StationaryPoint]) -> Result<BarrierReport> {
    let mut minima: Vec<StationaryPoint> = points
        .iter()
        .copied()
        .filter(|p| p.kind == StationaryKind::Minimum)
        .collect();
    if minima.len() < 2 {
        return Err(JpoError::Monostable(format!(
            "found {} minimum; the locking signal is beyond the bistable range",
            minima.len()
        )));
    }
    minima.sort_by(|a, b| b.location.qx.total_cmp(&a.location.qx));
    let well0 = minima[0];
    let well1 = minima[minima.len() - 1];
    let saddle = points
        .iter()
        .copied()
        .filter(|p| p.kind == StationaryKind::Saddle)
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .ok_or_else(|| JpoError::Domain("two minima but no saddle between them".into()))?;
    Ok(BarrierReport {
        wells: [well0, well1],
        saddle,
        barrier_from_each_well: [saddle.energy - well0.energy, saddle.energy - well1.energy],
        well_energy_splitting: well1.energy - well0.energy,
    })
}

/// `U(qx, 0)` sampled on `grid`, which must be non-empty and strictly
/// increasing.
pub fn cross_section(params: &ResonatorParams, drive: &DriveConfig, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(invalid("cross-section grid is empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid("cross-section grid contains non-finite values"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("cross-section grid must be strictly increasing"));
    }
    let pot = EffectivePotential::new(params, drive)?;
    Ok(grid
        .iter()
        .map(|&x| (x, pot.value(PhasePoint { qx: x, qy: 0.0 })))
        .collect())
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|k| lo + step * k as f64).collect()
        }
    }
}

pub fn write_cross_section_csv<W: Write>(mut out: W, curve: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(out, "q_x,U")?;
    for (x, u) in curve {
        writeln!(out, "{x:e},{u:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn unit() -> (ResonatorParams, DriveConfig) {
        (
            ResonatorParams::scaled(4.0, -1.0 / 12.0).unwrap(),
            DriveConfig::unlocked(1.0),
        )
    }

    #[test]
    fn origin_is_zero() {
        let (p, d) = unit();
        let d = d.with_ils(0.3, 0.7);
        assert_eq!(potential_value(&p, &d, PhasePoint::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn example_polynomial() {
        let (p, d) = unit();
        let u = potential_value(&p, &d, PhasePoint::new(2f64.sqrt(), 0.0).unwrap()).unwrap();
        assert!((u + 1.0).abs() < 1e-14);
        let g = potential_gradient(&p, &d, PhasePoint::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(g, [-1.0, 0.0]);
    }

    #[test]
    fn non_finite_point_rejected() {
        let (p, d) = unit();
        let bad = PhasePoint { qx: f64::NAN, qy: 0.0 };
        assert!(matches!(potential_value(&p, &d, bad), Err(JpoError::InvalidArgument(_))));
        assert!(potential_gradient(&p, &d, bad).is_err());
    }

    #[test]
    fn positive_gamma_rejected() {
        assert!(ResonatorParams::scaled(4.0, 0.1).is_err());
        assert!(ResonatorParams::scaled(4.0, 0.0).is_err());
        assert!(ResonatorParams::new(-1.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn below_threshold_refused() {
        let (p, _) = unit();
        let d = DriveConfig::unlocked(0.5);
        assert!(matches!(
            find_stationary_points(&p, &d, &SearchConfig::default()),
            Err(JpoError::BelowThreshold(_))
        ));
    }

    #[test]
    fn unlocked_structure() {
        let (p, d) = unit();
        let pts = find_stationary_points(&p, &d, &SearchConfig::default()).unwrap();
        assert_eq!(pts.len(), 3);
        let minima: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Minimum).collect();
        let saddles: Vec<_> = pts.iter().filter(|p| p.kind == StationaryKind::Saddle).collect();
        assert_eq!(minima.len(), 2);
        assert_eq!(saddles.len(), 1);
        assert!(saddles[0].location.norm() < 1e-12);
        for m in minima {
            assert!((m.location.qx.abs() - 2f64.sqrt()).abs() < 1e-12);
            assert!(m.location.qy.abs() < 1e-12);
            assert!((m.energy + 1.0).abs() < 1e-12);
            // both curvatures equal kappa sqrt(P_p/P_th) = 4
            assert!((m.hessian_eigenvalues[0] - 4.0).abs() < 1e-10);
            assert!((m.hessian_eigenvalues[1] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn minimum_gradient_vanishes() {
        let p = ResonatorParams::scaled(3.0, -0.2).unwrap();
        let d = DriveConfig::unlocked(1.7).with_ils(0.05, 1.1);
        let pot = EffectivePotential::new(&p, &d).unwrap();
        for sp in find_stationary_points(&p, &d, &SearchConfig::default()).unwrap() {
            let g = pot.gradient(sp.location);
            assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10, "{g:?}");
        }
    }

    #[test]
    fn locking_phase_selects_well() {
        let (p, base) = unit();
        let minus = barrier_and_asymmetry(&p, &base.with_ils(0.05, -FRAC_PI_2)).unwrap();
        let plus = barrier_and_asymmetry(&p, &base.with_ils(0.05, FRAC_PI_2)).unwrap();
        // favoured direction (sin theta, -cos theta): qx < 0 for theta = -pi/2
        assert_eq!(minus.deeper_well(), 1);
        assert_eq!(plus.deeper_well(), 0);
        assert!(minus.well_energy_splitting < 0.0);
        assert!((minus.well_energy_splitting + plus.well_energy_splitting).abs() < 1e-12);
    }

    #[test]
    fn unlocked_barrier_is_one() {
        let (p, d) = unit();
        let b = barrier_and_asymmetry(&p, &d).unwrap();
        assert!((b.barrier_from_each_well[0] - 1.0).abs() < 1e-12);
        assert!((b.barrier_from_each_well[1] - 1.0).abs() < 1e-12);
        assert!(b.well_energy_splitting.abs() < 1e-12);
    }

    #[test]
    fn strong_locking_is_monostable() {
        let (p, d) = unit();
        // critical tilt for this potential is kappa q* / (3 sqrt 3) ~ 1.09
        let d = d.with_ils(1.0, -FRAC_PI_2);
        assert!(matches!(barrier_and_asymmetry(&p, &d), Err(JpoError::Monostable(_))));
    }

    #[test]
    fn cross_section_grid_validation() {
        let (p, d) = unit();
        assert!(cross_section(&p, &d, &[]).is_err());
        assert!(cross_section(&p, &d, &[0.0, 0.0]).is_err());
        assert!(cross_section(&p, &d, &[1.0, 0.0]).is_err());
        let c = cross_section(&p, &d, &linspace(-2.0, 2.0, 41)).unwrap();
        for (a, b) in c.iter().zip(c.iter().rev()) {
            assert!((a.0 + b.0).abs() < 1e-14);
            assert!((a.1 - b.1).abs() <= 1e-13 * a.1.abs().max(1.0));
        }
    }

    #[test]
    fn cross_section_linear_in_amplitude() {
        let (p, d) = unit();
        let x = 2f64.sqrt();
        let u = |a: f64| cross_section(&p, &d.with_ils(a, PI / 2.0), &[x]).unwrap()[0].1;
        let (u0, u1, u2) = (u(0.0), u(0.1), u(0.2));
        assert!(u1 < u0 && u2 < u1);
        assert!(((u0 - u1) - (u1 - u2)).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_cross_section_csv(&mut buf, &[(0.0, 0.0)]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("q_x,U\n"));
    }
}
