//! Lorentzian and power-law fits to one-sided PSDs.
//!
//! Fits run on `ln S` with uniform weights, since Welch bins carry a roughly
//! constant relative error. Frequencies and densities are normalised by their
//! medians before solving so results are equivariant under rescaling of
//! either axis.

use serde::{Deserialize, Serialize};

use crate::dynamics::SwitchingStats;
use crate::error::{invalid, JpoError, Result};

/// Frequency selection for a fit: an optional pass band and a list of
/// excluded intervals (spurs).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMask {
    #[serde(default)]
    pub band: Option<(f64, f64)>,
    #[serde(default)]
    pub notches: Vec<(f64, f64)>,
}

impl FitMask {
    pub fn band(lo: f64, hi: f64) -> Self {
        Self {
            band: Some((lo, hi)),
            notches: Vec::new(),
        }
    }

    pub fn with_notch(mut self, lo: f64, hi: f64) -> Self {
        self.notches.push((lo, hi));
        self
    }

    fn keeps(&self, f: f64) -> bool {
        if let Some((lo, hi)) = self.band {
            if f < lo || f > hi {
                return false;
            }
        }
        !self.notches.iter().any(|&(lo, hi)| f >= lo && f <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianConfig {
    #[serde(default)]
    pub mask: FitMask,
    /// Confidence of the F-test against a white spectrum.
    pub confidence: f64,
    /// Minimum plateau / floor ratio for acceptance.
    pub min_contrast: f64,
    /// Fit the white floor; when false it is pinned to zero.
    pub free_floor: bool,
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for LorentzianConfig {
    fn default() -> Self {
        Self {
            mask: FitMask::default(),
            confidence: 0.95,
            min_contrast: 2.0,
            free_floor: true,
            restarts: 5,
            max_iterations: 500,
        }
    }
}

impl LorentzianConfig {
    pub fn with_mask(self, mask: FitMask) -> Self {
        Self { mask, ..self }
    }
}

/// `S(f) = plateau / (1 + (f / corner_hz)^2) + white_floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub plateau: f64,
    pub corner_hz: f64,
    pub white_floor: f64,
    /// Sum of squared residuals of `ln S`.
    pub residual: f64,
    /// Same for the best constant (white) model.
    pub white_residual: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub n_bins: usize,
    pub band: (f64, f64),
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<String>,
    pub config: LorentzianConfig,
}

impl LorentzianFit {
    pub fn evaluate(&self, f: f64) -> f64 {
        lorentzian(self.plateau, self.corner_hz, self.white_floor, f)
    }
}

pub fn lorentzian(plateau: f64, corner_hz: f64, white_floor: f64, f: f64) -> f64 {
    let x = f / corner_hz;
    plateau / (1.0 + x * x) + white_floor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Density at 1 Hz.
    pub amplitude: f64,
    pub band: (f64, f64),
    pub residual: f64,
    pub n_bins: usize,
}

impl PowerLawFit {
    pub fn evaluate(&self, f: f64) -> f64 {
        self.amplitude * f.powf(self.exponent)
    }
}

/// Survival function of the F distribution with `(2, m)` degrees of freedom.
pub fn f_test_p_value(f: f64, m: usize) -> f64 {
    if !(f > 0.0) {
        return 1.0;
    }
    let m = m as f64;
    (1.0 + 2.0 * f / m).powf(-0.5 * m)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Usable `(f, S)` pairs: positive, finite and inside the mask.
fn usable(freqs: &[f64], psd: &[f64], mask: &FitMask) -> Result<Vec<(f64, f64)>> {
    if freqs.len() != psd.len() {
        return Err(invalid(format!(
            "frequency and density lengths differ: {} vs {}",
            freqs.len(),
            psd.len()
        )));
    }
    Ok(freqs
        .iter()
        .zip(psd)
        .filter(|(f, s)| f.is_finite() && s.is_finite() && **f > 0.0 && **s > 0.0 && mask.keeps(**f))
        .map(|(f, s)| (*f, *s))
        .collect())
}

/// Normalised problem: `x = f / f_ref`, `y = ln S - y_ref`.
struct Problem {
    x2: Vec<f64>,
    y: Vec<f64>,
    f_ref: f64,
    y_ref: f64,
}

impl Problem {
    fn new(points: &[(f64, f64)]) -> Self {
        let f_ref = median(&mut points.iter().map(|p| p.0).collect::<Vec<_>>());
        let y_ref = median(&mut points.iter().map(|p| p.1.ln()).collect::<Vec<_>>());
        Self {
            x2: points.iter().map(|p| (p.0 / f_ref).powi(2)).collect(),
            y: points.iter().map(|p| p.1.ln() - y_ref).collect(),
            f_ref,
            y_ref,
        }
    }

    /// Residuals and Jacobian for `theta = (ln plateau, ln corner[, ln floor])`.
    fn eval(&self, theta: &[f64], jac: &mut Vec<[f64; 3]>) -> Vec<f64> {
        let p = theta[0].exp();
        let inv_c2 = (-2.0 * theta[1]).exp();
        let w = theta.get(2).map_or(0.0, |t| t.exp());
        jac.clear();
        self.x2
            .iter()
            .zip(&self.y)
            .map(|(&x2, &y)| {
                let u = x2 * inv_c2;
                let l = p / (1.0 + u);
                let m = l + w;
                jac.push([l / m, l * 2.0 * u / (1.0 + u) / m, w / m]);
                m.ln() - y
            })
            .collect()
    }
}

fn solve(mut a: [[f64; 3]; 3], mut b: [f64; 3], n: usize) -> Option<[f64; 3]> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

struct Solution {
    theta: Vec<f64>,
    rss: f64,
    converged: bool,
}

fn normal_equations(jac: &[[f64; 3]], r: &[f64], n: usize) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (row, res) in jac.iter().zip(r) {
        for i in 0..n {
            jtr[i] += row[i] * res;
            for j in 0..n {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

/// Box-constrained Levenberg-Marquardt followed by a Gauss-Newton polish.
///
/// Comparing residual sums only resolves the optimum to about the square root
/// of machine precision, so the polish accepts steps that shrink the gradient
/// instead.
fn levenberg_marquardt(prob: &Problem, start: &[f64], lower: &[f64], upper: &[f64], max_iter: usize) -> Solution {
    let n = start.len();
    let clamp = |t: &mut Vec<f64>| {
        for k in 0..n {
            t[k] = t[k].clamp(lower[k], upper[k]);
        }
    };
    let free = |theta: &[f64], jtr: &[f64; 3], i: usize| {
        !((theta[i] <= lower[i] && jtr[i] > 0.0) || (theta[i] >= upper[i] && jtr[i] < 0.0))
    };
    // cosine between the residual and each free Jacobian column
    let scaled_gradient = |theta: &[f64], jtj: &[[f64; 3]; 3], jtr: &[f64; 3], rss: f64| {
        (0..n)
            .filter(|&i| free(theta, jtr, i))
            .map(|i| jtr[i].abs() / (jtj[i][i] * rss).sqrt().max(1e-300))
            .fold(0.0, f64::max)
    };
    // damped normal equations with bound-held parameters removed
    let step_for = |theta: &[f64], jtj: &[[f64; 3]; 3], jtr: &[f64; 3], lambda: f64| {
        let mut a = *jtj;
        let mut rhs = [-jtr[0], -jtr[1], -jtr[2]];
        for i in 0..n {
            a[i][i] += lambda * jtj[i][i].max(1e-12);
        }
        for i in 0..n {
            if !free(theta, jtr, i) {
                for j in 0..n {
                    a[i][j] = 0.0;
                    a[j][i] = 0.0;
                }
                a[i][i] = 1.0;
                rhs[i] = 0.0;
            }
        }
        solve(a, rhs, n)
    };

    let mut theta = start.to_vec();
    clamp(&mut theta);
    let mut jac = Vec::new();
    let mut r = prob.eval(&theta, &mut jac);
    let mut rss: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..max_iter {
        let (jtj, jtr) = normal_equations(&jac, &r, n);
        if rss == 0.0 || scaled_gradient(&theta, &jtj, &jtr, rss) < 1e-13 {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let Some(step) = step_for(&theta, &jtj, &jtr, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = (0..n).map(|k| theta[k] + step[k]).collect();
            clamp(&mut trial);
            let mut trial_jac = Vec::new();
            let trial_r = prob.eval(&trial, &mut trial_jac);
            let trial_rss: f64 = trial_r.iter().map(|v| v * v).sum();
            if trial_rss.is_finite() && trial_rss < rss {
                theta = trial;
                r = trial_r;
                jac = trial_jac;
                rss = trial_rss;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: stationary to working precision
            converged = true;
            break;
        }
    }
    if converged && rss > 0.0 {
        let (mut jtj, mut jtr) = normal_equations(&jac, &r, n);
        let mut g = scaled_gradient(&theta, &jtj, &jtr, rss);
        for _ in 0..30 {
            if g == 0.0 {
                break;
            }
            let Some(step) = step_for(&theta, &jtj, &jtr, 0.0) else { break };
            if step.iter().any(|s| s.abs() > 1e-4) {
                break;
            }
            let mut trial: Vec<f64> = (0..n).map(|k| theta[k] + step[k]).collect();
            clamp(&mut trial);
            let mut trial_jac = Vec::new();
            let trial_r = prob.eval(&trial, &mut trial_jac);
            let trial_rss: f64 = trial_r.iter().map(|v| v * v).sum();
            let (tj, tr) = normal_equations(&trial_jac, &trial_r, n);
            let tg = scaled_gradient(&trial, &tj, &tr, trial_rss);
            if !(tg < g) || !(trial_rss <= rss * (1.0 + 1e-12)) {
                break;
            }
            theta = trial;
            rss = trial_rss;
            jtj = tj;
            jtr = tr;
            g = tg;
        }
    }
    Solution { theta, rss, converged }
}

/// Least-squares Lorentzian fit with an F-test against a white spectrum.
///
/// Acceptance also requires the fitted corner to sit inside the fitted band
/// and the plateau to exceed `min_contrast` times the floor; without these a
/// barely curved spectrum (e.g. the high-frequency edge of intrawell noise)
/// would pass the F-test on bin count alone.
pub fn fit_lorentzian(freqs: &[f64], psd: &[f64], cfg: &LorentzianConfig) -> Result<LorentzianFit> {
    if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) {
        return Err(invalid(format!("confidence must be in (0, 1), got {}", cfg.confidence)));
    }
    let points = usable(freqs, psd, &cfg.mask)?;
    if points.len() < 10 {
        return Err(invalid(format!("need at least 10 usable bins, got {}", points.len())));
    }
    let f_lo = points.first().map(|p| p.0).unwrap_or(0.0);
    let f_hi = points.last().map(|p| p.0).unwrap_or(0.0);
    let (f_lo, f_hi) = points
        .iter()
        .fold((f_lo, f_hi), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    if f_hi < 10.0 * f_lo {
        return Err(invalid(format!(
            "usable bins span {f_lo:.4e}..{f_hi:.4e} Hz, less than one decade"
        )));
    }
    let prob = Problem::new(&points);
    let n = points.len();

    // initial guesses from the data
    let edge = (n / 10).max(3);
    let mut by_freq = points.clone();
    by_freq.sort_by(|a, b| a.0.total_cmp(&b.0));
    let low = median(&mut by_freq[..edge].iter().map(|p| p.1).collect::<Vec<_>>());
    let high = median(&mut by_freq[n - edge..].iter().map(|p| p.1).collect::<Vec<_>>());
    let half = 0.5 * (low - high).max(0.0) + high;
    let corner0 = by_freq
        .iter()
        .find(|p| p.1 < half)
        .map(|p| p.0)
        .unwrap_or((f_lo * f_hi).sqrt());
    let a0 = (low - high).max(low * 1e-3).ln() - prob.y_ref;
    let b0 = (corner0 / prob.f_ref).ln();
    let w0 = high.max(low * 1e-6).ln() - prob.y_ref;

    let ymin = prob.y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = prob.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (xlo, xhi) = ((f_lo / prob.f_ref).ln(), (f_hi / prob.f_ref).ln());
    let lower = [ymin - 5.0, xlo - 100f64.ln(), ymin - 40.0];
    let upper = [ymax + 40.0, xhi + 100f64.ln(), ymax + 5.0];

    let jitters = [(0.0, 0.0), (-1.2, 0.3), (1.2, -0.3), (-2.3, 0.7), (2.3, -0.7)];
    let restarts = cfg.restarts.clamp(1, jitters.len());
    let mut nested: Option<Solution> = None;
    let mut full: Option<Solution> = None;
    for &(db, da) in &jitters[..restarts] {
        let s = levenberg_marquardt(&prob, &[a0 + da, b0 + db], &lower[..2], &upper[..2], cfg.max_iterations);
        if s.rss.is_finite() && nested.as_ref().map_or(true, |b| s.rss < b.rss) {
            nested = Some(s);
        }
        if cfg.free_floor {
            let s = levenberg_marquardt(&prob, &[a0 + da, b0 + db, w0], &lower, &upper, cfg.max_iterations);
            if s.rss.is_finite() && full.as_ref().map_or(true, |b| s.rss < b.rss) {
                full = Some(s);
            }
        }
    }
    if cfg.free_floor {
        // the floor-free optimum seeded with a negligible floor
        if let Some(nb) = &nested {
            let s = levenberg_marquardt(
                &prob,
                &[nb.theta[0], nb.theta[1], lower[2]],
                &lower,
                &upper,
                cfg.max_iterations,
            );
            if s.rss.is_finite() && full.as_ref().map_or(true, |b| s.rss < b.rss) {
                full = Some(s);
            }
        }
    }
    let nested = nested.ok_or_else(|| {
        JpoError::Fit(format!("no finite solution from {restarts} restarts over {n} bins"))
    })?;
    if !nested.converged && full.as_ref().map_or(true, |f| !f.converged) {
        return Err(JpoError::Fit(format!(
            "not converged after {restarts} restarts x {} iterations (best ln-residual {:.4e})",
            cfg.max_iterations, nested.rss
        )));
    }
    let (theta, rss) = match full {
        Some(f) if f.rss < nested.rss => (f.theta, f.rss),
        _ => {
            let mut t = nested.theta;
            t.push(f64::NEG_INFINITY);
            (t, nested.rss)
        }
    };
    let plateau = (theta[0] + prob.y_ref).exp();
    let corner_hz = theta[1].exp() * prob.f_ref;
    let white_floor = (theta[2] + prob.y_ref).exp();

    let mean_y = prob.y.iter().sum::<f64>() / n as f64;
    let white_rss: f64 = prob.y.iter().map(|y| (y - mean_y).powi(2)).sum();
    let m = n - 3;
    let (f_statistic, p_value) = if rss > 0.0 && white_rss > rss {
        let f = ((white_rss - rss) / 2.0) / (rss / m as f64);
        (f, f_test_p_value(f, m))
    } else if white_rss > 0.0 && rss == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (0.0, 1.0)
    };
    let rejection = if p_value >= 1.0 - cfg.confidence {
        Some(format!(
            "Lorentzian does not improve on a white spectrum (p = {p_value:.3e})"
        ))
    } else if corner_hz < f_lo || corner_hz > f_hi {
        Some(format!(
            "corner {corner_hz:.4e} Hz lies outside the fitted band {f_lo:.4e}..{f_hi:.4e} Hz"
        ))
    } else if plateau < cfg.min_contrast * white_floor {
        Some(format!(
            "plateau {plateau:.4e} is below {} x floor {white_floor:.4e}",
            cfg.min_contrast
        ))
    } else {
        None
    };
    Ok(LorentzianFit {
        plateau,
        corner_hz,
        white_floor,
        residual: rss,
        white_residual: white_rss,
        f_statistic,
        p_value,
        n_bins: n,
        band: (f_lo, f_hi),
        accepted: rejection.is_none(),
        rejection,
        config: cfg.clone(),
    })
}

/// Straight-line fit of `ln S` against `ln f` over `band`.
pub fn fit_powerlaw(freqs: &[f64], psd: &[f64], band: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid(format!("band must satisfy 0 < f_lo < f_hi, got {lo}..{hi}")));
    }
    let fmax = freqs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fmin = freqs.iter().copied().filter(|f| *f > 0.0).fold(f64::INFINITY, f64::min);
    if lo < fmin || hi > fmax {
        return Err(invalid(format!(
            "band {lo}..{hi} Hz exceeds the data range {fmin}..{fmax} Hz"
        )));
    }
    let points = usable(freqs, psd, &FitMask::band(lo, hi))?;
    if points.len() < 8 {
        return Err(invalid(format!("band {lo}..{hi} Hz holds {} bins, need 8", points.len())));
    }
    let n = points.len() as f64;
    let f_ref = median(&mut points.iter().map(|p| p.0).collect::<Vec<_>>());
    let xs: Vec<f64> = points.iter().map(|p| (p.0 / f_ref).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    Ok(PowerLawFit {
        exponent,
        amplitude: (intercept - exponent * f_ref.ln()).exp(),
        band,
        residual,
        n_bins: points.len(),
    })
}

/// Cross-check of the switching rate seen in the time domain against the
/// Lorentzian corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConsistency {
    /// `pi * corner_hz`: the per-state rate of a symmetric telegraph signal.
    pub frequency_rate: f64,
    /// Switches per second.
    pub time_rate: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub occupation: [f64; 2],
    pub symmetric: bool,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

/// Occupation imbalance above which the symmetric-telegraph relation is not
/// applied.
pub const SYMMETRY_TOLERANCE: f64 = 0.2;

/// For a symmetric telegraph signal each state is left at rate `G`, the
/// record shows `G` switches per second and the Lorentzian corner sits at
/// `G / pi`, so `pi * corner_hz` is compared directly with the switch count
/// per second.
pub fn rate_consistency(stats: &SwitchingStats, fit: &LorentzianFit, tolerance: f64) -> Result<RateConsistency> {
    if !fit.accepted {
        return Err(JpoError::Precondition(
            "rate comparison needs an accepted Lorentzian fit".into(),
        ));
    }
    if stats.switch_count < 50 {
        return Err(JpoError::Precondition(format!(
            "rate comparison needs at least 50 switching events, got {}",
            stats.switch_count
        )));
    }
    let frequency_rate = std::f64::consts::PI * fit.corner_hz;
    let time_rate = stats.switching_rate;
    let discrepancy = (frequency_rate - time_rate).abs() / time_rate;
    let imbalance = (stats.occupation[0] - stats.occupation[1]).abs();
    let symmetric = imbalance <= SYMMETRY_TOLERANCE;
    let explanation = if !symmetric {
        Some(format!(
            "occupations {:.3}/{:.3} are unequal; the symmetric telegraph relation between corner and switching rate does not apply",
            stats.occupation[0], stats.occupation[1]
        ))
    } else if discrepancy > tolerance {
        Some(format!(
            "rates differ by {:.1} % (tolerance {:.1} %)",
            100.0 * discrepancy,
            100.0 * tolerance
        ))
    } else {
        None
    };
    Ok(RateConsistency {
        frequency_rate,
        time_rate,
        discrepancy,
        tolerance,
        occupation: stats.occupation,
        symmetric,
        pass: symmetric && discrepancy <= tolerance,
        explanation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, df: f64) -> Vec<f64> {
        (1..=n).map(|k| k as f64 * df).collect()
    }

    fn noisy(values: &[f64], rel: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, rel).unwrap();
        values.iter().map(|v| v * (1.0 + d.sample(&mut rng))).collect()
    }

    #[test]
    fn p_value_limits() {
        assert_eq!(f_test_p_value(0.0, 10), 1.0);
        // (1 + 2*3/10)^-5
        assert!((f_test_p_value(3.0, 10) - 1.6f64.powi(-5)).abs() < 1e-15);
    }

    #[test]
    fn recovers_synthetic_lorentzian() {
        let f = grid(10_000, 10.0);
        let s: Vec<f64> = f.iter().map(|&f| lorentzian(1e-3, 100.0, 1e-7, f)).collect();
        let fit = fit_lorentzian(&f, &noisy(&s, 0.05, 1), &LorentzianConfig::default()).unwrap();
        assert!(fit.accepted, "{fit:?}");
        assert!((fit.plateau / 1e-3 - 1.0).abs() < 0.1);
        assert!((fit.corner_hz / 100.0 - 1.0).abs() < 0.1);
        assert!((fit.white_floor / 1e-7 - 1.0).abs() < 0.1);
    }

    #[test]
    fn exact_lorentzian_is_exact() {
        let f = grid(400, 5.0);
        let s: Vec<f64> = f.iter().map(|&f| lorentzian(2.0, 50.0, 1e-3, f)).collect();
        let fit = fit_lorentzian(&f, &s, &LorentzianConfig::default()).unwrap();
        assert!((fit.corner_hz / 50.0 - 1.0).abs() < 1e-8);
        assert!((fit.white_floor / 1e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn white_noise_is_rejected() {
        let f = grid(2000, 1.0);
        let s = noisy(&vec![3e-6; 2000], 0.1, 2);
        let fit = fit_lorentzian(&f, &s, &LorentzianConfig::default()).unwrap();
        assert!(!fit.accepted);
    }

    #[test]
    fn exactly_flat_is_rejected() {
        let f = grid(50, 1.0);
        let fit = fit_lorentzian(&f, &vec![1.0; 50], &LorentzianConfig::default()).unwrap();
        assert!(!fit.accepted);
    }

    #[test]
    fn too_few_bins_or_span() {
        let f = grid(9, 1.0);
        assert!(fit_lorentzian(&f, &vec![1.0; 9], &LorentzianConfig::default()).is_err());
        let f: Vec<f64> = (0..20).map(|k| 100.0 + k as f64).collect();
        assert!(fit_lorentzian(&f, &vec![1.0; 20], &LorentzianConfig::default()).is_err());
    }

    #[test]
    fn notches_drop_spurs() {
        let f = grid(2000, 1.0);
        let mut s: Vec<f64> = f.iter().map(|&f| lorentzian(1.0, 20.0, 1e-4, f)).collect();
        for (k, v) in s.iter_mut().enumerate() {
            if (k + 1) % 60 == 0 {
                *v *= 1e3;
            }
        }
        let mut mask = FitMask::default();
        for h in 1..=33 {
            let c = 60.0 * h as f64;
            mask = mask.with_notch(c - 0.5, c + 0.5);
        }
        let fit = fit_lorentzian(&f, &s, &LorentzianConfig::default().with_mask(mask)).unwrap();
        assert!((fit.corner_hz / 20.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn powerlaw_exact() {
        let f = grid(1000, 1.0);
        let s: Vec<f64> = f.iter().map(|f| 7.0 / (f * f)).collect();
        let p = fit_powerlaw(&f, &s, (10.0, 1000.0)).unwrap();
        assert!((p.exponent + 2.0).abs() < 1e-12);
        assert!((p.amplitude / 7.0 - 1.0).abs() < 1e-10);
        assert!(fit_powerlaw(&f, &s, (10.0, 16.0)).is_err());
        assert!(fit_powerlaw(&f, &s, (10.0, 2000.0)).is_err());
    }

    fn stats(count: usize, occupation: [f64; 2], duration: f64) -> SwitchingStats {
        SwitchingStats {
            labels: Vec::new(),
            dwell_times: Vec::new(),
            dwell_states: Vec::new(),
            occupation,
            switch_count: count,
            switching_rate: count as f64 / duration,
            duration,
        }
    }

    #[test]
    fn rate_consistency_rules() {
        let f = grid(500, 10.0);
        let corner = 1000.0 / std::f64::consts::PI;
        let s: Vec<f64> = f.iter().map(|&f| lorentzian(1.0, corner, 0.0, f)).collect();
        let fit = fit_lorentzian(&f, &s, &LorentzianConfig::default()).unwrap();
        let ok = rate_consistency(&stats(1000, [0.5, 0.5], 1.0), &fit, 0.2).unwrap();
        assert!(ok.pass && ok.discrepancy < 1e-6);
        let skewed = rate_consistency(&stats(1000, [0.9, 0.1], 1.0), &fit, 0.2).unwrap();
        assert!(!skewed.pass && skewed.explanation.is_some());
        assert!(rate_consistency(&stats(10, [0.5, 0.5], 1.0), &fit, 0.2).is_err());
        let rejected = LorentzianFit { accepted: false, ..fit };
        assert!(matches!(
            rate_consistency(&stats(1000, [0.5, 0.5], 1.0), &rejected, 0.2),
            Err(JpoError::Precondition(_))
        ));
    }
}
