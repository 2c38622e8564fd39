use std::f64::consts::{FRAC_PI_2, PI};

use jpo_core::potential::*;
use proptest::prelude::*;

fn unit_params() -> ResonatorParams {
    ResonatorParams::scaled(4.0, -1.0 / 12.0).unwrap()
}

fn params_strategy() -> impl Strategy<Value = ResonatorParams> {
    (0.5f64..50.0, 0.0f64..5.0, 0.01f64..1.0)
        .prop_map(|(ke, ki, g)| ResonatorParams::new(ke, ki, 1e3, -g).unwrap())
}

fn point(qx: f64, qy: f64) -> PhasePoint {
    PhasePoint::new(qx, qy).unwrap()
}

/// Brute-force minimum of `U(qx, 0)` on a fine grid, refined by golden
/// section. Independent of the Newton search.
fn grid_minimum(pot: &EffectivePotential, lo: f64, hi: f64) -> (f64, f64) {
    let n = 20_001;
    let h = (hi - lo) / (n - 1) as f64;
    let f = |x: f64| pot.value(point(x, 0.0));
    let k = (0..n)
        .min_by(|&a, &b| f(lo + a as f64 * h).total_cmp(&f(lo + b as f64 * h)))
        .unwrap();
    let (mut a, mut b) = (lo + (k as f64 - 1.0) * h, lo + (k as f64 + 1.0) * h);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[test]
fn example_polynomial_matches_direct_substitution() {
    let p = unit_params();
    let d = DriveConfig::unlocked(1.0);
    for x in [-2.5, -1.0, 0.0, 0.3, 2f64.sqrt(), 3.0] {
        let expect = -x * x + x.powi(4) / 4.0;
        let got = potential_value(&p, &d, point(x, 0.0)).unwrap();
        assert!((got - expect).abs() < 1e-12, "U({x}, 0) = {got}, expected {expect}");
    }
    let g = potential_gradient(&p, &d, point(1.0, 0.0)).unwrap();
    assert!((g[0] + 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
}

#[test]
fn grid_oracle_agrees_with_closed_form_wells() {
    let p = unit_params();
    let d = DriveConfig::unlocked(1.0);
    let pot = EffectivePotential::new(&p, &d).unwrap();
    let (x, u) = grid_minimum(&pot, 0.0, 3.0);
    assert!((x - 2f64.sqrt()).abs() < 1e-6);
    assert!((u + 1.0).abs() < 1e-10);
    let report = barrier_and_asymmetry(&p, &d).unwrap();
    assert!((report.wells[0].location.qx - x).abs() < 1e-6);
}

#[test]
fn locking_phase_orders_well_depths_by_grid_oracle() {
    let p = unit_params();
    for (phase, deeper_negative) in [(-FRAC_PI_2, true), (FRAC_PI_2, false)] {
        let d = DriveConfig::unlocked(1.0).with_ils(0.05, phase);
        let pot = EffectivePotential::new(&p, &d).unwrap();
        let (_, u_pos) = grid_minimum(&pot, 0.1, 3.0);
        let (_, u_neg) = grid_minimum(&pot, -3.0, -0.1);
        assert_eq!(u_neg < u_pos, deeper_negative, "phase {phase}");
        let report = barrier_and_asymmetry(&p, &d).unwrap();
        assert_eq!(report.deeper_well() == 1, deeper_negative);
        assert!((report.wells[0].energy - u_pos).abs() < 1e-9);
        assert!((report.wells[1].energy - u_neg).abs() < 1e-9);
    }
}

/// The polynomial keeps its double well for any positive pump ratio, so the
/// search refuses sub-threshold drives instead of reporting wells that the
/// oscillator does not have.
#[test]
fn below_threshold_is_refused_although_the_polynomial_is_bistable() {
    let p = unit_params();
    let d = DriveConfig::unlocked(0.5);
    let pot = EffectivePotential::new(&p, &d).unwrap();
    let (x, _) = grid_minimum(&pot, 0.01, 3.0);
    assert!((x - 0.5f64.powf(0.25) * 2f64.sqrt()).abs() < 1e-6);
    assert!(matches!(
        find_stationary_points(&p, &d, &SearchConfig::default()),
        Err(jpo_core::JpoError::BelowThreshold(_))
    ));
}

#[test]
fn deeper_well_energy_falls_with_locking_amplitude() {
    let p = unit_params();
    let mut last = f64::INFINITY;
    for amp in [0.0, 0.02, 0.05, 0.1] {
        let d = DriveConfig::unlocked(1.0).with_ils(amp, -FRAC_PI_2);
        let r = barrier_and_asymmetry(&p, &d).unwrap();
        let deep = r.wells[r.deeper_well()].energy;
        assert!(deep < last);
        last = deep;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inversion_symmetry_without_locking(
        p in params_strategy(),
        r in 1.0f64..4.0,
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 20),
    ) {
        let d = DriveConfig::unlocked(r);
        for (x, y) in pts {
            let a = potential_value(&p, &d, point(x, y)).unwrap();
            let b = potential_value(&p, &d, point(-x, -y)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn phase_shift_by_pi_mirrors_the_plane(
        p in params_strategy(),
        amp in 0.0f64..2.0,
        phase in -PI..PI,
        x in -5.0f64..5.0,
        y in -5.0f64..5.0,
    ) {
        let d = DriveConfig::unlocked(1.5).with_ils(amp, phase);
        let shifted = DriveConfig::unlocked(1.5).with_ils(amp, phase + PI);
        let a = potential_value(&p, &d, point(x, y)).unwrap();
        let b = potential_value(&p, &shifted, point(-x, -y)).unwrap();
        let scale = a.abs().max(1.0);
        prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
    }

    #[test]
    fn gradient_matches_central_differences(
        p in params_strategy(),
        r in 1.0f64..4.0,
        amp in 0.0f64..1.0,
        phase in -PI..PI,
        x in -3.0f64..3.0,
        y in -3.0f64..3.0,
    ) {
        let d = DriveConfig::unlocked(r).with_ils(amp, phase);
        let g = potential_gradient(&p, &d, point(x, y)).unwrap();
        let u = |a: f64, b: f64| potential_value(&p, &d, point(a, b)).unwrap();
        let hx = 1e-6 * x.abs().max(1.0);
        let hy = 1e-6 * y.abs().max(1.0);
        let fd = [
            (u(x + hx, y) - u(x - hx, y)) / (2.0 * hx),
            (u(x, y + hy) - u(x, y - hy)) / (2.0 * hy),
        ];
        let scale = g[0].hypot(g[1]).max(1e-3 * p.kappa_tot());
        for k in 0..2 {
            prop_assert!((g[k] - fd[k]).abs() <= 1e-6 * scale, "component {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn wells_sit_at_closed_form_radius(p in params_strategy(), r in 1.0f64..4.0) {
        let d = DriveConfig::unlocked(r);
        let pts = find_stationary_points(&p, &d, &SearchConfig::default()).unwrap();
        let q_star = (p.kappa_tot() * r.sqrt() / (24.0 * p.gamma.abs())).sqrt();
        let barrier = p.kappa_tot().powi(2) * r / (192.0 * p.gamma.abs());
        let minima: Vec<_> = pts.iter().filter(|s| s.kind == StationaryKind::Minimum).collect();
        prop_assert_eq!(minima.len(), 2);
        for m in &minima {
            prop_assert!((m.location.qx.abs() - q_star).abs() <= 1e-8 * q_star);
            prop_assert!(m.location.qy.abs() <= 1e-8 * q_star);
            prop_assert!(m.hessian_eigenvalues[0] > 0.0);
            // curvature across the well axis is kappa sqrt(r)
            let h = EffectivePotential::new(&p, &d).unwrap().hessian(m.location);
            let kyy = p.kappa_tot() * r.sqrt();
            prop_assert!((h[1][1] - kyy).abs() <= 1e-9 * kyy);
            prop_assert!(h[0][0] > 0.0);
        }
        prop_assert!((minima[0].energy - minima[1].energy).abs() <= 1e-12 * minima[0].energy.abs());
        let saddle = pts.iter().find(|s| s.kind == StationaryKind::Saddle).unwrap();
        prop_assert!(saddle.location.norm() <= 1e-12 * q_star);
        prop_assert!(saddle.hessian_eigenvalues[0] < 0.0);
        let report = barrier_from_points(&pts).unwrap();
        for b in report.barrier_from_each_well {
            prop_assert!((b - barrier).abs() <= 1e-9 * barrier);
        }
        prop_assert!(report.well_energy_splitting.abs() <= 1e-12 * barrier);
    }

    #[test]
    fn gradient_vanishes_at_located_points(
        amp in 0.0f64..0.3,
        phase in -PI..PI,
    ) {
        let p = unit_params();
        let d = DriveConfig::unlocked(1.0).with_ils(amp, phase);
        for s in find_stationary_points(&p, &d, &SearchConfig::default()).unwrap() {
            let g = potential_gradient(&p, &d, s.location).unwrap();
            prop_assert!(g[0].hypot(g[1]) < 1e-10);
            let [lo, hi] = s.hessian_eigenvalues;
            let expect = if lo > 0.0 {
                StationaryKind::Minimum
            } else if hi < 0.0 {
                StationaryKind::Maximum
            } else {
                StationaryKind::Saddle
            };
            prop_assert_eq!(s.kind, expect);
        }
    }

    #[test]
    fn splitting_is_odd_in_the_locking_phase(amp in 0.001f64..0.2, phase in 0.0f64..PI) {
        let p = unit_params();
        let plus = barrier_and_asymmetry(&p, &DriveConfig::unlocked(1.0).with_ils(amp, phase)).unwrap();
        let minus = barrier_and_asymmetry(&p, &DriveConfig::unlocked(1.0).with_ils(amp, -phase)).unwrap();
        prop_assert!(
            (plus.well_energy_splitting + minus.well_energy_splitting).abs() < 1e-9,
            "{} vs {}", plus.well_energy_splitting, minus.well_energy_splitting
        );
    }

    #[test]
    fn cross_section_agrees_with_pointwise_values(
        amp in 0.0f64..0.5,
        phase in -PI..PI,
        n in 2usize..200,
    ) {
        let p = unit_params();
        let d = DriveConfig::unlocked(1.0).with_ils(amp, phase);
        let grid = linspace(-3.0, 3.0, n);
        let curve = cross_section(&p, &d, &grid).unwrap();
        for (x, u) in curve {
            prop_assert_eq!(u, potential_value(&p, &d, point(x, 0.0)).unwrap());
        }
    }
}
