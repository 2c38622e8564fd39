//! Closed-form eigen-decomposition of real symmetric 2x2 matrices.

/// Eigen-decomposition of `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Sym2Eigen {
    pub major: f64,
    pub minor: f64,
    /// Direction of the eigenvector belonging to `major`, in (-pi/2, pi/2].
    pub major_angle: f64,
}

pub(crate) fn eig_sym2(a: f64, b: f64, c: f64) -> Sym2Eigen {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let radius = half_diff.hypot(b);
    Sym2Eigen {
        major: mean + radius,
        minor: mean - radius,
        major_angle: 0.5 * (2.0 * b).atan2(a - c),
    }
}

/// Wraps an axis angle (defined mod pi) into (-pi/2, pi/2].
pub(crate) fn wrap_axis(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(PI);
    if a > 0.5 * PI {
        a -= PI;
    }
    a
}

/// Smallest angle between two axes (each defined mod pi), in [0, pi/2].
pub(crate) fn axis_distance(a: f64, b: f64) -> f64 {
    wrap_axis(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let e = eig_sym2(3.0, 0.0, 1.0);
        assert_eq!(e.major, 3.0);
        assert_eq!(e.minor, 1.0);
        assert_eq!(e.major_angle, 0.0);
        let e = eig_sym2(1.0, 0.0, 3.0);
        assert!((e.major_angle.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn eigenvector_satisfies_equation() {
        let (a, b, c) = (2.0, -0.7, 0.5);
        let e = eig_sym2(a, b, c);
        let (s, co) = e.major_angle.sin_cos();
        let ax = a * co + b * s;
        let ay = b * co + c * s;
        assert!((ax - e.major * co).abs() < 1e-14);
        assert!((ay - e.major * s).abs() < 1e-14);
    }

    #[test]
    fn axis_wrapping() {
        use std::f64::consts::PI;
        assert!((wrap_axis(PI) - 0.0).abs() < 1e-15);
        assert!((axis_distance(0.1, PI + 0.1)).abs() < 1e-12);
        assert!((axis_distance(0.0, 0.5 * PI) - 0.5 * PI).abs() < 1e-15);
    }
}
