//! Small 2x2 helpers: spectra, eigenvectors and the Gram-Schmidt step used
//! for Lyapunov exponents.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Eigenvalues sorted by decreasing modulus (ties: larger real part first).
pub fn eigenvalues(a: &Mat2) -> [Complex64; 2] {
    let tr = a.trace();
    let det = a.determinant();
    let disc = tr * tr / 4.0 - det;
    let (l1, l2) = if disc >= 0.0 {
        let s = disc.sqrt();
        // Avoid cancellation: compute the larger root first, the other from det.
        let big = if tr >= 0.0 { tr / 2.0 + s } else { tr / 2.0 - s };
        let small = if big != 0.0 { det / big } else { tr / 2.0 - s };
        (Complex64::new(big, 0.0), Complex64::new(small, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(tr / 2.0, s), Complex64::new(tr / 2.0, -s))
    };
    let mut out = [l1, l2];
    out.sort_by(|p, q| {
        q.norm()
            .partial_cmp(&p.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(q.re.partial_cmp(&p.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    out
}

/// Unit eigenvector for a real eigenvalue `lambda` of `a`.
pub fn real_eigenvector(a: &Mat2, lambda: f64) -> Vec2 {
    let c1 = Vec2::new(a[(0, 1)], lambda - a[(0, 0)]);
    let c2 = Vec2::new(lambda - a[(1, 1)], a[(1, 0)]);
    let v = if c1.norm() >= c2.norm() { c1 } else { c2 };
    if v.norm() == 0.0 {
        // a = lambda * I: every direction is an eigenvector.
        Vec2::new(1.0, 0.0)
    } else {
        v.normalize()
    }
}

/// Counter-clockwise rotation by a quarter turn.
#[inline]
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Orthonormal frame whose first column is the dominant real eigenvector of
/// `a` (the real Schur basis). Falls back to the identity when the spectrum is
/// complex.
pub fn schur_frame(a: &Mat2) -> Mat2 {
    let ev = eigenvalues(a);
    if ev[0].im != 0.0 {
        return Mat2::identity();
    }
    let q1 = real_eigenvector(a, ev[0].re);
    let q2 = perp(&q1);
    Mat2::from_columns(&[q1, q2])
}

/// One step of QR re-orthonormalisation: given the current frame `q` and a
/// Jacobian `jac`, returns the next frame and `log |r_ii|`.
///
/// The second column is always the quarter-turn of the first, so the frame
/// stays a rotation and `log|r11| + log|r22| = log|det jac|` exactly up to
/// rounding.
pub fn qr_step(jac: &Mat2, q: &Mat2) -> (Mat2, [f64; 2]) {
    let a = jac * q;
    let c1: Vec2 = a.column(0).into();
    let c2: Vec2 = a.column(1).into();
    let r11 = c1.norm();
    let q1 = c1 / r11;
    let q2 = perp(&q1);
    let r22 = q2.dot(&c2);
    (Mat2::from_columns(&[q1, q2]), [r11.ln(), r22.abs().ln()])
}

pub fn solve(a: &Mat2, b: &Vec2) -> Option<Vec2> {
    let det = a.determinant();
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(Vec2::new(
        (a[(1, 1)] * b.x - a[(0, 1)] * b.y) / det,
        (a[(0, 0)] * b.y - a[(1, 0)] * b.x) / det,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_spectrum() {
        let a = Mat2::new(3.0, 0.0, 1.0, 1.0);
        let ev = eigenvalues(&a);
        assert_eq!(ev[0], Complex64::new(3.0, 0.0));
        assert!((ev[1].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_has_complex_pair() {
        let a = Mat2::new(0.0, -2.0, 2.0, 0.0);
        let ev = eigenvalues(&a);
        assert!((ev[0].norm() - 2.0).abs() < 1e-15);
        assert_eq!(ev[0].im, 2.0);
        assert_eq!(schur_frame(&a), Mat2::identity());
    }

    #[test]
    fn schur_frame_tracks_dominant_direction() {
        let a = Mat2::new(3.0, 0.0, 1.0, 1.0);
        let q = schur_frame(&a);
        let (q_next, logs) = qr_step(&a, &q);
        assert!((q_next - q).norm() < 1e-15);
        assert!((logs[0] - 3f64.ln()).abs() < 1e-15);
        assert!(logs[1].abs() < 1e-15);
    }

    #[test]
    fn qr_step_preserves_determinant() {
        let a = Mat2::new(1.3, -0.4, 2.2, 0.7);
        let (_, logs) = qr_step(&a, &Mat2::identity());
        assert!((logs[0] + logs[1] - a.determinant().abs().ln()).abs() < 1e-14);
    }

    #[test]
    fn solve_matches_inverse() {
        let a = Mat2::new(2.0, 1.0, -1.0, 3.0);
        let b = Vec2::new(0.5, -2.0);
        let x = solve(&a, &b).unwrap();
        assert!((a * x - b).norm() < 1e-15);
        assert!(solve(&Mat2::zeros(), &b).is_none());
    }
}
