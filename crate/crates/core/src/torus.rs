//! Points on the 2-torus and their lifts to the plane.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// A point of the plane covering the torus. No reduction is applied.
pub type LiftPoint = Vector2<f64>;

/// Reduces a real number to `[0, 1)`.
///
/// Floor based, so `1.0` and `-0.0` both map to `0.0`; values a hair below an
/// integer whose remainder rounds up to `1.0` are sent to `0.0` as well.
#[inline]
pub fn wrap(c: f64) -> f64 {
    let r = c - c.floor();
    if r >= 1.0 {
        0.0
    } else {
        r + 0.0
    }
}

/// Signed representative of `c mod 1` in `[-0.5, 0.5]`.
#[inline]
pub fn wrap_signed(c: f64) -> f64 {
    c - c.round()
}

/// Distance on the circle `R/Z`.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    wrap_signed(a - b).abs()
}

/// A point of the torus `T^2 = R^2 / Z^2` with both coordinates in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

impl TorusPoint {
    /// Builds a point, reducing both coordinates mod 1.
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap(x),
            y: wrap(y),
        }
    }

    pub fn from_lift(q: &LiftPoint) -> Self {
        Self::new(q.x, q.y)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    /// The canonical lift, i.e. the representative in `[0, 1)^2`.
    #[inline]
    pub fn lift(&self) -> LiftPoint {
        Vector2::new(self.x, self.y)
    }

    /// Euclidean distance with wraparound: the minimum over integer shifts,
    /// hence never larger than `sqrt(2)/2`.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        torus_distance(self, other)
    }
}

pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> f64 {
    let dx = wrap_signed(a.x - b.x);
    let dy = wrap_signed(a.y - b.y);
    dx.hypot(dy)
}

/// Signed displacement `b - a` reduced to `[-0.5, 0.5]^2`.
pub fn torus_delta(a: &TorusPoint, b: &TorusPoint) -> Vector2<f64> {
    Vector2::new(wrap_signed(b.x - a.x), wrap_signed(b.y - a.y))
}

/// `n x n` grid of base points `(i/n, j/n)`, row-major in `i`.
pub fn uniform_grid(n: usize) -> Vec<TorusPoint> {
    let h = 1.0 / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| TorusPoint::new(i as f64 * h, j as f64 * h)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap(1.0), 0.0);
        assert_eq!(wrap(-0.0), 0.0);
        assert_eq!(wrap(-1e-18), 0.0);
        assert_eq!(wrap(2.25), 0.25);
        assert_eq!(wrap(-0.25), 0.75);
    }

    #[test]
    fn distance_wraps_around() {
        let a = TorusPoint::new(0.05, 0.95);
        let b = TorusPoint::new(0.95, 0.05);
        assert!((a.distance(&b) - 0.1f64.hypot(0.1)).abs() < 1e-15);
        let far = TorusPoint::new(0.5, 0.5).distance(&TorusPoint::new(0.0, 0.0));
        assert!((far - 0.5f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn coordinates_stay_in_unit_interval(x in -1e6f64..1e6, y in -1e6f64..1e6) {
            let p = TorusPoint::new(x, y);
            prop_assert!((0.0..1.0).contains(&p.x()));
            prop_assert!((0.0..1.0).contains(&p.y()));
        }

        #[test]
        fn distance_bounded_and_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
            let p = TorusPoint::new(a, b);
            let q = TorusPoint::new(c, d);
            prop_assert!(p.distance(&q) <= 0.5f64.sqrt() + 1e-15);
            prop_assert_eq!(p.distance(&q), q.distance(&p));
        }
    }
}
