//! Periodic orbits, periodic circles, density of periodic points, invariant
//! manifolds and preimage trees.

mod manifold;
mod periodic;
mod preimage;

pub use manifold::{unstable_manifold, ManifoldOptions, ManifoldPolyline};
pub use periodic::{find_periodic, MAX_PERIOD};
pub use preimage::{
    preimages, snapback_search, stable_set_sample, PreimageTree, SnapbackCertificate,
};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Mat2};
use crate::map::TorusMap;
use crate::torus::{torus_distance, wrap_signed, TorusPoint};

/// Multipliers within this distance of the unit circle are non-hyperbolic.
pub const HYPERBOLICITY_MARGIN: f64 = 1e-6;

/// Residual accepted by [`classify`] for a point list to count as an orbit.
pub const PERIODIC_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityClass {
    Saddle,
    Repeller,
    Attractor,
    Nonhyperbolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<TorusPoint>,
    pub period: usize,
    /// `F^period(lift) - lift` for the canonical lift of `points[0]`.
    pub lattice_shift: [i64; 2],
    /// Eigenvalues of `DF^period`, decreasing modulus.
    pub multipliers: [Complex64; 2],
    pub class: StabilityClass,
    pub residual: f64,
}

impl PeriodicOrbit {
    /// Unstable eigen-direction of `DF^period` at `points[0]` (unit, real spectrum only).
    pub fn unstable_direction(&self, map: &TorusMap) -> Option<nalgebra::Vector2<f64>> {
        let j = orbit_jacobian(map, &self.points);
        let ev = eigenvalues(&j);
        if ev[0].im != 0.0 || ev[0].norm() <= 1.0 {
            return None;
        }
        Some(crate::linalg::real_eigenvector(&j, ev[0].re))
    }
}

/// Ordered product `DF(p_{n-1}) ... DF(p_0)`.
pub fn orbit_jacobian(map: &TorusMap, points: &[TorusPoint]) -> Mat2 {
    points
        .iter()
        .fold(Mat2::identity(), |acc, p| map.jacobian(p) * acc)
}

/// Max torus distance between `F(p_i)` and `p_{i+1}` (cyclically).
pub fn orbit_residual(map: &TorusMap, points: &[TorusPoint]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| torus_distance(&map.eval(&points[i]), &points[(i + 1) % n]))
        .fold(0.0, f64::max)
}

pub fn class_of(multipliers: &[Complex64; 2]) -> StabilityClass {
    let a = multipliers[0].norm();
    let b = multipliers[1].norm();
    if (a - 1.0).abs() <= HYPERBOLICITY_MARGIN || (b - 1.0).abs() <= HYPERBOLICITY_MARGIN {
        StabilityClass::Nonhyperbolic
    } else if b > 1.0 {
        StabilityClass::Repeller
    } else if a > 1.0 {
        StabilityClass::Saddle
    } else {
        StabilityClass::Attractor
    }
}

pub fn classify(map: &TorusMap, points: &[TorusPoint]) -> Result<(StabilityClass, [Complex64; 2])> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let residual = orbit_residual(map, points);
    if !(residual < PERIODIC_TOL) {
        return Err(Error::NotPeriodic { residual });
    }
    let mult = eigenvalues(&orbit_jacobian(map, points));
    Ok((class_of(&mult), mult))
}

/// Base points `k / (m^n - 1) mod 1` of the vertical circles invariant under
/// the `n`-th iterate, sorted ascending.
pub fn periodic_circle_bases(m: i64, n: usize) -> Result<Vec<f64>> {
    if m.abs() <= 1 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "need |m| > 1 and n >= 1, got m = {m}, n = {n}"
        )));
    }
    let c = (m as i128)
        .checked_pow(n as u32)
        .map(|p| (p - 1).abs())
        .filter(|&c| c <= 1 << 26)
        .ok_or_else(|| Error::InvalidParameter(format!("|m^n - 1| too large for m = {m}, n = {n}")))?;
    Ok((0..c).map(|k| k as f64 / c as f64).collect())
}

/// Largest distance from a point of the `grid_n x grid_n` grid to the set.
pub fn covering_radius(points: &[TorusPoint], grid_n: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if grid_n == 0 {
        return Err(Error::InvalidParameter("grid_n must be >= 1".into()));
    }
    let index = BucketIndex::new(points);
    let h = 1.0 / grid_n as f64;
    Ok((0..grid_n)
        .into_par_iter()
        .map(|i| {
            (0..grid_n)
                .map(|j| index.nearest(&TorusPoint::new(i as f64 * h, j as f64 * h)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// Uniform buckets on the torus for nearest-neighbour queries.
pub(crate) struct BucketIndex<'a> {
    b: usize,
    cells: Vec<Vec<u32>>,
    points: &'a [TorusPoint],
}

impl<'a> BucketIndex<'a> {
    pub(crate) fn new(points: &'a [TorusPoint]) -> Self {
        let b = ((points.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 512);
        let mut cells = vec![Vec::new(); b * b];
        for (i, p) in points.iter().enumerate() {
            cells[Self::cell(b, p)].push(i as u32);
        }
        Self { b, cells, points }
    }

    fn coord(b: usize, c: f64) -> usize {
        ((c * b as f64) as usize).min(b - 1)
    }

    fn cell(b: usize, p: &TorusPoint) -> usize {
        Self::coord(b, p.x()) * b + Self::coord(b, p.y())
    }

    pub(crate) fn nearest(&self, q: &TorusPoint) -> f64 {
        let b = self.b as i64;
        let cx = Self::coord(self.b, q.x()) as i64;
        let cy = Self::coord(self.b, q.y()) as i64;
        let mut best = f64::INFINITY;
        let scan = |ix: i64, iy: i64, best: &mut f64| {
            let idx = (ix.rem_euclid(b) * b + iy.rem_euclid(b)) as usize;
            for &k in &self.cells[idx] {
                *best = best.min(torus_distance(q, &self.points[k as usize]));
            }
        };
        let mut r = 0i64;
        loop {
            if 2 * r + 1 >= b {
                // The ring wraps onto itself: finish with a full scan.
                for ix in 0..b {
                    for iy in 0..b {
                        scan(ix, iy, &mut best);
                    }
                }
                return best;
            }
            for dx in -r..=r {
                for dy in -r..=r {
                    if dx.abs().max(dy.abs()) == r {
                        scan(cx + dx, cy + dy, &mut best);
                    }
                }
            }
            // Every cell at ring r + 1 or beyond is at least r / b away.
            if best <= r as f64 / b as f64 {
                return best;
            }
            r += 1;
        }
    }
}

/// Signed displacement used to compare nearby torus points as lifts.
pub(crate) fn delta(a: &TorusPoint, b: &TorusPoint) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(wrap_signed(b.x() - a.x()), wrap_signed(b.y() - a.y()))
}
