//! Newton search for periodic orbits of a given minimal period.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Mat2, Vec2};
use crate::map::{split, TorusMap};
use crate::spectral::{dot, eigen_data, to_f, SpectralData};
use crate::torus::{torus_distance, TorusPoint};

use super::{class_of, orbit_jacobian, orbit_residual, PeriodicOrbit};

/// Largest supported period (keeps `M^p` in exact integer range).
pub const MAX_PERIOD: usize = 30;

const NEWTON_ITERS: usize = 60;
const ACCEPT_RESIDUAL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-7;

/// Lift displacement `F^p(q) - q - nu`, split into a fractional part and an
/// exact integer part so that large lattice shifts lose no precision.
struct Displacement {
    residual: Vec2,
    jac: Mat2,
    points: Vec<Vec2>,
}

fn displacement(map: &TorusMap, q: &Vec2, period: usize, nu: [i64; 2]) -> Displacement {
    let (fx, ix) = split(q.x);
    let (fy, iy) = split(q.y);
    let q0 = Vec2::new(fx, fy);
    let mut w = q0;
    let mut acc = [0i128; 2];
    let mut qi = [ix as i128, iy as i128];
    let e = map.matrix().entries();
    let apply = |v: [i128; 2]| {
        [
            e[0][0] as i128 * v[0] + e[0][1] as i128 * v[1],
            e[1][0] as i128 * v[0] + e[1][1] as i128 * v[1],
        ]
    };
    let mut jac = Mat2::identity();
    let mut points = Vec::with_capacity(period);
    for _ in 0..period {
        points.push(w);
        jac = map.jacobian_at(&w) * jac;
        let (next, n) = map.step_reduced(&w);
        acc = apply(acc);
        acc[0] += n[0] as i128;
        acc[1] += n[1] as i128;
        qi = apply(qi);
        w = next;
    }
    // F^p(q) - q = (w - q0) + acc + M^p qi - qi.
    let int = [
        acc[0] + qi[0] - ix as i128 - nu[0] as i128,
        acc[1] + qi[1] - iy as i128 - nu[1] as i128,
    ];
    Displacement {
        residual: (w - q0) + Vec2::new(int[0] as f64, int[1] as f64),
        jac,
        points,
    }
}

fn newton_step(jac: &Mat2, r: &Vec2) -> Option<Vec2> {
    let a = jac - Mat2::identity();
    let scale = a.abs().max().max(1.0);
    if a.determinant().abs() > 1e-12 * scale * scale {
        crate::linalg::solve(&a, r)
    } else {
        a.pseudo_inverse(1e-12 * scale).ok().map(|p| p * r)
    }
}

/// Newton on `F^p(q) - q - nu` from `q`. Returns reduced orbit points.
fn newton(map: &TorusMap, seed: Vec2, period: usize, nu: [i64; 2]) -> Option<Vec<Vec2>> {
    let mut q = seed;
    for _ in 0..NEWTON_ITERS {
        let d = displacement(map, &q, period, nu);
        if !d.residual.iter().all(|c| c.is_finite()) {
            return None;
        }
        if d.residual.amax() < 1e-14 {
            return Some(d.points);
        }
        let step = newton_step(&d.jac, &d.residual)?;
        q -= step;
        if !q.iter().all(|c| c.is_finite()) || q.amax() > 1e6 {
            return None;
        }
        if step.amax() < 1e-16 {
            break;
        }
    }
    let d = displacement(map, &q, period, nu);
    (d.residual.amax() < 1e-11).then_some(d.points)
}

/// Candidate `(seed, nu)` pairs from the eigen-projections of the displacement.
///
/// With `u` the left 1-eigenvector and `v` the left m-eigenvector:
/// `u . nu = sum u . G` and `v . nu = (m^p - 1) v . q + sum m^(p-1-j) v . G`,
/// which confines `nu` to a thin strip instead of the full box.
fn spectral_jobs(map: &TorusMap, s: &SpectralData, period: usize, seed_grid: usize) -> Vec<(Vec2, [i64; 2])> {
    let g = map.perturbation();
    let vl = s.v_m_left;
    let ul = s.v_1_left;
    let mabs = s.m.abs() as f64;
    let c = (s.m as i128).pow(period as u32) - 1;
    let b1 = period as f64 * g.sup_dot_bound([ul[0] as f64, ul[1] as f64]);
    let geometric = (mabs.powi(period as i32) - 1.0) / (mabs - 1.0);
    let bm = g.sup_dot_bound([vl[0] as f64, vl[1] as f64]) * geometric;
    let lo_v = vl[0].min(0) + vl[1].min(0);
    let hi_v = vl[0].max(0) + vl[1].max(0);
    let (ca, cb) = (c * lo_v as i128, c * hi_v as i128);
    let a_lo = (ca.min(cb) as f64 - bm).floor() as i128 - 1;
    let a_hi = (ca.max(cb) as f64 + bm).ceil() as i128 + 1;
    let b_hi = b1.floor() as i128;
    let det = (vl[0] * ul[1] - vl[1] * ul[0]) as i128;
    let box_bound = (map.matrix().norm_inf() as f64).powi(period as i32).ceil() as i128 + 1;
    let r_m = to_f(s.v_m_right);
    let r_1 = to_f(s.v_1_right);
    let vr = dot(vl, s.v_m_right) as f64;
    let mut jobs = Vec::new();
    for a in a_lo..=a_hi {
        for b in -b_hi..=b_hi {
            // nu = [vl; ul]^-1 (a, b)
            let n0 = ul[1] as i128 * a - vl[1] as i128 * b;
            let n1 = -(ul[0] as i128) * a + vl[0] as i128 * b;
            if n0 % det != 0 || n1 % det != 0 {
                continue;
            }
            let nu = [n0 / det, n1 / det];
            if nu[0].abs() > box_bound || nu[1].abs() > box_bound {
                continue;
            }
            let base = r_m * (a as f64 / c as f64 / vr);
            for i in 0..seed_grid {
                let q = base + r_1 * (i as f64 / seed_grid as f64);
                jobs.push((q, [nu[0] as i64, nu[1] as i64]));
            }
        }
    }
    jobs
}

/// Plain grid seeding for matrices without the eigenvalue structure.
fn grid_jobs(map: &TorusMap, period: usize, seed_grid: usize) -> Vec<(Vec2, [i64; 2])> {
    let h = 1.0 / seed_grid as f64;
    let mut jobs = Vec::new();
    for i in 0..seed_grid {
        for j in 0..seed_grid {
            let q = Vec2::new(i as f64 * h, j as f64 * h);
            let mut z = q;
            for _ in 0..period {
                z = map.lift_eval(&z);
            }
            let d = z - q;
            jobs.push((q, [d.x.round() as i64, d.y.round() as i64]));
        }
    }
    jobs
}

fn lex_less(a: &TorusPoint, b: &TorusPoint) -> bool {
    (a.x(), a.y()) < (b.x(), b.y())
}

fn build_orbit(map: &TorusMap, pts: Vec<Vec2>, period: usize) -> Option<PeriodicOrbit> {
    let mut points: Vec<TorusPoint> = pts.iter().map(TorusPoint::from_lift).collect();
    // Minimal period only.
    for d in 1..period {
        if period % d == 0 && torus_distance(&points[d], &points[0]) < 1e-8 {
            return None;
        }
    }
    let start = (0..period)
        .min_by(|&i, &j| {
            if lex_less(&points[i], &points[j]) {
                std::cmp::Ordering::Less
            } else if lex_less(&points[j], &points[i]) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        })
        .unwrap_or(0);
    points.rotate_left(start);
    let residual = orbit_residual(map, &points);
    if !(residual < ACCEPT_RESIDUAL) {
        return None;
    }
    let mut w = points[0].lift();
    let mut shift = [0i64; 2];
    for _ in 0..period {
        let (next, n) = map.step_reduced(&w);
        shift = map.matrix().apply(shift);
        shift[0] += n[0];
        shift[1] += n[1];
        w = next;
    }
    // The reduced image may sit across the unit-square edge from points[0].
    let back = super::delta(&points[0], &TorusPoint::from_lift(&w));
    shift[0] += (w.x - points[0].x() - back.x).round() as i64;
    shift[1] += (w.y - points[0].y() - back.y).round() as i64;
    let multipliers = eigenvalues(&orbit_jacobian(map, &points));
    Some(PeriodicOrbit {
        points,
        period,
        lattice_shift: shift,
        multipliers,
        class: class_of(&multipliers),
        residual,
    })
}

/// All periodic orbits of minimal period `period` reachable by Newton from
/// the seed family, deduplicated and sorted by their first point.
pub fn find_periodic(map: &TorusMap, period: usize, seed_grid: usize) -> Result<Vec<PeriodicOrbit>> {
    if period == 0 || period > MAX_PERIOD {
        return Err(Error::InvalidParameter(format!(
            "period must be in 1..={MAX_PERIOD}, got {period}"
        )));
    }
    if seed_grid < 2 {
        return Err(Error::InvalidParameter("seed_grid must be >= 2".into()));
    }
    let jobs = match eigen_data(map.matrix()) {
        Ok(s) => spectral_jobs(map, &s, period, seed_grid),
        Err(_) => grid_jobs(map, period, seed_grid),
    };
    let found: Vec<Option<PeriodicOrbit>> = jobs
        .par_iter()
        .map(|(q, nu)| newton(map, *q, period, *nu).and_then(|p| build_orbit(map, p, period)))
        .collect();
    let cell = 1e-4;
    let ncell = (1.0 / cell) as i64;
    let key = |p: &TorusPoint| ((p.x() / cell) as i64, (p.y() / cell) as i64);
    let mut index: HashMap<(i64, i64), Vec<TorusPoint>> = HashMap::new();
    let mut orbits = Vec::new();
    for orbit in found.into_iter().flatten() {
        let p0 = orbit.points[0];
        let (kx, ky) = key(&p0);
        let dup = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                index
                    .get(&((kx + dx).rem_euclid(ncell), (ky + dy).rem_euclid(ncell)))
                    .is_some_and(|v| v.iter().any(|q| torus_distance(q, &p0) < DEDUP_TOL))
            })
        });
        if dup {
            continue;
        }
        for p in &orbit.points {
            let (x, y) = key(p);
            index.entry((x.rem_euclid(ncell), y.rem_euclid(ncell))).or_default().push(*p);
        }
        orbits.push(orbit);
    }
    orbits.sort_by(|a, b| {
        (a.points[0].x(), a.points[0].y())
            .partial_cmp(&(b.points[0].x(), b.points[0].y()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(orbits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::StabilityClass;

    #[test]
    fn reference_fixed_points() {
        let orbits = find_periodic(&TorusMap::reference(0.0, 0.05), 1, 16).unwrap();
        assert_eq!(orbits.len(), 2);
        assert_eq!(orbits[0].class, StabilityClass::Repeller);
        assert!(orbits[0].points[0].distance(&TorusPoint::new(0.0, 0.0)) < 1e-12);
        assert_eq!(orbits[1].class, StabilityClass::Saddle);
        assert!(orbits[1].points[0].distance(&TorusPoint::new(0.0, 0.5)) < 1e-12);
    }

    #[test]
    fn displacement_handles_large_lifts() {
        let f = TorusMap::reference(0.0, 0.05);
        let d = displacement(&f, &Vec2::new(5.0, -3.0), 1, [10, 5]);
        // F^(5, -3) - (5, -3) = (15, 2) - (5, -3).
        assert!(d.residual.amax() < 1e-14);
    }
}
