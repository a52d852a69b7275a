//! Preimage trees and snap-back (transverse homoclinic) points of repellers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, Vec2};
use crate::map::TorusMap;
use crate::torus::{torus_distance, TorusPoint};

use super::{delta, PeriodicOrbit, StabilityClass};

const NEWTON_ITERS: usize = 50;
const ACCEPT: f64 = 1e-12;
const SAME_POINT: f64 = 1e-9;

/// Newton on the torus residual `F(z) - w` (reduced to `[-1/2, 1/2]^2`).
fn solve_preimage(map: &TorusMap, w: &TorusPoint, seed: Vec2) -> Option<TorusPoint> {
    let mut z = seed;
    let mut best = f64::INFINITY;
    for _ in 0..NEWTON_ITERS {
        let p = TorusPoint::from_lift(&z);
        let r = delta(w, &map.eval(&p));
        best = r.amax();
        if best < 1e-15 {
            break;
        }
        let step = solve(&map.jacobian_at(&z), &r)?;
        z -= step;
        if !z.iter().all(|c| c.is_finite()) {
            return None;
        }
        if step.amax() < 1e-17 {
            break;
        }
    }
    let p = TorusPoint::from_lift(&z);
    let r = torus_distance(&map.eval(&p), w);
    (r < ACCEPT || best < ACCEPT).then_some(p)
}

fn push_unique(out: &mut Vec<TorusPoint>, p: TorusPoint) {
    if out.iter().all(|q| torus_distance(q, &p) > SAME_POINT) {
        out.push(p);
    }
}

/// Preimages of `w` under `F`, sorted lexicographically.
///
/// Seeds are the preimages under the linear part, `M^-1 (w + mu)` for integer
/// `mu`; when fewer than `|det M|` solutions turn up, a grid of up to
/// `per_level` further seeds is tried.
pub fn preimages(map: &TorusMap, w: &TorusPoint, per_level: usize) -> Vec<TorusPoint> {
    let mat = map.matrix();
    let d = mat.det().unsigned_abs() as usize;
    let minv = mat.to_f64().try_inverse().expect("nonsingular");
    let mut seeds: Vec<TorusPoint> = Vec::with_capacity(d);
    for a in 0..d {
        for b in 0..d {
            let s = minv * (w.lift() + Vec2::new(a as f64, b as f64));
            push_unique(&mut seeds, TorusPoint::from_lift(&s));
        }
    }
    let mut out = Vec::with_capacity(d);
    for s in &seeds {
        if let Some(p) = solve_preimage(map, w, s.lift()) {
            push_unique(&mut out, p);
        }
    }
    if out.len() < d && per_level > seeds.len() {
        let g = ((per_level as f64).sqrt().ceil() as usize).max(2);
        'grid: for i in 0..g {
            for j in 0..g {
                let s = Vec2::new((i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64);
                if let Some(p) = solve_preimage(map, w, s) {
                    push_unique(&mut out, p);
                }
                if out.len() >= d {
                    break 'grid;
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (a.x(), a.y())
            .partial_cmp(&(b.x(), b.y()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

/// Breadth-first preimages: `levels[d]` holds the solutions of `F^d(z) = target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreimageTree {
    pub target: TorusPoint,
    pub levels: Vec<Vec<TorusPoint>>,
}

impl PreimageTree {
    /// All points of levels `1..`, level by level.
    pub fn all_points(&self) -> Vec<TorusPoint> {
        self.levels.iter().skip(1).flatten().copied().collect()
    }
}

fn next_level(map: &TorusMap, level: &[TorusPoint], per_level: usize) -> Vec<TorusPoint> {
    level
        .par_iter()
        .map(|w| preimages(map, w, per_level))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn stable_set_sample(
    map: &TorusMap,
    target: &PeriodicOrbit,
    depth: usize,
    per_level: usize,
) -> Result<PreimageTree> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be >= 1".into()));
    }
    let root = target.points[0];
    let mut levels = vec![vec![root]];
    for _ in 0..depth {
        let next = next_level(map, levels.last().expect("nonempty"), per_level);
        levels.push(next);
    }
    Ok(PreimageTree {
        target: root,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapbackCertificate {
    pub repeller: PeriodicOrbit,
    pub q: TorusPoint,
    pub n: usize,
    /// `det DF^n(q)`.
    pub jac_det: f64,
    pub dist_to_r: f64,
    /// Torus distance between `F^n(q)` and the repeller point.
    pub residual: f64,
}

/// Newton on `F^n(z) = target`, starting from an accurate preimage.
fn polish(map: &TorusMap, q: TorusPoint, n: usize, target: &TorusPoint) -> TorusPoint {
    let mut z = q.lift();
    for _ in 0..5 {
        let mut w = z;
        let mut jac = crate::linalg::Mat2::identity();
        for _ in 0..n {
            jac = map.jacobian_at(&w) * jac;
            w = map.lift_eval(&w);
        }
        let r = delta(target, &TorusPoint::from_lift(&w));
        if r.amax() < 1e-15 {
            break;
        }
        match solve(&jac, &r) {
            Some(s) => z -= s,
            None => break,
        }
    }
    TorusPoint::from_lift(&z)
}

/// Searches preimage levels `1..=depth` of the repeller point for a point
/// inside the `neighborhood_r` ball (other than the orbit itself) whose
/// forward orbit lands on the repeller with nonsingular `DF^n`.
pub fn snapback_search(
    map: &TorusMap,
    repeller: &PeriodicOrbit,
    neighborhood_r: f64,
    depth: usize,
) -> Result<Option<SnapbackCertificate>> {
    if repeller.class != StabilityClass::Repeller {
        return Err(Error::NotRepeller);
    }
    if !(neighborhood_r > 0.0) {
        return Err(Error::InvalidParameter("neighborhood_r must be > 0".into()));
    }
    let r = repeller.points[0];
    let per_level = 4 * map.matrix().det().unsigned_abs() as usize;
    let mut level = vec![r];
    for n in 1..=depth {
        level = next_level(map, &level, per_level);
        let mut cands: Vec<(f64, TorusPoint)> = level
            .iter()
            .filter(|q| repeller.points.iter().all(|o| torus_distance(o, q) > SAME_POINT))
            .map(|q| (torus_distance(q, &r), *q))
            .filter(|(d, _)| *d < neighborhood_r)
            .collect();
        cands.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((a.1.x(), a.1.y()).partial_cmp(&(b.1.x(), b.1.y())).unwrap_or(std::cmp::Ordering::Equal))
        });
        for (_, q) in cands {
            let q = polish(map, q, n, &r);
            let orbit = map.orbit(&q, n);
            let residual = torus_distance(&orbit[n], &r);
            let jac_det: f64 = orbit[..n]
                .iter()
                .map(|p| map.jacobian(p).determinant())
                .product();
            let dist = torus_distance(&q, &r);
            if residual < 1e-9 && jac_det.abs() > 1e-8 && dist > 0.0 && dist < neighborhood_r {
                return Ok(Some(SnapbackCertificate {
                    repeller: repeller.clone(),
                    q,
                    n,
                    jac_det,
                    dist_to_r: dist,
                    residual,
                }));
            }
        }
    }
    Ok(None)
}
