//! One-dimensional unstable manifolds of saddles, grown by iterating a
//! fundamental segment with adaptive refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::map::TorusMap;
use crate::torus::{LiftPoint, TorusPoint};

use super::{PeriodicOrbit, StabilityClass};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldOptions {
    /// Distance of the first point from the saddle, along the unstable eigenvector.
    pub seed_eps: f64,
    /// Maximum distance between consecutive points.
    pub chord_tol: f64,
    /// Which branch: `+1` or `-1` along the unstable eigenvector.
    pub side: i8,
    pub max_points: usize,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            seed_eps: 1e-6,
            chord_tol: 1e-3,
            side: 1,
            max_points: 5_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldPolyline {
    pub base: TorusPoint,
    pub period: usize,
    pub side: i8,
    pub unstable_direction: [f64; 2],
    pub points: Vec<TorusPoint>,
    /// The same points on one continuous lift.
    pub lifts: Vec<LiftPoint>,
    pub arclength: f64,
    /// Length of each fundamental-segment image, in order.
    pub generation_lengths: Vec<f64>,
}

struct Return<'a> {
    map: &'a TorusMap,
    period: usize,
    shift: Vec2,
}

impl Return<'_> {
    fn apply(&self, q: &Vec2) -> Vec2 {
        let mut z = *q;
        for _ in 0..self.period {
            z = self.map.lift_eval(&z);
        }
        z - self.shift
    }
}

/// Maps the chain `gen` forward, inserting midpoints (in the preimage) where
/// images separate beyond `chord_tol` or bend away from the chord.
fn next_generation(ret: &Return, gen: &[Vec2], chord_tol: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(gen.len() * 3);
    let mut prev_img = ret.apply(&gen[0]);
    out.push(prev_img);
    for w in gen.windows(2) {
        let b_img = ret.apply(&w[1]);
        let mut stack = vec![(w[0], w[1], prev_img, b_img, 0u32)];
        while let Some((a, b, ia, ib, depth)) = stack.pop() {
            let m = 0.5 * (a + b);
            let im = ret.apply(&m);
            let bend = (im - 0.5 * (ia + ib)).norm();
            if depth < 40 && ((ib - ia).norm() > chord_tol || bend > 0.1 * chord_tol) {
                // Push the second half first so the first half is emitted first.
                stack.push((m, b, im, ib, depth + 1));
                stack.push((a, m, ia, im, depth + 1));
            } else {
                out.push(ib);
            }
        }
        prev_img = b_img;
    }
    out
}

fn chain_length(c: &[Vec2]) -> f64 {
    c.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

pub fn unstable_manifold(
    map: &TorusMap,
    saddle: &PeriodicOrbit,
    target_arclength: f64,
    opts: &ManifoldOptions,
) -> Result<ManifoldPolyline> {
    if saddle.class != StabilityClass::Saddle {
        return Err(Error::NotSaddle);
    }
    if !(target_arclength > 0.0) || !(opts.seed_eps > 0.0) || !(opts.chord_tol > 0.0) {
        return Err(Error::InvalidParameter(
            "target_arclength, seed_eps and chord_tol must be > 0".into(),
        ));
    }
    let u = saddle.unstable_direction(map).ok_or(Error::NotSaddle)?;
    let u = if opts.side < 0 { -u } else { u };
    let base = saddle.points[0].lift();
    let ret = Return {
        map,
        period: saddle.period,
        shift: Vec2::new(saddle.lattice_shift[0] as f64, saddle.lattice_shift[1] as f64),
    };
    let s0 = base + u * opts.seed_eps;
    let mut gen = vec![s0, ret.apply(&s0)];
    let mut lifts = gen.clone();
    let mut generation_lengths = vec![chain_length(&gen)];
    let mut arclength = generation_lengths[0];
    while arclength < target_arclength {
        let next = next_generation(&ret, &gen, opts.chord_tol);
        let len = chain_length(&next);
        if !(len.is_finite()) || lifts.len() + next.len() > opts.max_points {
            return Err(Error::NoConvergence(format!(
                "manifold growth stopped at arclength {arclength} ({} points)",
                lifts.len()
            )));
        }
        generation_lengths.push(len);
        // next[0] coincides with the last point already stored.
        for w in next.windows(2) {
            lifts.push(w[1]);
            arclength += (w[1] - w[0]).norm();
            if arclength >= target_arclength {
                break;
            }
        }
        gen = next;
    }
    Ok(ManifoldPolyline {
        base: saddle.points[0],
        period: saddle.period,
        side: if opts.side < 0 { -1 } else { 1 },
        unstable_direction: [u.x, u.y],
        points: lifts.iter().map(TorusPoint::from_lift).collect(),
        lifts,
        arclength,
        generation_lengths,
    })
}
