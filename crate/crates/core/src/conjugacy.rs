//! The semi-conjugacy `Phi` onto `x -> m x mod 1`, its fibers and the
//! conjugacy `H(z) = (Phi(z), proj_W z mod 1)` to skew form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::map::TorusMap;
use crate::spectral::{build_tiling, eigen_data, to_f, SpectralData, Tiling};
use crate::torus::{circle_distance, wrap, LiftPoint, TorusPoint};

/// Hard cap on the number of series terms.
pub const MAX_DEPTH: usize = 200;

/// Tolerance used internally when `Phi` is an ingredient of a root solve.
pub const SOLVE_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    pub error_bound: f64,
    pub depth: usize,
}

/// Precomputed data for evaluating `Phi^` on one map.
#[derive(Clone, Debug)]
pub struct SemiConjugacy {
    map: TorusMap,
    spectral: SpectralData,
    v: Vec2,
    /// `|v| sup|G| / (k (|m| - 1))`: the tail bound at depth 0.
    tail0: f64,
}

impl SemiConjugacy {
    pub fn new(map: &TorusMap) -> Result<Self> {
        let spectral = eigen_data(map.matrix())?;
        let v = to_f(spectral.v_m_left);
        let mabs = spectral.m.abs() as f64;
        let gsup = map.perturbation().sup_norm_bound();
        Ok(Self {
            map: map.clone(),
            spectral,
            v,
            tail0: v.norm() * gsup / (spectral.k as f64 * (mabs - 1.0)),
        })
    }

    pub fn map(&self) -> &TorusMap {
        &self.map
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn error_bound(&self, depth: usize) -> f64 {
        self.tail0 / (self.spectral.m.abs() as f64).powi(depth as i32)
    }

    /// Smallest depth whose tail bound is within `tol`.
    pub fn depth_for(&self, tol: f64) -> Result<usize> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
        }
        (0..=MAX_DEPTH)
            .find(|&n| self.error_bound(n) <= tol)
            .ok_or(Error::TolNotAchievable {
                tol,
                cap: MAX_DEPTH,
            })
    }

    /// Truncated series at a fixed depth.
    pub fn phi_hat_at_depth(&self, q: &LiftPoint, depth: usize) -> f64 {
        let m = self.spectral.m as f64;
        let g = self.map.perturbation();
        let mut s = self.v.dot(q);
        let mut w = Vec2::new(wrap(q.x), wrap(q.y));
        let mut scale = 1.0;
        for _ in 0..depth {
            scale /= m;
            let gw = g.eval(&w);
            s += scale * self.v.dot(&gw);
            let img = self.map.matrix().to_f64() * w + gw;
            w = Vec2::new(wrap(img.x), wrap(img.y));
        }
        s / self.spectral.k as f64
    }

    pub fn phi_hat(&self, q: &LiftPoint, tol: f64) -> Result<PhiValue> {
        let depth = self.depth_for(tol)?;
        Ok(PhiValue {
            value: self.phi_hat_at_depth(q, depth),
            error_bound: self.error_bound(depth),
            depth,
        })
    }

    pub fn phi(&self, p: &TorusPoint, tol: f64) -> Result<f64> {
        Ok(wrap(self.phi_hat(&p.lift(), tol)?.value))
    }

    /// Right-hand side of the Lipschitz-defect inequality, `2 |v| sup|G| / (|m| - 1)`,
    /// stated for `k Phi^`.
    pub fn defect_bound(&self) -> f64 {
        2.0 * self.tail0 * self.spectral.k as f64
    }

    /// `| |k Phi^(z1) - k Phi^(z2)| - |v (z1 - z2)| |`.
    pub fn lipschitz_defect(&self, z1: &LiftPoint, z2: &LiftPoint) -> f64 {
        let depth = self.depth_for(SOLVE_TOL).unwrap_or(MAX_DEPTH);
        let k = self.spectral.k as f64;
        let a = k * self.phi_hat_at_depth(z1, depth);
        let b = k * self.phi_hat_at_depth(z2, depth);
        ((a - b).abs() - self.v.dot(&(z1 - z2)).abs()).abs()
    }

    /// Bisection for `Phi^(anchor + tau dir) = target` on `[lo, hi]`.
    fn bisect(
        &self,
        anchor: &LiftPoint,
        dir: &Vec2,
        target: f64,
        mut lo: f64,
        mut hi: f64,
        depth: usize,
        theta: f64,
    ) -> Result<f64> {
        let f = |tau: f64| self.phi_hat_at_depth(&(anchor + dir * tau), depth) - target;
        let flo = f(lo);
        let fhi = f(hi);
        if flo > 0.0 || fhi < 0.0 {
            return Err(Error::BracketFailure { theta });
        }
        if flo == 0.0 {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = f(mid);
            if fm == 0.0 {
                return Ok(mid);
            }
            if fm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Solves along `anchor + tau v_m_right` for the lift value `target`.
    /// The bracket comes from the linear part widened by the defect bound, so
    /// it straddles a root whenever the defect inequality holds.
    fn solve_on_line(&self, anchor: &LiftPoint, target: f64, forward_only: bool, theta: f64) -> Result<Vec2> {
        let depth = self.depth_for(SOLVE_TOL)?;
        let r = to_f(self.spectral.v_m_right);
        let k = self.spectral.k as f64;
        let slope = self.v.dot(&r);
        let f0 = self.phi_hat_at_depth(anchor, depth);
        let gap = (target - f0) * k;
        let widen = self.defect_bound() + 1e-9;
        let lo = if forward_only { 0.0 } else { (gap - widen) / slope };
        let hi = (gap + widen) / slope;
        let tau = self.bisect(anchor, &r, target, lo, hi.max(lo), depth, theta)?;
        Ok(anchor + r * tau)
    }

    /// The first point at or after `anchor` along `v_m_right` with `Phi = theta`.
    pub fn fiber_solve(&self, theta: f64, anchor: &TorusPoint) -> Result<TorusPoint> {
        let depth = self.depth_for(SOLVE_TOL)?;
        let a = anchor.lift();
        let f0 = self.phi_hat_at_depth(&a, depth);
        let target = theta + (f0 - theta).ceil();
        Ok(TorusPoint::from_lift(&self.solve_on_line(&a, target, true, theta)?))
    }

    /// `n_points` fiber points on lines through `(i/n) w1`, `w1` spanning
    /// `ker v_m_left`. One lift target is shared by all lines, so the points
    /// follow a single connected lift of the fiber.
    pub fn fiber_trace(&self, theta: f64, n_points: usize) -> Result<FiberPolyline> {
        if n_points < 8 {
            return Err(Error::InvalidParameter(format!(
                "fiber_trace needs n_points >= 8, got {n_points}"
            )));
        }
        let tiling = build_tiling(primitive(self.spectral.v_m_left))?;
        let w1 = to_f(tiling.w1);
        let depth = self.depth_for(SOLVE_TOL)?;
        let origin = Vec2::zeros();
        let target = theta + (self.phi_hat_at_depth(&origin, depth) - theta).ceil();
        let lifts: Vec<Vec2> = (0..=n_points)
            .into_par_iter()
            .map(|i| {
                let anchor = w1 * (i as f64 / n_points as f64);
                self.solve_on_line(&anchor, target, false, theta)
            })
            .collect::<Result<_>>()?;
        let closing = (lifts[n_points] - w1 - lifts[0]).norm();
        let mut length = 0.0;
        let mut max_spacing: f64 = 0.0;
        let mut max_turn: f64 = 0.0;
        for i in 0..n_points {
            let d = lifts[i + 1] - lifts[i];
            length += d.norm();
            max_spacing = max_spacing.max(d.norm());
            if i > 0 {
                let prev = lifts[i] - lifts[i - 1];
                let c = (prev.dot(&d) / (prev.norm() * d.norm())).clamp(-1.0, 1.0);
                max_turn = max_turn.max(c.acos());
            }
        }
        let points: Vec<TorusPoint> = lifts[..n_points].iter().map(TorusPoint::from_lift).collect();
        let max_residual = points
            .iter()
            .map(|p| circle_distance(self.phi_hat_at_depth(&p.lift(), depth), theta))
            .fold(0.0, f64::max);
        Ok(FiberPolyline {
            theta: wrap(theta),
            points,
            closed: closing < 1e-8,
            max_residual,
            length,
            max_spacing,
            max_turning_angle: max_turn,
        })
    }
}

fn primitive(v: [i64; 2]) -> [i64; 2] {
    use num_integer::Integer;
    let g = v[0].gcd(&v[1]);
    [v[0] / g, v[1] / g]
}

/// An approximation of the level set `Phi = theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberPolyline {
    pub theta: f64,
    pub points: Vec<TorusPoint>,
    pub closed: bool,
    pub max_residual: f64,
    /// Length of the closed lifted polyline.
    pub length: f64,
    pub max_spacing: f64,
    pub max_turning_angle: f64,
}

pub fn phi_hat(map: &TorusMap, q: &LiftPoint, tol: f64) -> Result<PhiValue> {
    SemiConjugacy::new(map)?.phi_hat(q, tol)
}

pub fn phi(map: &TorusMap, p: &TorusPoint, tol: f64) -> Result<f64> {
    SemiConjugacy::new(map)?.phi(p, tol)
}

/// Max over `sample_n` seeded random points of the circle distance between
/// `Phi(F z)` and `m Phi(z)`.
pub fn factoring_residual(map: &TorusMap, sample_n: usize, tol: f64, seed: u64) -> Result<f64> {
    if sample_n == 0 {
        return Err(Error::InvalidParameter("sample_n must be >= 1".into()));
    }
    let sc = SemiConjugacy::new(map)?;
    let depth = sc.depth_for(tol)?;
    let m = sc.spectral.m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<TorusPoint> = (0..sample_n)
        .map(|_| TorusPoint::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    Ok(pts
        .par_iter()
        .map(|p| {
            let a = sc.phi_hat_at_depth(&map.eval(p).lift(), depth);
            let b = m * sc.phi_hat_at_depth(&p.lift(), depth);
            circle_distance(a, b)
        })
        .reduce(|| 0.0, f64::max))
}

pub fn lipschitz_defect(map: &TorusMap, z1: &LiftPoint, z2: &LiftPoint) -> Result<f64> {
    Ok(SemiConjugacy::new(map)?.lipschitz_defect(z1, z2))
}

pub fn fiber_solve(map: &TorusMap, theta: f64, anchor: &TorusPoint) -> Result<TorusPoint> {
    SemiConjugacy::new(map)?.fiber_solve(theta, anchor)
}

pub fn fiber_trace(map: &TorusMap, theta: f64, n_points: usize) -> Result<FiberPolyline> {
    SemiConjugacy::new(map)?.fiber_trace(theta, n_points)
}

/// `H(z) = (Phi(z), u . z mod 1)` where `u` is the dual of `w1` in the tiling
/// basis `(w1, w2)`. `u` is integral, so the second coordinate is well defined
/// on the torus.
#[derive(Clone, Debug)]
pub struct ConjugacyMap {
    semi: SemiConjugacy,
    tiling: Tiling,
    tol: f64,
    depth: usize,
}

/// Round-trip tolerance for [`ConjugacyMap::inverse`].
pub const INVERSE_TOL: f64 = 1e-9;

impl ConjugacyMap {
    pub fn new(map: &TorusMap, tol: f64) -> Result<Self> {
        let semi = SemiConjugacy::new(map)?;
        let tiling = build_tiling(primitive(semi.spectral.v_m_left))?;
        let depth = semi.depth_for(tol)?;
        Ok(Self {
            semi,
            tiling,
            tol,
            depth,
        })
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    pub fn spectral(&self) -> &SpectralData {
        &self.semi.spectral
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn semi(&self) -> &SemiConjugacy {
        &self.semi
    }

    pub fn forward(&self, p: &TorusPoint) -> TorusPoint {
        let q = p.lift();
        let theta = self.semi.phi_hat_at_depth(&q, self.depth);
        TorusPoint::new(theta, to_f(self.tiling.proj_w).dot(&q))
    }

    /// Solves `H(p) = target` on the segment `s w1 + tau w2`, `tau` in `[0, 1]`,
    /// where `s = target.y`.
    pub fn inverse(&self, target: &TorusPoint) -> Result<TorusPoint> {
        let depth = self.semi.depth_for(SOLVE_TOL.min(self.tol))?;
        let anchor = to_f(self.tiling.w1) * target.y();
        let w2 = to_f(self.tiling.w2);
        let f0 = self.semi.phi_hat_at_depth(&anchor, depth);
        let lift_target = target.x() + (f0 - target.x()).ceil();
        let tau = self
            .semi
            .bisect(&anchor, &w2, lift_target, 0.0, 1.0, depth, target.x())
            .map_err(|_| Error::NoConvergence(format!("H inverse bracket at {target:?}")))?;
        let p = TorusPoint::from_lift(&(anchor + w2 * tau));
        let err = self.forward(&p).distance(target);
        if err > INVERSE_TOL {
            return Err(Error::NoConvergence(format!(
                "H inverse residual {err:e} at {target:?}"
            )));
        }
        Ok(p)
    }
}

pub fn conjugacy_forward(cmap: &ConjugacyMap, p: &TorusPoint) -> TorusPoint {
    cmap.forward(p)
}

pub fn conjugacy_inverse(cmap: &ConjugacyMap, target: &TorusPoint) -> Result<TorusPoint> {
    cmap.inverse(target)
}
