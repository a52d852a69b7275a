//! Circle maps on periodic vertical circles: rotation numbers, mode locking
//! and parameter sweeps.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::map::TorusMap;
use crate::torus::{circle_distance, wrap};

/// Weighted estimates must improve at least this fast (as a power of the
/// window length) for a circle to count as quasiperiodic.
pub const QP_THRESHOLD: f64 = 3.0;

/// Value of the diagnostic once successive estimates agree to rounding.
pub const DIAGNOSTIC_CAP: f64 = 16.0;

/// Absolute agreement treated as converged.
const DIFF_FLOOR: f64 = 1e-14;

/// Longest cycle recognised by the periodic-tail test.
const TAIL_PERIOD: usize = 64;

const MULTIPLIER_MARGIN: f64 = 1e-6;

/// A degree-one circle map given through its lift.
pub trait CircleMap: Sync {
    fn lift(&self, y: f64) -> f64;
    fn derivative(&self, y: f64) -> f64;
    fn spec(&self) -> Option<CircleMapSpec> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidRotation {
    pub rho: f64,
}

impl CircleMap for RigidRotation {
    fn lift(&self, y: f64) -> f64 {
        y + self.rho
    }
    fn derivative(&self, _: f64) -> f64 {
        1.0
    }
}

/// `y -> y + omega + amplitude sin 2 pi y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineCircleMap {
    pub omega: f64,
    pub amplitude: f64,
}

impl CircleMap for SineCircleMap {
    fn lift(&self, y: f64) -> f64 {
        y + self.omega + self.amplitude * (TAU * y).sin()
    }
    fn derivative(&self, y: f64) -> f64 {
        1.0 + TAU * self.amplitude * (TAU * y).cos()
    }
}

/// `h o f o h^-1` with `h(y) = y + a sin 2 pi y`, `|2 pi a| < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conjugated<C> {
    pub inner: C,
    pub amplitude: f64,
}

impl<C> Conjugated<C> {
    fn h(&self, y: f64) -> f64 {
        y + self.amplitude * (TAU * y).sin()
    }
    fn dh(&self, y: f64) -> f64 {
        1.0 + TAU * self.amplitude * (TAU * y).cos()
    }
    fn h_inv(&self, y: f64) -> f64 {
        let mut x = y;
        for _ in 0..60 {
            let step = (self.h(x) - y) / self.dh(x);
            x -= step;
            if step.abs() < 1e-17 {
                break;
            }
        }
        x
    }
}

impl<C: CircleMap> CircleMap for Conjugated<C> {
    fn lift(&self, y: f64) -> f64 {
        self.h(self.inner.lift(self.h_inv(y)))
    }
    fn derivative(&self, y: f64) -> f64 {
        let x = self.h_inv(y);
        self.dh(self.inner.lift(x)) * self.inner.derivative(x) / self.dh(x)
    }
}

/// Identifies a periodic vertical circle `S_{base_x}` and its period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleMapSpec {
    pub base_x: f64,
    pub n: usize,
}

/// The `n`-th return map of a skew product on `S_{base_x}`.
#[derive(Clone, Debug)]
pub struct RestrictedCircleMap {
    map: TorusMap,
    shear: f64,
    xs: Vec<f64>,
    spec: CircleMapSpec,
}

impl RestrictedCircleMap {
    pub fn base_orbit(&self) -> &[f64] {
        &self.xs
    }
}

impl CircleMap for RestrictedCircleMap {
    fn lift(&self, y: f64) -> f64 {
        let g = self.map.perturbation();
        self.xs.iter().fold(y, |y, &x| {
            y + self.shear * x + g.eval(&Vec2::new(x, y)).y
        })
    }
    fn derivative(&self, y: f64) -> f64 {
        let g = self.map.perturbation();
        let mut y = y;
        let mut d = 1.0;
        for &x in &self.xs {
            let z = Vec2::new(x, y);
            d *= 1.0 + g.jacobian(&z)[(1, 1)];
            y = y + self.shear * x + g.eval(&z).y;
        }
        d
    }
    fn spec(&self) -> Option<CircleMapSpec> {
        Some(self.spec)
    }
}

/// Restricts a skew product `(m x, a x + y + g(x, y))` to the vertical circle
/// over `base_x`, which must satisfy `m^n base_x = base_x mod 1`.
pub fn restrict(map: &TorusMap, base_x: f64, n: usize) -> Result<RestrictedCircleMap> {
    let e = map.matrix().entries();
    if !map.is_skew() || e[1][1] != 1 {
        return Err(Error::NotSkewForm);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("circle period n must be >= 1".into()));
    }
    let m = e[0][0] as i128;
    let c = m
        .checked_pow(n as u32)
        .map(|p| (p - 1).abs())
        .filter(|&c| c > 0 && c < 1 << 52)
        .ok_or(Error::NotInvariantCircle { base_x, n })?;
    let bx = wrap(base_x);
    let k = (bx * c as f64).round() as i128;
    if (bx - k as f64 / c as f64).abs() > 1e-12 && circle_distance(bx, k as f64 / c as f64) > 1e-12 {
        return Err(Error::NotInvariantCircle { base_x, n });
    }
    let mut xs = Vec::with_capacity(n);
    let mut num = k.rem_euclid(c);
    for _ in 0..n {
        xs.push(num as f64 / c as f64);
        num = (m * num).rem_euclid(c);
    }
    Ok(RestrictedCircleMap {
        map: map.clone(),
        shear: e[1][0] as f64,
        xs,
        spec: CircleMapSpec {
            base_x: num as f64 / c as f64,
            n,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMethod {
    Plain,
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    /// Rotation number mod 1.
    pub rho: f64,
    /// Mean lift displacement, not reduced.
    pub rho_lift: f64,
    /// Observed convergence exponent of successive estimates (0 when the orbit
    /// has settled on a short cycle).
    pub diagnostic: f64,
    pub iters: usize,
    pub method: RotationMethod,
}

/// `exp(-1 / (s (1 - s)))`, zero at the endpoints.
#[inline]
pub fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn average(increments: &[f64], method: RotationMethod) -> f64 {
    match method {
        RotationMethod::Plain => increments.iter().sum::<f64>() / increments.len() as f64,
        RotationMethod::Weighted => {
            let n = increments.len() as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, d) in increments.iter().enumerate() {
                let w = bump((i as f64 + 1.0) / (n + 1.0));
                num += w * d;
                den += w;
            }
            num / den
        }
    }
}

fn settles_on_cycle(ys: &[f64]) -> bool {
    let n = ys.len() - 1;
    (1..=TAIL_PERIOD.min(n.saturating_sub(1))).any(|q| {
        circle_distance(ys[n], ys[n - q]) < 1e-10 && circle_distance(ys[n - 1], ys[n - 1 - q]) < 1e-10
    })
}

/// Estimates the rotation number from the orbit of `y0`.
///
/// The diagnostic compares estimates over the first `N/8, N/4, N/2, N`
/// increments: with `d_j` the successive differences it is
/// `min_j log2(d_j / d_{j+1})`, capped once differences reach rounding level.
pub fn rotation_number(
    cmap: &dyn CircleMap,
    y0: f64,
    iters: usize,
    method: RotationMethod,
) -> Result<RotationEstimate> {
    if iters < 100 {
        return Err(Error::InvalidParameter(format!("iters must be >= 100, got {iters}")));
    }
    let mut ys = Vec::with_capacity(iters + 1);
    let mut inc = Vec::with_capacity(iters);
    let mut y = wrap(y0);
    ys.push(y);
    for _ in 0..iters {
        let next = cmap.lift(y);
        inc.push(next - y);
        y = wrap(next);
        ys.push(y);
    }
    let rho_lift = average(&inc, method);
    if !rho_lift.is_finite() {
        return Err(Error::NoConvergence("non-finite rotation estimate".into()));
    }
    let est: Vec<f64> = [8, 4, 2, 1]
        .iter()
        .map(|d| average(&inc[..iters / d], method))
        .collect();
    let floor = DIFF_FLOOR * rho_lift.abs().max(1.0);
    let diffs: Vec<f64> = est.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let exponent = |a: f64, b: f64| {
        if b <= floor {
            DIAGNOSTIC_CAP
        } else {
            (a.max(floor) / b).log2().min(DIAGNOSTIC_CAP)
        }
    };
    let mut diagnostic = exponent(diffs[0], diffs[1]).min(exponent(diffs[1], diffs[2]));
    if settles_on_cycle(&ys) {
        diagnostic = 0.0;
    }
    Ok(RotationEstimate {
        rho: wrap(rho_lift),
        rho_lift,
        diagnostic,
        iters,
        method,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CircleClass {
    /// Rotation number `p/q` with `0 <= p < q`.
    Locked { p: i64, q: i64 },
    Quasiperiodic,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LockedOrbit {
    /// Lift numerator: `f^q(y) = y + p`.
    pub p: i64,
    pub q: i64,
    pub y: f64,
    pub multiplier: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleAnalysis {
    pub spec: Option<CircleMapSpec>,
    pub rho: f64,
    pub rho_lift: f64,
    pub diagnostic: f64,
    pub threshold: f64,
    pub classification: CircleClass,
    pub locked_orbit: Option<LockedOrbit>,
    pub iters: usize,
}

/// Convergents `p/q` of `x` with `q <= qmax`.
pub fn convergents(x: f64, qmax: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, x.floor() as i64, 1i64);
    let mut r = x - x.floor();
    out.push((p1, q1));
    for _ in 0..64 {
        if r < 1e-12 {
            break;
        }
        let inv = 1.0 / r;
        let a = inv.floor();
        r = inv - a;
        if a > qmax as f64 {
            break;
        }
        let a = a as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > qmax {
            break;
        }
        out.push((p2, q2));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    out
}

fn iterate(cmap: &dyn CircleMap, y: f64, q: i64) -> f64 {
    (0..q).fold(y, |y, _| cmap.lift(y))
}

fn multiplier(cmap: &dyn CircleMap, y: f64, q: i64) -> f64 {
    let mut y = y;
    let mut d = 1.0;
    for _ in 0..q {
        d *= cmap.derivative(y);
        y = cmap.lift(y);
    }
    d
}

/// Hyperbolic solutions of `f^q(y) = y + p`, attracting ones first.
fn locked_orbit(cmap: &dyn CircleMap, p: i64, q: i64) -> Option<LockedOrbit> {
    let s = (8 * q as usize).max(64);
    let g = |y: f64| iterate(cmap, y, q) - y - p as f64;
    let vals: Vec<f64> = (0..=s).map(|i| g(i as f64 / s as f64)).collect();
    let mut found: Vec<LockedOrbit> = Vec::new();
    for i in 0..s {
        let (a, b) = (vals[i], vals[i + 1]);
        if !(a.signum() != b.signum() || a == 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (i as f64 / s as f64, (i + 1) as f64 / s as f64);
        let flo = a;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = g(mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y = 0.5 * (lo + hi);
        let residual = g(y).abs();
        let mult = multiplier(cmap, y, q);
        if residual < 1e-10 && (mult.abs() - 1.0).abs() > MULTIPLIER_MARGIN {
            found.push(LockedOrbit {
                p,
                q,
                y: wrap(y),
                multiplier: mult,
                residual,
            });
        }
    }
    found
        .iter()
        .find(|o| o.multiplier.abs() < 1.0)
        .or(found.first())
        .copied()
}

/// Looks for a hyperbolic periodic orbit at small denominators of the
/// rotation number first, then falls back on the weighted-average diagnostic.
pub fn classify_circle(cmap: &dyn CircleMap, y0: f64, iters: usize, budget: usize) -> Result<CircleAnalysis> {
    let est = rotation_number(cmap, y0, iters, RotationMethod::Weighted)?;
    let mut locked = None;
    for (p, q) in convergents(est.rho_lift, budget.max(1) as i64) {
        if (est.rho_lift - p as f64 / q as f64).abs() >= 1.0 / (q * q) as f64 {
            continue;
        }
        if let Some(o) = locked_orbit(cmap, p, q) {
            locked = Some(o);
            break;
        }
    }
    let classification = match locked {
        Some(o) => CircleClass::Locked {
            p: o.p.rem_euclid(o.q),
            q: o.q,
        },
        None if est.diagnostic >= QP_THRESHOLD => CircleClass::Quasiperiodic,
        None => CircleClass::Undetermined,
    };
    Ok(CircleAnalysis {
        spec: cmap.spec(),
        rho: est.rho,
        rho_lift: est.rho_lift,
        diagnostic: est.diagnostic,
        threshold: QP_THRESHOLD,
        classification,
        locked_orbit: locked,
        iters,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub iters: usize,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            iters: 10_000,
            budget: 50,
            seed: DEFAULT_SEED,
        }
    }
}

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 0x5eed_cafe;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub base_x: f64,
    pub n: usize,
    pub t_values: Vec<f64>,
    pub analyses: Vec<CircleAnalysis>,
    /// Quasiperiodic / (quasiperiodic + locked).
    pub quasiperiodic_fraction: f64,
    pub n_locked: usize,
    pub n_quasiperiodic: usize,
    pub n_undetermined: usize,
    pub seed: u64,
    pub iters: usize,
    pub budget: usize,
}

/// Classifies the circle over `base_x` for `samples` evenly spaced `t`.
pub fn sweep(
    map: &TorusMap,
    base_x: f64,
    n: usize,
    t_range: (f64, f64),
    samples: usize,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if samples < 2 {
        return Err(Error::InvalidParameter("samples must be >= 2".into()));
    }
    if !(t_range.0.is_finite() && t_range.1.is_finite()) {
        return Err(Error::InvalidParameter("t range must be finite".into()));
    }
    restrict(map, base_x, n)?;
    let t_values: Vec<f64> = (0..samples)
        .map(|i| t_range.0 + (t_range.1 - t_range.0) * i as f64 / (samples - 1) as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let y0s: Vec<f64> = (0..samples).map(|_| rng.random::<f64>()).collect();
    let analyses: Vec<CircleAnalysis> = t_values
        .par_iter()
        .zip(y0s.par_iter())
        .map(|(&t, &y0)| {
            let cm = restrict(&map.with_t(t), base_x, n)?;
            classify_circle(&cm, y0, opts.iters, opts.budget)
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&CircleClass) -> bool| analyses.iter().filter(|a| f(&a.classification)).count();
    let n_locked = count(|c| matches!(c, CircleClass::Locked { .. }));
    let n_quasiperiodic = count(|c| matches!(c, CircleClass::Quasiperiodic));
    let n_undetermined = count(|c| matches!(c, CircleClass::Undetermined));
    let classified = n_locked + n_quasiperiodic;
    Ok(SweepResult {
        base_x,
        n,
        t_values,
        analyses,
        quasiperiodic_fraction: if classified == 0 {
            0.0
        } else {
            n_quasiperiodic as f64 / classified as f64
        },
        n_locked,
        n_quasiperiodic,
        n_undetermined,
        seed: opts.seed,
        iters: opts.iters,
        budget: opts.budget,
    })
}
