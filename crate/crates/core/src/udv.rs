//! Finite-time Lyapunov exponents, positive-exponent counts along an orbit
//! and disk-coverage tests of strong transitivity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_step, schur_frame, Vec2};
use crate::map::TorusMap;
use crate::torus::TorusPoint;

/// Jacobians with `|det|` below this are treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

/// Accumulates `log|r_ii|` along the orbit of `p` for `n` steps, starting from
/// the real Schur frame of `DF(p)`.
fn qr_logs(map: &TorusMap, p: &TorusPoint, n: usize) -> Result<Vec<[f64; 2]>> {
    let mut z = *p;
    let mut q = schur_frame(&map.jacobian(p));
    let mut logs = Vec::with_capacity(n);
    for step in 0..n {
        let j = map.jacobian(&z);
        let det = j.determinant();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularJacobian { step, det });
        }
        let (next, l) = qr_step(&j, &q);
        q = next;
        logs.push(l);
        z = map.eval(&z);
    }
    Ok(logs)
}

fn ordered(a: f64, b: f64) -> [f64; 2] {
    if a >= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// `(lambda1, lambda2)` over the `n` iterates starting at `p`, `lambda1 >= lambda2`.
pub fn ftle_window(map: &TorusMap, p: &TorusPoint, n: usize) -> Result<[f64; 2]> {
    if n == 0 {
        return Err(Error::InvalidParameter("window N must be >= 1".into()));
    }
    let logs = qr_logs(map, p, n)?;
    let (s1, s2) = logs.iter().fold((0.0, 0.0), |(a, b), l| (a + l[0], b + l[1]));
    Ok(ordered(s1 / n as f64, s2 / n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtleSeries {
    pub window: usize,
    pub stride: usize,
    pub dead_band: f64,
    pub starts: Vec<usize>,
    pub exponents: Vec<[f64; 2]>,
    /// Number of exponents above `dead_band`.
    pub counts: Vec<u8>,
}

/// Window exponents along one orbit of length `total` from `p0`.
///
/// A single orthonormal frame is carried along the whole orbit, so each window
/// sees the frame already aligned by the preceding iterates.
pub fn positive_count_series(
    map: &TorusMap,
    p0: &TorusPoint,
    total: usize,
    window: usize,
    stride: usize,
    dead_band: f64,
) -> Result<FtleSeries> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidParameter("window and stride must be >= 1".into()));
    }
    if total < window {
        return Err(Error::InvalidParameter(format!(
            "total ({total}) must be >= window ({window})"
        )));
    }
    if !(dead_band >= 0.0) {
        return Err(Error::InvalidParameter("dead_band must be >= 0".into()));
    }
    let logs = qr_logs(map, p0, total)?;
    let mut prefix = Vec::with_capacity(total + 1);
    prefix.push([0.0, 0.0]);
    for l in &logs {
        let last: [f64; 2] = *prefix.last().expect("nonempty");
        prefix.push([last[0] + l[0], last[1] + l[1]]);
    }
    let starts: Vec<usize> = (0..=total - window).step_by(stride).collect();
    let nf = window as f64;
    let exponents: Vec<[f64; 2]> = starts
        .iter()
        .map(|&s| {
            let (a, b) = (prefix[s], prefix[s + window]);
            ordered((b[0] - a[0]) / nf, (b[1] - a[1]) / nf)
        })
        .collect();
    let counts = exponents
        .iter()
        .map(|e| e.iter().filter(|&&l| l > dead_band).count() as u8)
        .collect();
    Ok(FtleSeries {
        window,
        stride,
        dead_band,
        starts,
        exponents,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationStats {
    pub frac_zero: f64,
    pub frac_one: f64,
    pub frac_two: f64,
    /// Consecutive windows whose counts differ.
    pub switches: usize,
    pub min_lambda2: f64,
    pub max_lambda2: f64,
}

pub fn oscillation_stats(series: &FtleSeries) -> Result<OscillationStats> {
    let n = series.counts.len();
    if n == 0 {
        return Err(Error::EmptySet);
    }
    let frac = |c: u8| series.counts.iter().filter(|&&k| k == c).count() as f64 / n as f64;
    let switches = series.counts.windows(2).filter(|w| w[0] != w[1]).count();
    let (min_lambda2, max_lambda2) = series
        .exponents
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[1]), hi.max(e[1])));
    Ok(OscillationStats {
        frac_zero: frac(0),
        frac_one: frac(1),
        frac_two: frac(2),
        switches,
        min_lambda2,
        max_lambda2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub center: TorusPoint,
    pub radius: f64,
    pub grid_n: usize,
    pub seeds: usize,
    /// First iterate at which every cell has been hit, if any.
    pub n_cover: Option<usize>,
    /// Fraction of cells hit by the union of images over iterates `1..=n`.
    pub coverage: Vec<f64>,
}

/// Lipschitz bound for `F` in the max norm.
fn lipschitz(map: &TorusMap) -> f64 {
    map.matrix().norm_inf() as f64 + map.perturbation().derivative_bound()
}

/// Square-lattice points inside the disk, at least `min_count` of them and
/// spaced finely enough that their first image is a half-cell net of `F(D)`.
fn disk_seeds(map: &TorusMap, center: &TorusPoint, radius: f64, grid_n: usize) -> Vec<TorusPoint> {
    // A disk of radius sqrt(2)/2 already contains a fundamental domain.
    let r = radius.min(0.5f64.sqrt());
    let min_count = 10 * grid_n * grid_n;
    let net = 1.0 / (2f64.sqrt() * grid_n as f64 * lipschitz(map).max(1.0));
    let mut h = (std::f64::consts::PI * r * r / min_count as f64).sqrt().min(net);
    loop {
        let k = (r / h).ceil() as i64;
        let c = center.lift();
        let mut pts = Vec::new();
        for i in -k..=k {
            for j in -k..=k {
                let d = Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if d.norm() <= r {
                    pts.push(TorusPoint::from_lift(&(c + d)));
                }
            }
        }
        if pts.len() >= min_count {
            return pts;
        }
        h *= 0.9;
    }
}

fn cell(p: &TorusPoint, g: usize) -> usize {
    let ix = ((p.x() * g as f64) as usize).min(g - 1);
    let iy = ((p.y() * g as f64) as usize).min(g - 1);
    ix * g + iy
}

/// Iterates a sampled disk and reports when the union of its images first
/// meets every cell of a `grid_n x grid_n` partition.
pub fn transitivity_cover(
    map: &TorusMap,
    center: &TorusPoint,
    radius: f64,
    grid_n: usize,
    max_iter: usize,
) -> Result<CoverageResult> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be > 0".into()));
    }
    if grid_n < 16 {
        return Err(Error::InvalidParameter("grid_n must be >= 16".into()));
    }
    let mut pts = disk_seeds(map, center, radius, grid_n);
    let seeds = pts.len();
    let cells = grid_n * grid_n;
    let words = cells.div_ceil(64);
    let mut marked = vec![0u64; words];
    let mut coverage = Vec::new();
    let mut n_cover = None;
    for n in 1..=max_iter {
        let hit = pts
            .par_chunks_mut(4096)
            .map(|chunk| {
                let mut bits = vec![0u64; words];
                for p in chunk.iter_mut() {
                    *p = map.eval(p);
                    let c = cell(p, grid_n);
                    bits[c / 64] |= 1 << (c % 64);
                }
                bits
            })
            .reduce(
                || vec![0u64; words],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x |= y);
                    a
                },
            );
        marked.iter_mut().zip(&hit).for_each(|(x, y)| *x |= y);
        let count: u32 = marked.iter().map(|w| w.count_ones()).sum();
        coverage.push(count as f64 / cells as f64);
        if count as usize == cells {
            n_cover = Some(n);
            break;
        }
    }
    Ok(CoverageResult {
        center: *center,
        radius,
        grid_n,
        seeds,
        n_cover,
        coverage,
    })
}
