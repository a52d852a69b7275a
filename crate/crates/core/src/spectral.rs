//! Integer eigen-structure of `M`, the lattice tiling and cone-system checks.

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::map::{IntegerMatrix, TorusMap};
use crate::torus::TorusPoint;

/// Eigen-data of a matrix with integer eigenvalues `1` and `m`, `|m| > 1`.
///
/// Sign conventions: `v_m_left` and `v_1_right` have a positive first nonzero
/// entry; `v_m_right` is oriented so that `v_m_left . v_m_right > 0`, and
/// `v_1_left` so that `v_1_left . v_1_right > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralData {
    pub m: i64,
    pub v_m_left: [i64; 2],
    pub v_m_right: [i64; 2],
    pub v_1_left: [i64; 2],
    pub v_1_right: [i64; 2],
    pub k: i64,
}

impl SpectralData {
    /// Angle in `[0, pi/2]` between `v_m_right` and `v_1_right`.
    pub fn theta(&self) -> f64 {
        let a = to_f(self.v_m_right);
        let b = to_f(self.v_1_right);
        (a.dot(&b).abs() / (a.norm() * b.norm())).min(1.0).acos()
    }
}

#[inline]
pub(crate) fn to_f(v: [i64; 2]) -> Vec2 {
    Vec2::new(v[0] as f64, v[1] as f64)
}

#[inline]
pub(crate) fn dot(a: [i64; 2], b: [i64; 2]) -> i64 {
    a[0] * b[0] + a[1] * b[1]
}

/// gcd of `|v_0|, |v_1|`: the smallest positive value of `v . x` over integer `x`.
pub fn lattice_min_k(v: [i64; 2]) -> Result<i64> {
    if v == [0, 0] {
        return Err(Error::ZeroVector);
    }
    Ok(v[0].gcd(&v[1]))
}

fn primitive_positive(v: [i64; 2]) -> [i64; 2] {
    let g = v[0].gcd(&v[1]);
    let mut p = [v[0] / g, v[1] / g];
    let lead = if p[0] != 0 { p[0] } else { p[1] };
    if lead < 0 {
        p = [-p[0], -p[1]];
    }
    p
}

fn left_null(n: [[i64; 2]; 2]) -> [i64; 2] {
    let a = [n[1][0], -n[0][0]];
    if a != [0, 0] {
        a
    } else {
        [n[1][1], -n[0][1]]
    }
}

fn right_null(n: [[i64; 2]; 2]) -> [i64; 2] {
    let a = [n[0][1], -n[0][0]];
    if a != [0, 0] {
        a
    } else {
        [n[1][1], -n[1][0]]
    }
}

fn shifted(m: &IntegerMatrix, lambda: i64) -> [[i64; 2]; 2] {
    let mut e = m.entries();
    e[0][0] -= lambda;
    e[1][1] -= lambda;
    e
}

pub fn eigen_data(mat: &IntegerMatrix) -> Result<SpectralData> {
    // Eigenvalues {1, m}: p(1) = 1 - tr + det = 0 and m = det.
    let tr = mat.trace();
    let det = mat.det();
    if 1 - tr + det != 0 {
        return Err(Error::NotEM(format!(
            "1 is not an eigenvalue (trace {tr}, det {det})"
        )));
    }
    let m = det;
    if m.abs() <= 1 {
        return Err(Error::NotEM(format!("second eigenvalue m = {m} has |m| <= 1")));
    }
    let nm = shifted(mat, m);
    let n1 = shifted(mat, 1);
    let v_m_left = primitive_positive(left_null(nm));
    let mut v_m_right = primitive_positive(right_null(nm));
    if dot(v_m_left, v_m_right) < 0 {
        v_m_right = [-v_m_right[0], -v_m_right[1]];
    }
    let v_1_right = primitive_positive(right_null(n1));
    let mut v_1_left = primitive_positive(left_null(n1));
    if dot(v_1_left, v_1_right) < 0 {
        v_1_left = [-v_1_left[0], -v_1_left[1]];
    }
    let k = lattice_min_k(v_m_left)?;
    Ok(SpectralData {
        m,
        v_m_left,
        v_m_right,
        v_1_left,
        v_1_right,
        k,
    })
}

/// Cone system `{a w + b W : |b| <= alpha |a|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub k: f64,
    pub alpha: f64,
    pub w: [f64; 2],
    pub big_w: [f64; 2],
}

impl ConeParams {
    /// `w` along `v_m_right`, `W` spanning the kernel of `v_m_left`.
    pub fn new(spec: &SpectralData, k: f64, alpha: f64) -> Result<Self> {
        if !(k > 1.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("cone K must be > 1, got {k}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cone alpha must be > 0, got {alpha}"
            )));
        }
        let w = to_f(spec.v_m_right).normalize();
        let big_w = to_f(primitive_positive([spec.v_m_left[1], -spec.v_m_left[0]])).normalize();
        Ok(Self {
            k,
            alpha,
            w: [w.x, w.y],
            big_w: [big_w.x, big_w.y],
        })
    }

    fn basis(&self) -> Mat2 {
        Mat2::new(self.w[0], self.big_w[0], self.w[1], self.big_w[1])
    }

    /// Coordinates `(a, b)` of `v = a w + b W`.
    pub fn decompose(&self, v: &Vec2) -> (f64, f64) {
        let c = crate::linalg::solve(&self.basis(), v).expect("w and W independent");
        (c.x, c.y)
    }

    pub fn contains(&self, v: &Vec2) -> bool {
        let (a, b) = self.decompose(v);
        b.abs() <= self.alpha * a.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub pass: bool,
    pub min_expansion: f64,
    pub max_containment_ratio: f64,
    pub max_transverse_growth: f64,
    pub worst_point: TorusPoint,
    pub grid_n: usize,
    pub boundary_samples: usize,
}

#[derive(Clone, Copy)]
struct PointStats {
    min_exp: f64,
    max_cont: f64,
    max_trans: f64,
    margin: f64,
    point: TorusPoint,
}

fn point_stats(map: &TorusMap, cone: &ConeParams, p: TorusPoint, samples: usize) -> PointStats {
    let jac = map.jacobian(&p);
    let w = Vec2::new(cone.w[0], cone.w[1]);
    let big_w = Vec2::new(cone.big_w[0], cone.big_w[1]);
    let mut min_exp = f64::INFINITY;
    let mut max_cont: f64 = 0.0;
    for i in 0..samples {
        let s = if samples == 1 {
            1.0
        } else {
            -1.0 + 2.0 * i as f64 / (samples - 1) as f64
        };
        // a = 1, b = s alpha: the whole closed cone including both boundary rays.
        let v = w + big_w * (s * cone.alpha);
        let (a2, b2) = cone.decompose(&(jac * v));
        min_exp = min_exp.min(a2.abs());
        max_cont = max_cont.max(b2.abs() / a2.abs());
    }
    let max_trans = (jac * big_w).norm();
    let margin = ((min_exp - cone.k) / cone.k)
        .min((cone.alpha - max_cont) / cone.alpha)
        .min((cone.k - max_trans) / cone.k);
    PointStats {
        min_exp,
        max_cont,
        max_trans,
        margin,
        point: p,
    }
}

/// Sample-based check of the cone conditions on a `grid_n x grid_n` grid.
pub fn cone_verify(
    map: &TorusMap,
    cone: &ConeParams,
    grid_n: usize,
    boundary_samples: usize,
) -> Result<ConeReport> {
    if grid_n < 2 {
        return Err(Error::InvalidParameter("grid_n must be >= 2".into()));
    }
    if boundary_samples < 2 {
        return Err(Error::InvalidParameter("boundary_samples must be >= 2".into()));
    }
    let h = 1.0 / grid_n as f64;
    let rows: Vec<PointStats> = (0..grid_n)
        .into_par_iter()
        .map(|i| {
            let mut best: Option<PointStats> = None;
            let mut acc = (f64::INFINITY, 0.0f64, 0.0f64);
            for j in 0..grid_n {
                let st = point_stats(
                    map,
                    cone,
                    TorusPoint::new(i as f64 * h, j as f64 * h),
                    boundary_samples,
                );
                acc.0 = acc.0.min(st.min_exp);
                acc.1 = acc.1.max(st.max_cont);
                acc.2 = acc.2.max(st.max_trans);
                if best.is_none_or(|b| st.margin < b.margin) {
                    best = Some(st);
                }
            }
            let b = best.expect("grid_n >= 2");
            PointStats {
                min_exp: acc.0,
                max_cont: acc.1,
                max_trans: acc.2,
                margin: b.margin,
                point: b.point,
            }
        })
        .collect();
    let mut min_expansion = f64::INFINITY;
    let mut max_containment_ratio: f64 = 0.0;
    let mut max_transverse_growth: f64 = 0.0;
    let mut worst = rows[0];
    for r in &rows {
        min_expansion = min_expansion.min(r.min_exp);
        max_containment_ratio = max_containment_ratio.max(r.max_cont);
        max_transverse_growth = max_transverse_growth.max(r.max_trans);
        if r.margin < worst.margin {
            worst = *r;
        }
    }
    Ok(ConeReport {
        pass: min_expansion > cone.k
            && max_containment_ratio < cone.alpha
            && max_transverse_growth < cone.k,
        min_expansion,
        max_containment_ratio,
        max_transverse_growth,
        worst_point: worst.point,
        grid_n,
        boundary_samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaCheck {
    pub dg_norm: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Compares the analytic `sup ||DG||` bound with a sufficient smallness threshold.
///
/// When `v_m_right` is perpendicular to `v_1_right` the threshold is `|m|/2`.
/// Otherwise `(K_t - 1) sigma_min / (1 + alpha)` with `K_t = (1 + |m|)/2`,
/// `alpha = tan(theta)/2` and `sigma_min` the least stretch of `M` over unit
/// vectors of that cone.
pub fn delta_check(map: &TorusMap) -> Result<DeltaCheck> {
    let spec = eigen_data(map.matrix())?;
    let dg_norm = map.perturbation().derivative_bound();
    let mabs = spec.m.abs() as f64;
    let threshold = if dot(spec.v_m_right, spec.v_1_right) == 0 {
        0.5 * mabs
    } else {
        let k_t = 0.5 * (1.0 + mabs);
        let alpha = 0.5 * spec.theta().tan();
        let cone = ConeParams::new(&spec, k_t, alpha)?;
        let mat = map.matrix().to_f64();
        let w = Vec2::new(cone.w[0], cone.w[1]);
        let big_w = Vec2::new(cone.big_w[0], cone.big_w[1]);
        let n = 257;
        let sigma_min = (0..n)
            .map(|i| {
                let s = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                (mat * (w + big_w * (s * alpha)).normalize()).norm()
            })
            .fold(f64::INFINITY, f64::min);
        (k_t - 1.0) * sigma_min / (1.0 + alpha)
    };
    Ok(DeltaCheck {
        dg_norm,
        threshold,
        pass: dg_norm < threshold,
    })
}

/// Unimodular lattice basis adapted to `phi(z) = v . z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    /// Primitive, `v . w1 = 0`, positive first nonzero entry.
    pub w1: [i64; 2],
    /// `v . w2 = 1`, minimal norm, ties broken lexicographically.
    pub w2: [i64; 2],
    /// Dual covector: `u . w1 = 1`, `u . w2 = 0`. The second coordinate of
    /// the conjugacy is `u . z mod 1`.
    pub proj_w: [i64; 2],
}

impl Tiling {
    pub fn det(&self) -> i64 {
        self.w1[0] * self.w2[1] - self.w1[1] * self.w2[0]
    }
}

pub fn build_tiling(v: [i64; 2]) -> Result<Tiling> {
    let k = lattice_min_k(v)?;
    if k != 1 {
        return Err(Error::NotPrimitive(v[0], v[1]));
    }
    let w1 = primitive_positive([v[1], -v[0]]);
    let eg = v[0].extended_gcd(&v[1]);
    // eg.x * v0 + eg.y * v1 = gcd = +-1.
    let sign = eg.gcd.signum();
    let p = [eg.x * sign, eg.y * sign];
    // Minimise |p + s w1| over integer s; the real optimum is -p.w1/|w1|^2.
    let ww = dot(w1, w1) as f64;
    let s0 = (-(dot(p, w1) as f64) / ww).round() as i64;
    let mut best: Option<[i64; 2]> = None;
    for s in s0 - 2..=s0 + 2 {
        let c = [p[0] + s * w1[0], p[1] + s * w1[1]];
        best = match best {
            None => Some(c),
            Some(b) => {
                let (nc, nb) = (dot(c, c), dot(b, b));
                if nc < nb || (nc == nb && c < b) {
                    Some(c)
                } else {
                    Some(b)
                }
            }
        };
    }
    let w2 = best.expect("nonempty search");
    let det = w1[0] * w2[1] - w1[1] * w2[0];
    // Inverse of [w1 w2] (columns); row 0 is the dual of w1.
    let proj_w = [w2[1] * det, -w2[0] * det];
    Ok(Tiling { w1, w2, proj_w })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(e: [[i64; 2]; 2]) -> IntegerMatrix {
        IntegerMatrix::new(e).unwrap()
    }

    #[test]
    fn reference_eigen_data() {
        let m = mat([[3, 0], [1, 1]]);
        let s = eigen_data(&m).unwrap();
        assert_eq!(s.m, 3);
        assert_eq!(s.v_m_left, [1, 0]);
        assert_eq!(s.v_m_right, [2, 1]);
        assert_eq!(s.v_1_right, [0, 1]);
        assert_eq!(s.k, 1);
        assert_eq!(m.apply_left(s.v_m_left), [3, 0]);
        assert_eq!(m.apply(s.v_m_right), [6, 3]);
        assert_eq!(m.apply_left(s.v_1_left), s.v_1_left);
    }

    #[test]
    fn diagonal() {
        let s = eigen_data(&mat([[2, 0], [0, 1]])).unwrap();
        assert_eq!((s.m, s.v_m_left, s.v_1_right, s.k), (2, [1, 0], [0, 1], 1));
        assert!((s.theta() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn not_em() {
        assert!(matches!(eigen_data(&mat([[2, 1], [1, 1]])), Err(Error::NotEM(_))));
        assert!(matches!(eigen_data(&mat([[1, 0], [0, -1]])), Err(Error::NotEM(_))));
        assert!(matches!(eigen_data(&mat([[1, 1], [0, 1]])), Err(Error::NotEM(_))));
    }

    #[test]
    fn lattice_k() {
        assert_eq!(lattice_min_k([1, 0]), Ok(1));
        assert_eq!(lattice_min_k([2, 4]), Ok(2));
        assert_eq!(lattice_min_k([0, 1]), Ok(1));
        assert_eq!(lattice_min_k([-6, 4]), Ok(2));
        assert_eq!(lattice_min_k([0, 0]), Err(Error::ZeroVector));
    }

    #[test]
    fn tilings() {
        let t = build_tiling([1, 0]).unwrap();
        assert_eq!((t.w1, t.w2), ([0, 1], [1, 0]));
        let t = build_tiling([0, 1]).unwrap();
        assert_eq!((t.w1, t.w2), ([1, 0], [0, 1]));
        let t = build_tiling([1, 2]).unwrap();
        assert_eq!(t.w1, [2, -1]);
        assert_eq!(dot([1, 2], t.w2), 1);
        assert_eq!(t.det().abs(), 1);
        assert_eq!(build_tiling([2, 4]), Err(Error::NotPrimitive(2, 4)));
    }

    #[test]
    fn linear_cone_passes_exactly() {
        let map = TorusMap::linear(mat([[3, 0], [1, 1]]));
        let s = eigen_data(map.matrix()).unwrap();
        let cone = ConeParams::new(&s, 2.0, 1.0).unwrap();
        let r = cone_verify(&map, &cone, 4, 65).unwrap();
        assert!(r.pass);
        assert!((r.min_expansion - 3.0).abs() < 1e-12);
        assert!((r.max_containment_ratio - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.max_transverse_growth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cone_params_reject_bad_values() {
        let s = eigen_data(&mat([[3, 0], [1, 1]])).unwrap();
        assert!(ConeParams::new(&s, 1.0, 1.0).is_err());
        assert!(ConeParams::new(&s, 2.0, 0.0).is_err());
    }

    #[test]
    fn delta_aligned() {
        let g0 = TorusMap::linear(mat([[3, 0], [0, 1]]));
        let d = delta_check(&g0).unwrap();
        assert_eq!(d.dg_norm, 0.0);
        assert!(d.pass);
        let small = TorusMap::new(
            mat([[3, 0], [0, 1]]),
            TorusMap::reference(0.0, 0.05).perturbation().clone(),
        );
        let d = delta_check(&small).unwrap();
        assert!((d.dg_norm - 0.1 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(d.threshold, 1.5);
        assert!(d.pass);
        let big = TorusMap::new(
            mat([[3, 0], [0, 1]]),
            TorusMap::reference(0.0, 0.3).perturbation().clone(),
        );
        let d = delta_check(&big).unwrap();
        assert!((d.dg_norm - 1.885).abs() < 1e-3);
        assert!(!d.pass);
    }
}
