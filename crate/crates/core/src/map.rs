//! Torus maps `F(z) = M z + G(z) mod 1` with integer `M` and a finite Fourier
//! perturbation `G`.

use std::f64::consts::TAU;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::torus::{wrap, LiftPoint, TorusPoint};

/// A 2x2 integer matrix with nonzero determinant, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerMatrix {
    entries: [[i64; 2]; 2],
}

impl IntegerMatrix {
    pub fn new(entries: [[i64; 2]; 2]) -> Result<Self> {
        let m = Self { entries };
        if m.det() == 0 {
            return Err(Error::SingularMatrix);
        }
        Ok(m)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.entries[r][c]
    }

    pub fn entries(&self) -> [[i64; 2]; 2] {
        self.entries
    }

    pub fn det(&self) -> i64 {
        let e = &self.entries;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }

    pub fn trace(&self) -> i64 {
        self.entries[0][0] + self.entries[1][1]
    }

    /// `M v` for a column vector.
    pub fn apply(&self, v: [i64; 2]) -> [i64; 2] {
        let e = &self.entries;
        [e[0][0] * v[0] + e[0][1] * v[1], e[1][0] * v[0] + e[1][1] * v[1]]
    }

    /// `v M` for a row vector.
    pub fn apply_left(&self, v: [i64; 2]) -> [i64; 2] {
        let e = &self.entries;
        [v[0] * e[0][0] + v[1] * e[1][0], v[0] * e[0][1] + v[1] * e[1][1]]
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> i64 {
        self.entries
            .iter()
            .map(|r| r[0].abs() + r[1].abs())
            .max()
            .unwrap_or(0)
    }

    pub fn to_f64(&self) -> Mat2 {
        let e = &self.entries;
        Mat2::new(e[0][0] as f64, e[0][1] as f64, e[1][0] as f64, e[1][1] as f64)
    }
}

/// One term `coeff * sin(2 pi freq . z + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub freq: [i64; 2],
    pub coeff: [f64; 2],
    pub phase: f64,
}

/// `G(z) = t * drift + sum_j c_j sin(2 pi f_j . z + phi_j)`.
///
/// The scalar `t` enters additively along `drift` (default `(0, 1)`), which
/// keeps `DG` independent of `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierPerturbation {
    terms: Vec<FourierTerm>,
    t: f64,
    drift: [f64; 2],
}

impl Default for FourierPerturbation {
    fn default() -> Self {
        Self::zero()
    }
}

impl FourierPerturbation {
    pub fn new(terms: Vec<FourierTerm>, t: f64, drift: [f64; 2]) -> Self {
        Self { terms, t, drift }
    }

    pub fn zero() -> Self {
        Self::new(Vec::new(), 0.0, [0.0, 1.0])
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn drift(&self) -> [f64; 2] {
        self.drift
    }

    pub fn with_t(&self, t: f64) -> Self {
        Self {
            t,
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.t == 0.0 && self.terms.iter().all(|c| c.coeff == [0.0, 0.0])
    }

    #[inline]
    pub fn eval(&self, z: &Vec2) -> Vec2 {
        let mut g = Vec2::new(self.t * self.drift[0], self.t * self.drift[1]);
        for term in &self.terms {
            let arg = TAU * (term.freq[0] as f64 * z.x + term.freq[1] as f64 * z.y) + term.phase;
            let s = arg.sin();
            g.x += term.coeff[0] * s;
            g.y += term.coeff[1] * s;
        }
        g
    }

    #[inline]
    pub fn jacobian(&self, z: &Vec2) -> Mat2 {
        let mut d = Mat2::zeros();
        for term in &self.terms {
            let arg = TAU * (term.freq[0] as f64 * z.x + term.freq[1] as f64 * z.y) + term.phase;
            let c = TAU * arg.cos();
            for r in 0..2 {
                for k in 0..2 {
                    d[(r, k)] += term.coeff[r] * c * term.freq[k] as f64;
                }
            }
        }
        d
    }

    /// Triangle-inequality bound on `sup |G|` (Euclidean norm).
    pub fn sup_norm_bound(&self) -> f64 {
        let drift = self.t.abs() * self.drift[0].hypot(self.drift[1]);
        drift
            + self
                .terms
                .iter()
                .map(|c| c.coeff[0].hypot(c.coeff[1]))
                .sum::<f64>()
    }

    /// Bound on `sup |u . G|` for a fixed covector `u`.
    pub fn sup_dot_bound(&self, u: [f64; 2]) -> f64 {
        let drift = (self.t * (u[0] * self.drift[0] + u[1] * self.drift[1])).abs();
        drift
            + self
                .terms
                .iter()
                .map(|c| (u[0] * c.coeff[0] + u[1] * c.coeff[1]).abs())
                .sum::<f64>()
    }

    /// Bound on `sup ||DG||` (operator 2-norm): each term contributes the rank
    /// one matrix `2 pi cos(.) c f^T`.
    pub fn derivative_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|c| {
                TAU * c.coeff[0].hypot(c.coeff[1]) * (c.freq[0] as f64).hypot(c.freq[1] as f64)
            })
            .sum()
    }

    /// True when the first component of `G` is identically zero and no term
    /// depends on `y` through the first component.
    pub fn first_component_vanishes(&self) -> bool {
        self.t * self.drift[0] == 0.0 && self.terms.iter().all(|c| c.coeff[0] == 0.0)
    }
}

/// A torus map `F(z) = M z + G(z) mod 1`. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusMap {
    matrix: IntegerMatrix,
    perturbation: FourierPerturbation,
}

impl TorusMap {
    pub fn new(matrix: IntegerMatrix, perturbation: FourierPerturbation) -> Self {
        Self {
            matrix,
            perturbation,
        }
    }

    pub fn linear(matrix: IntegerMatrix) -> Self {
        Self::new(matrix, FourierPerturbation::zero())
    }

    /// `F_t(x, y) = (3x, x + y + t + eps sin 2 pi y)`.
    pub fn reference(t: f64, eps: f64) -> Self {
        let matrix = IntegerMatrix::new([[3, 0], [1, 1]]).expect("nonsingular");
        let terms = vec![FourierTerm {
            freq: [0, 1],
            coeff: [0.0, eps],
            phase: 0.0,
        }];
        Self::new(matrix, FourierPerturbation::new(terms, t, [0.0, 1.0]))
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.matrix
    }

    pub fn perturbation(&self) -> &FourierPerturbation {
        &self.perturbation
    }

    pub fn with_t(&self, t: f64) -> Self {
        Self::new(self.matrix, self.perturbation.with_t(t))
    }

    #[inline]
    pub fn lift_eval(&self, q: &LiftPoint) -> LiftPoint {
        self.matrix.to_f64() * q + self.perturbation.eval(q)
    }

    #[inline]
    pub fn eval(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::from_lift(&self.lift_eval(&p.lift()))
    }

    #[inline]
    pub fn jacobian(&self, p: &TorusPoint) -> Mat2 {
        self.jacobian_at(&p.lift())
    }

    #[inline]
    pub fn jacobian_at(&self, z: &Vec2) -> Mat2 {
        self.matrix.to_f64() + self.perturbation.jacobian(z)
    }

    /// `[p, F(p), ..., F^n(p)]`.
    pub fn orbit(&self, p: &TorusPoint, n: usize) -> Vec<TorusPoint> {
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = *p;
        out.push(cur);
        for _ in 0..n {
            cur = self.eval(&cur);
            out.push(cur);
        }
        out
    }

    /// One step from a reduced point `w` in `[0,1)^2`: returns the reduced
    /// image and the integer part dropped, so `F^(w) = image + shift`.
    #[inline]
    pub fn step_reduced(&self, w: &Vec2) -> (Vec2, [i64; 2]) {
        let y = self.lift_eval(w);
        let (fx, nx) = split(y.x);
        let (fy, ny) = split(y.y);
        (Vector2::new(fx, fy), [nx, ny])
    }

    /// Skew form: the first lift coordinate is `m x + (no G)`.
    pub fn is_skew(&self) -> bool {
        self.matrix.get(0, 1) == 0 && self.perturbation.first_component_vanishes()
    }
}

/// Splits `c` into `(frac, int)` with `frac` in `[0, 1)` and `c = frac + int`
/// up to the rounding of `wrap`.
#[inline]
pub(crate) fn split(c: f64) -> (f64, i64) {
    let f = c.floor();
    let r = c - f;
    if r >= 1.0 {
        (0.0, f as i64 + 1)
    } else {
        (wrap(r), f as i64)
    }
}
