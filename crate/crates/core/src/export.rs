//! Plot-ready CSV tables. Numbers use the shortest round-trip formatting, so
//! equal results always give identical text.

use std::fmt::Write;

use crate::circle::{CircleClass, SweepResult};
use crate::conjugacy::FiberPolyline;
use crate::orbits::{ManifoldPolyline, PeriodicOrbit};
use crate::udv::{CoverageResult, FtleSeries};

/// Shortest round-trip text for `x`, in exponent form outside `[1e-5, 1e16)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn table(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn class_label(c: &CircleClass) -> String {
    match c {
        CircleClass::Locked { p, q } => format!("locked:{p}/{q}"),
        CircleClass::Quasiperiodic => "quasiperiodic".into(),
        CircleClass::Undetermined => "undetermined".into(),
    }
}

pub fn fibers_csv(fibers: &[FiberPolyline]) -> String {
    table(
        "theta,idx,x,y",
        fibers.iter().flat_map(|f| {
            f.points
                .iter()
                .enumerate()
                .map(move |(i, p)| format!("{},{},{},{}", num(f.theta), i, num(p.x()), num(p.y())))
        }),
    )
}

pub fn ftle_csv(series: &FtleSeries) -> String {
    table(
        "start,lambda1,lambda2,count",
        series
            .starts
            .iter()
            .zip(&series.exponents)
            .zip(&series.counts)
            .map(|((s, e), c)| format!("{},{},{},{}", s, num(e[0]), num(e[1]), c)),
    )
}

pub fn coverage_csv(result: &CoverageResult) -> String {
    table(
        "n,fraction",
        result
            .coverage
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{},{}", i + 1, num(*f))),
    )
}

pub fn sweep_csv(result: &SweepResult) -> String {
    table(
        "t,rho,diagnostic,classification,iters",
        result.t_values.iter().zip(&result.analyses).map(|(t, a)| {
            format!(
                "{},{},{},{},{}",
                num(*t),
                num(a.rho),
                num(a.diagnostic),
                class_label(&a.classification),
                a.iters
            )
        }),
    )
}

pub fn orbits_csv(orbits: &[PeriodicOrbit]) -> String {
    table(
        "orbit,period,idx,x,y,class",
        orbits.iter().enumerate().flat_map(|(k, o)| {
            o.points
                .iter()
                .enumerate()
                .map(move |(i, p)| format!("{},{},{},{},{},{:?}", k, o.period, i, num(p.x()), num(p.y()), o.class))
        }),
    )
}

pub fn manifold_csv(m: &ManifoldPolyline) -> String {
    let mut out = String::from("idx,x,y,lift_x,lift_y\n");
    for (i, (p, l)) in m.points.iter().zip(&m.lifts).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i, num(p.x()), num(p.y()), num(l.x), num(l.y));
    }
    out
}
