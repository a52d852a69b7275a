//! Acceptance criteria 1 to 15. Prints one PASS/FAIL line per criterion with
//! its runtime and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multichaos::circle::{self, CircleClass, Conjugated, RigidRotation, RotationMethod, SweepOptions};
use multichaos::conjugacy::{factoring_residual, ConjugacyMap, SemiConjugacy};
use multichaos::orbits::{self, StabilityClass};
use multichaos::spectral::{cone_verify, eigen_data, ConeParams};
use multichaos::torus::circle_distance;
use multichaos::udv;
use multichaos::{IntegerMatrix, LiftPoint, TorusMap, TorusPoint};

const EPS: f64 = 0.05;
const SEED: u64 = 20240611;

type Outcome = Result<String, String>;

fn reference(t: f64) -> TorusMap {
    TorusMap::reference(t, EPS)
}

fn linear_reference() -> TorusMap {
    TorusMap::linear(IntegerMatrix::new([[3, 0], [1, 1]]).unwrap())
}

/// Reference matrix with a perturbation that also moves x, so that the
/// semi-conjugacy is not simply the x-coordinate.
fn coupled() -> TorusMap {
    multichaos::mapfile::parse(
        "[matrix]\nm11=3\nm12=0\nm21=1\nm22=1\n[perturbation]\nt=0.1\nfreq=(1,1) coeff=(0.02,0.05) phase=0.3\n",
    )
    .expect("valid map")
    .map
}

fn random_points(n: usize, stream: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    rng.set_stream(stream);
    (0..n)
        .map(|_| TorusPoint::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1_linear_exactness() -> Outcome {
    let map = linear_reference();
    let sc = SemiConjugacy::new(&map).map_err(err)?;
    let s = sc.spectral();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = LiftPoint::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let v = sc.phi_hat(&q, 1e-12).map_err(err)?.value;
        let exact = (s.v_m_left[0] as f64 * q.x + s.v_m_left[1] as f64 * q.y) / s.k as f64;
        worst = worst.max((v - exact).abs());
    }
    ensure(worst <= 1e-12, format!("max |phi_hat - v.q/k| = {worst:e}"))
}

fn c2_factoring_residual() -> Outcome {
    let tol = 1e-10;
    let r = factoring_residual(&reference(0.0), 1000, tol, SEED).map_err(err)?;
    let r2 = factoring_residual(&coupled(), 1000, tol, SEED).map_err(err)?;
    ensure(
        r < 4e-10 && r2 < 4e-10,
        format!("reference {r:e}, coupled family {r2:e} (bound 4e-10)"),
    )
}

fn c3_lipschitz_defect() -> Outcome {
    let map = reference(0.0);
    let sc = SemiConjugacy::new(&map).map_err(err)?;
    let bound = sc.defect_bound();
    let a = random_points(1000, 1);
    let b = random_points(1000, 2);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(p, q)| sc.lipschitz_defect(&p.lift(), &q.lift()))
        .fold(0.0, f64::max);
    ensure(worst <= bound, format!("max defect {worst:e} <= bound {bound:e} (k = {})", sc.spectral().k))
}

fn c4_fibers() -> Outcome {
    let mut worst: f64 = 0.0;
    for map in [reference(0.02), coupled()] {
        let sc = SemiConjugacy::new(&map).map_err(err)?;
        for i in 0..16 {
            let theta = i as f64 / 16.0;
            let f = sc.fiber_trace(theta, 128).map_err(err)?;
            if !f.closed {
                return Err(format!("fiber theta = {theta} not closed"));
            }
            for p in &f.points {
                let phi = sc.phi(p, 1e-12).map_err(err)?;
                worst = worst.max(circle_distance(phi, theta));
            }
        }
    }
    let lin = SemiConjugacy::new(&linear_reference()).map_err(err)?;
    let mut vertical = true;
    for i in 0..16 {
        let theta = i as f64 / 16.0;
        let f = lin.fiber_trace(theta, 64).map_err(err)?;
        vertical &= f.closed && f.points.iter().all(|p| circle_distance(p.x(), theta) < 1e-12);
    }
    ensure(
        worst < 1e-9 && vertical,
        format!("max |Phi - theta| = {worst:e}, linear fibers vertical: {vertical}"),
    )
}

fn c5_conjugacy_relation() -> Outcome {
    let n = 100;
    let mut worst = Vec::new();
    for map in [reference(0.02), coupled()] {
        let h = ConjugacyMap::new(&map, 1e-12).map_err(err)?;
        let mut w_max: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = TorusPoint::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                let z = h.inverse(&u).map_err(err)?;
                let w = h.forward(&map.eval(&z));
                w_max = w_max.max(circle_distance(w.x(), 3.0 * u.x()));
            }
        }
        worst.push(w_max);
    }
    ensure(
        worst.iter().all(|w| *w < 1e-7),
        format!("max |(H F H^-1)_1 - 3x| on 100x100: reference {:e}, coupled {:e}", worst[0], worst[1]),
    )
}

fn c6_fixed_points() -> Outcome {
    let found = orbits::find_periodic(&reference(0.0), 1, 16).map_err(err)?;
    if found.len() != 2 {
        return Err(format!("{} fixed points", found.len()));
    }
    let (r, s) = (&found[0], &found[1]);
    let near = |a: f64, b: f64| (a - b).abs() < 1e-8;
    let ok = r.class == StabilityClass::Repeller
        && s.class == StabilityClass::Saddle
        && r.points[0].distance(&TorusPoint::new(0.0, 0.0)) < 1e-10
        && s.points[0].distance(&TorusPoint::new(0.0, 0.5)) < 1e-10
        && near(r.multipliers[0].re, 3.0)
        && near(r.multipliers[1].re, 1.0 + 0.1 * std::f64::consts::PI)
        && near(s.multipliers[0].re, 3.0)
        && near(s.multipliers[1].re, 1.0 - 0.1 * std::f64::consts::PI)
        && r.residual < 1e-10
        && s.residual < 1e-10;
    ensure(
        ok,
        format!(
            "repeller {:?} mult ({:.10}, {:.10}); saddle {:?} mult ({:.10}, {:.10})",
            (r.points[0].x(), r.points[0].y()),
            r.multipliers[0].re,
            r.multipliers[1].re,
            (s.points[0].x(), s.points[0].y()),
            s.multipliers[0].re,
            s.multipliers[1].re
        ),
    )
}

fn c7_circle_bases() -> Outcome {
    for n in 1..=6u32 {
        let c = 3i64.pow(n) - 1;
        let b = orbits::periodic_circle_bases(3, n as usize).map_err(err)?;
        let exact = b.len() == c as usize
            && b.iter().enumerate().all(|(k, x)| *x == k as f64 / c as f64)
            && b.windows(2).all(|w| w[0] < w[1]);
        if !exact {
            return Err(format!("n = {n}: {} bases", b.len()));
        }
    }
    Ok("3^n - 1 distinct k/(3^n - 1) for n = 1..6".into())
}

fn c8_cone() -> Outcome {
    let spec = eigen_data(reference(0.0).matrix()).map_err(err)?;
    let cone = ConeParams::new(&spec, 2.0, 1.0).map_err(err)?;
    let good = cone_verify(&TorusMap::reference(0.0, EPS), &cone, 200, 16).map_err(err)?;
    let bad = cone_verify(&TorusMap::reference(0.0, 2.0), &cone, 200, 16).map_err(err)?;
    ensure(
        good.pass && !bad.pass,
        format!(
            "eps 0.05: pass={} (containment ratio {:.4}); eps 2.0: pass={} (containment ratio {:.4})",
            good.pass, good.max_containment_ratio, bad.pass, bad.max_containment_ratio
        ),
    )
}

fn c9_rotation_precision() -> Outcome {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let w = circle::rotation_number(&RigidRotation { rho: golden }, 0.0, 10_000, RotationMethod::Weighted)
        .map_err(err)?;
    let werr = (w.rho - golden).abs();
    let conj = Conjugated {
        inner: RigidRotation { rho: golden },
        amplitude: 0.1,
    };
    // For h o R o h^-1 the plain error is exactly |h(y_N) - h(y_0) - (y_N - y_0)| / N,
    // so N * error stays below 2 * 0.1 but does not tend to zero.
    let mut worst: f64 = 0.0;
    for n in 1000..1064 {
        let p = circle::rotation_number(&conj, 0.3, n, RotationMethod::Plain).map_err(err)?;
        worst = worst.max((p.rho_lift - golden).abs() * n as f64);
    }
    ensure(
        werr < 1e-10 && worst <= 0.2 + 1e-9 && worst > 0.05,
        format!("weighted error {werr:e}; plain sup N*error over N in [1000, 1063] = {worst:.4}"),
    )
}

fn c10_sweep() -> Outcome {
    let s = circle::sweep(&reference(0.0), 0.0, 1, (0.0, 1.0), 200, &SweepOptions::default()).map_err(err)?;
    let locked_near = |target: f64| {
        s.t_values
            .iter()
            .zip(&s.analyses)
            .any(|(t, a)| (t - target).abs() < 0.02 && matches!(a.classification, CircleClass::Locked { .. }))
    };
    let f = s.quasiperiodic_fraction;
    ensure(
        locked_near(0.0) && locked_near(0.5) && locked_near(1.0) && f > 0.5 && f < 1.0,
        format!(
            "fraction {f:.4} ({} locked, {} quasiperiodic, {} undetermined)",
            s.n_locked, s.n_quasiperiodic, s.n_undetermined
        ),
    )
}

fn c11_udv() -> Outcome {
    let s = udv::positive_count_series(&reference(0.02), &TorusPoint::new(0.1234, 0.5678), 100_000, 30, 1, 0.0)
        .map_err(err)?;
    let st = udv::oscillation_stats(&s).map_err(err)?;
    ensure(
        s.counts.contains(&1) && s.counts.contains(&2) && st.min_lambda2 < 0.0 && st.max_lambda2 > 0.0,
        format!(
            "count 1: {:.3}, count 2: {:.3}, switches {}, lambda2 in [{:.4}, {:.4}]",
            st.frac_one, st.frac_two, st.switches, st.min_lambda2, st.max_lambda2
        ),
    )
}

fn c12_coverage() -> Outcome {
    let r = udv::transitivity_cover(&reference(0.0), &TorusPoint::new(0.3, 0.7), 0.05, 64, 60).map_err(err)?;
    match r.n_cover {
        Some(n) if n <= 60 => Ok(format!("N_cover = {n} ({} seeds)", r.seeds)),
        _ => Err(format!("not covered, final fraction {:?}", r.coverage.last())),
    }
}

fn c13_saddle_density() -> Outcome {
    let map = reference(0.0);
    let mut pts = Vec::new();
    let mut radii = Vec::new();
    for p in 1..=8 {
        for o in orbits::find_periodic(&map, p, 16).map_err(err)? {
            if o.class == StabilityClass::Saddle {
                pts.extend(o.points);
            }
        }
        radii.push(orbits::covering_radius(&pts, 200).map_err(err)?);
    }
    let monotone = radii.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        monotone && *radii.last().unwrap() < 0.1,
        format!("covering radius by period cap: {radii:.4?}"),
    )
}

fn c14_snapback() -> Outcome {
    let map = reference(0.0);
    let rep = orbits::find_periodic(&map, 1, 16)
        .map_err(err)?
        .into_iter()
        .find(|o| o.class == StabilityClass::Repeller)
        .ok_or("no repeller")?;
    let c = orbits::snapback_search(&map, &rep, 0.1, 12)
        .map_err(err)?
        .ok_or("no certificate")?;
    ensure(
        c.residual < 1e-9 && c.jac_det.abs() > 1e-8,
        format!(
            "q = ({:.6}, {:.6}), n = {}, residual {:e}, |det DF^n| = {:.4}",
            c.q.x(),
            c.q.y(),
            c.n,
            c.residual,
            c.jac_det.abs()
        ),
    )
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|d| {
            d.flatten()
                .filter(|e| e.file_name() != "manifest.json")
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn c15_determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("multichaos-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    let runs: [&[&str]; 5] = [
        &["find-periodic", "--period", "3"],
        &["sweep", "--samples", "50"],
        &["ftle", "--total", "20000"],
        &["cover"],
        &["conjugacy", "--samples", "300", "--grid", "10"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for rep in 0..2 {
            let dir = tmp.join(format!("{i}_{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_multichaos"))
                .arg("--out")
                .arg(&dir)
                .args(["--seed", "99", "--threads", if rep == 0 { "1" } else { "3" }])
                .args(*args)
                .output()
                .map_err(err)?
                .status;
            if !status.success() {
                return Err(format!("{args:?} exited with {status}"));
            }
            outs.push(read_outputs(&dir));
        }
        if outs[0].is_empty() || outs[0] != outs[1] {
            return Err(format!("{args:?}: outputs differ"));
        }
        compared += outs[0].len();
    }
    let _ = fs::remove_dir_all(&tmp);
    Ok(format!("{compared} files byte-identical across reruns (1 vs 3 threads)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("semi-conjugacy exactness (linear)", c1_linear_exactness),
        ("factoring residual", c2_factoring_residual),
        ("Lipschitz defect bound", c3_lipschitz_defect),
        ("fiber structure", c4_fibers),
        ("conjugacy relation", c5_conjugacy_relation),
        ("saddle and repeller detection", c6_fixed_points),
        ("periodic-circle enumeration", c7_circle_bases),
        ("cone verification", c8_cone),
        ("rotation-number precision", c9_rotation_precision),
        ("sweep structure", c10_sweep),
        ("UDV signature", c11_udv),
        ("strong transitivity shadow", c12_coverage),
        ("density shadow", c13_saddle_density),
        ("snap-back certificate", c14_snapback),
        ("determinism", c15_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
