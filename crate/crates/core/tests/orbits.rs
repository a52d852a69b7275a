use std::f64::consts::PI;

use multichaos::orbits::{
    classify, covering_radius, find_periodic, orbit_residual, preimages, snapback_search,
    stable_set_sample, unstable_manifold, ManifoldOptions, PeriodicOrbit, StabilityClass,
};
use multichaos::spectral::{eigen_data, ConeParams};
use multichaos::{Error, IntegerMatrix, TorusMap, TorusPoint};

fn reference(t: f64) -> TorusMap {
    TorusMap::reference(t, 0.05)
}

fn fixed(t: f64, class: StabilityClass) -> PeriodicOrbit {
    find_periodic(&reference(t), 1, 16)
        .unwrap()
        .into_iter()
        .find(|o| o.class == class)
        .unwrap()
}

#[test]
fn period_one_at_t0() {
    let orbits = find_periodic(&reference(0.0), 1, 16).unwrap();
    assert_eq!(orbits.len(), 2);
    let (r, s) = (&orbits[0], &orbits[1]);
    assert_eq!(r.class, StabilityClass::Repeller);
    assert_eq!(s.class, StabilityClass::Saddle);
    assert!(r.points[0].distance(&TorusPoint::new(0.0, 0.0)) < 1e-12);
    assert!(s.points[0].distance(&TorusPoint::new(0.0, 0.5)) < 1e-12);
    assert!((r.multipliers[0].re - 3.0).abs() < 1e-8);
    assert!((r.multipliers[1].re - (1.0 + 0.1 * PI)).abs() < 1e-8);
    assert!((s.multipliers[1].re - (1.0 - 0.1 * PI)).abs() < 1e-8);
    assert!(r.residual < 1e-10 && s.residual < 1e-10);
    assert_eq!(r.lattice_shift, [0, 0]);
}

#[test]
fn period_one_at_positive_t() {
    let orbits = find_periodic(&reference(0.02), 1, 16).unwrap();
    let saddles: Vec<_> = orbits.iter().filter(|o| o.class == StabilityClass::Saddle).collect();
    let reps: Vec<_> = orbits.iter().filter(|o| o.class == StabilityClass::Repeller).collect();
    assert_eq!((saddles.len(), reps.len()), (1, 1));
    // sin 2 pi y = -t / eps
    let y0 = (-0.02f64 / 0.05).asin() / (2.0 * PI);
    let ys = 0.5 - y0;
    let yr = 1.0 + y0;
    assert!((saddles[0].points[0].y() - ys).abs() < 1e-10);
    assert!((reps[0].points[0].y() - yr).abs() < 1e-10);
    assert!((ys - 0.5655).abs() < 1e-4 && (yr - 0.9345).abs() < 1e-4);
}

#[test]
fn orbits_reverify_and_rotation_invariance() {
    let map = reference(0.0);
    for p in 2..=5 {
        for o in find_periodic(&map, p, 8).unwrap() {
            assert_eq!(o.points.len(), p);
            assert!(orbit_residual(&map, &o.points) < 1e-9);
            let (_, m0) = classify(&map, &o.points).unwrap();
            let mut rot = o.points.clone();
            rot.rotate_left(1);
            let (_, m1) = classify(&map, &rot).unwrap();
            for k in 0..2 {
                assert!((m0[k] - m1[k]).norm() < 1e-9);
            }
        }
    }
}

#[test]
fn refinement_gives_superset() {
    let map = reference(0.013);
    for p in 1..=4 {
        let coarse = find_periodic(&map, p, 4).unwrap();
        let fine = find_periodic(&map, p, 8).unwrap();
        for o in &coarse {
            assert!(fine.iter().any(|f| f.points[0].distance(&o.points[0]) < 1e-8));
        }
    }
}

#[test]
fn saddle_density_non_increasing() {
    let map = reference(0.0);
    let mut pts = Vec::new();
    let mut prev = f64::INFINITY;
    for p in 1..=6 {
        for o in find_periodic(&map, p, 16).unwrap() {
            if o.class == StabilityClass::Saddle {
                pts.extend(o.points);
            }
        }
        let r = covering_radius(&pts, 200).unwrap();
        assert!(r <= prev);
        prev = r;
    }
}

#[test]
fn classify_rejects_non_orbits() {
    assert!(matches!(
        classify(&reference(0.0), &[TorusPoint::new(0.3, 0.3)]),
        Err(Error::NotPeriodic { .. })
    ));
}

#[test]
fn unstable_manifold_in_cone_and_expanding() {
    let map = reference(0.0);
    let saddle = fixed(0.0, StabilityClass::Saddle);
    let opts = ManifoldOptions::default();
    let man = unstable_manifold(&map, &saddle, 3.0, &opts).unwrap();
    assert!(man.arclength >= 3.0);
    let u = nalgebra::Vector2::new(man.unstable_direction[0], man.unstable_direction[1]);
    let first = (man.lifts[1] - man.lifts[0]).normalize();
    assert!(first.dot(&u).clamp(-1.0, 1.0).acos() < 1e-4);
    assert!((man.lifts[0] - saddle.points[0].lift()).norm() <= 1.0001 * opts.seed_eps);
    let spec = eigen_data(map.matrix()).unwrap();
    let cone = ConeParams::new(&spec, 2.0, 1.0).unwrap();
    for w in man.lifts.windows(2) {
        let d = w[1] - w[0];
        if d.norm() > 0.0 {
            assert!(cone.contains(&d));
        }
        assert!(d.norm() <= opts.chord_tol * 1.0001);
    }
    let g = &man.generation_lengths;
    for k in 1..g.len() {
        assert!(g[k] >= 2.0 * g[k - 1]);
    }
    // Images of polyline points lie near the polyline.
    let n = man.lifts.len();
    for q in man.lifts.iter().take(n / 4).step_by(97) {
        let img = map.lift_eval(q);
        let near = man
            .lifts
            .iter()
            .map(|p| (p - img).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(near < opts.chord_tol);
    }
}

#[test]
fn unstable_manifold_needs_saddle() {
    let rep = fixed(0.0, StabilityClass::Repeller);
    assert_eq!(
        unstable_manifold(&reference(0.0), &rep, 1.0, &ManifoldOptions::default()),
        Err(Error::NotSaddle)
    );
}

#[test]
fn linear_preimages() {
    let f = TorusMap::linear(IntegerMatrix::new([[3, 0], [1, 1]]).unwrap());
    let pre = preimages(&f, &TorusPoint::new(0.0, 0.0), 9);
    assert_eq!(pre.len(), 3);
    for (k, p) in pre.iter().enumerate() {
        assert!((p.x() - k as f64 / 3.0).abs() < 1e-12);
        assert!(f.eval(p).distance(&TorusPoint::new(0.0, 0.0)) < 1e-12);
    }
}

#[test]
fn preimage_levels_grow_like_powers_of_three() {
    let rep = fixed(0.0, StabilityClass::Repeller);
    let tree = stable_set_sample(&reference(0.0), &rep, 6, 12).unwrap();
    for (d, level) in tree.levels.iter().enumerate() {
        assert_eq!(level.len(), 3usize.pow(d as u32));
    }
}

#[test]
fn preimage_cloud_is_dense() {
    let rep = fixed(0.0, StabilityClass::Repeller);
    let tree = stable_set_sample(&reference(0.0), &rep, 10, 12).unwrap();
    let r = covering_radius(&tree.all_points(), 200).unwrap();
    assert!(r < 0.05, "covering radius {r}");
}

#[test]
fn snapback_certificate() {
    let map = reference(0.0);
    let rep = fixed(0.0, StabilityClass::Repeller);
    let cert = snapback_search(&map, &rep, 0.1, 12).unwrap().expect("certificate");
    assert!(cert.residual < 1e-9);
    assert!(cert.jac_det.abs() > 1e-8);
    assert!(cert.dist_to_r > 0.0 && cert.dist_to_r < 0.1);
    let end = map.orbit(&cert.q, cert.n)[cert.n];
    assert!(end.distance(&rep.points[0]) < 1e-9);
    // A larger neighbourhood still yields a certificate, no later than before.
    let wider = snapback_search(&map, &rep, 0.2, 12).unwrap().expect("certificate");
    assert!(wider.n <= cert.n);
    let saddle = fixed(0.0, StabilityClass::Saddle);
    assert_eq!(snapback_search(&map, &saddle, 0.1, 3), Err(Error::NotRepeller));
}
