use std::f64::consts::PI;

use proptest::prelude::*;
use singlap::geometry::*;
use singlap::numeric::{dist2, norm};

fn names() -> Vec<&'static str> {
    builtin_registry().names()
}

/// Length of the part of a segment `a + s·u`, `s ∈ [lo, hi]`, inside the
/// ball of radius `rho` about the origin.
fn chord(a: &[f64], u: &[f64], (lo, hi): (f64, f64), rho: f64) -> f64 {
    let b: f64 = a.iter().zip(u).map(|(x, y)| x * y).sum();
    let c: f64 = a.iter().map(|x| x * x).sum::<f64>() - rho * rho;
    let disc = b * b - c;
    if disc <= 0.0 {
        return 0.0;
    }
    let (s0, s1) = (-b - disc.sqrt(), -b + disc.sqrt());
    (s1.min(hi) - s0.max(lo)).max(0.0)
}

#[test]
fn iid_mass_near_crossing_matches_binomial() {
    let m = build_builtin("crossing_segments", &Params::new().with("theta", PI / 2.0)).unwrap();
    let cloud = sample(&m, 1000, SampleMode::Iid, 42).unwrap();
    let inside = (0..cloud.len()).filter(|&i| norm(cloud.point(i)) <= 0.1).count() as f64;
    // uniform density over total length 2; each segment meets the ball in a chord of length 0.2
    let total = chord(&[0.0, 0.0], &[1.0, 0.0], (-0.5, 0.5), 1e9) + chord(&[0.0, 0.0], &[0.0, 1.0], (-0.5, 0.5), 1e9);
    let p = (chord(&[0.0, 0.0], &[1.0, 0.0], (-0.5, 0.5), 0.1) + chord(&[0.0, 0.0], &[0.0, 1.0], (-0.5, 0.5), 0.1)) / total;
    let mean = 1000.0 * p;
    let sd = (1000.0 * p * (1.0 - p)).sqrt();
    assert!((inside - mean).abs() <= 3.0 * sd, "{inside} vs {mean} ± {sd}");
}

#[test]
fn piece_masses_follow_lengths() {
    let m = build_builtin("three_intervals", &Params::new()).unwrap();
    let cloud = sample(&m, 25_000, SampleMode::Iid, 3).unwrap();
    let lengths: [f64; 3] = [1.2, 0.8, 0.5];
    for (k, len) in lengths.iter().enumerate() {
        let count = cloud.pieces().iter().filter(|&&p| p == k).count() as f64;
        let p = len / 2.5;
        let sd = (25_000.0 * p * (1.0 - p)).sqrt();
        assert!((count - 25_000.0 * p).abs() <= 4.0 * sd, "piece {k}: {count}");
    }
    let grid = sample(&m, 2500, SampleMode::Grid, 0).unwrap();
    assert_eq!(grid.len(), 2500);
    assert_eq!(grid.pieces().iter().filter(|&&p| p == 0).count(), 1200);
}

#[test]
fn fold_edge_annotation() {
    let m = build_builtin("folded_rectangle", &Params::new().with("fold_angle", PI / 4.0)).unwrap();
    // 0.05 from the fold line on the lower piece
    let a = annotate(&m, &[0.1, -0.05, 0.0], 0, f64::INFINITY).unwrap();
    assert_eq!(a.kind, Some(SingularityKind::Edge));
    assert!((a.r_ambient - 0.05).abs() < 1e-15);
    assert!((a.theta.unwrap() - 0.75 * PI).abs() < 1e-12);
    // normals point from the fold into each piece
    assert!((a.n1[1] + 1.0).abs() < 1e-15);
    let n2 = a.n2.unwrap();
    assert!((n2[1] - (PI / 4.0).cos()).abs() < 1e-15 && (n2[2] - (PI / 4.0).sin()).abs() < 1e-15);
}

#[test]
fn annotations_agree_with_distance_to_loci() {
    for name in names() {
        let m = build_builtin(name, &Params::new()).unwrap();
        let cloud = sample(&m, 600, SampleMode::Iid, 5).unwrap();
        for i in 0..cloud.len() {
            let a = cloud.annotation(i).unwrap();
            let piece = cloud.piece_of(i);
            let nearest = m
                .singularities()
                .iter()
                .filter(|s| s.touches(piece))
                .map(|s| s.locus.nearest(cloud.point(i)).1)
                .fold(f64::INFINITY, f64::min);
            assert!((a.r_ambient - nearest).abs() < 1e-12 || (a.r_ambient.is_infinite() && nearest.is_infinite()), "{name} {i}");
            if a.r_ambient.is_finite() {
                assert!((dist2(&a.x0, cloud.point(i)).sqrt() - a.r_ambient).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samples_lie_on_their_pieces(which in 0usize..10, seed in any::<u64>(), n in 2usize..400) {
        let name = names()[which % names().len()];
        let m = build_builtin(name, &Params::new()).unwrap();
        for mode in [SampleMode::Iid, SampleMode::Grid] {
            // tiny grids may starve a piece of its two lattice points
            let Ok(c) = sample(&m, n, mode, seed) else {
                prop_assert!(mode == SampleMode::Grid);
                continue;
            };
            if mode == SampleMode::Iid || m.intrinsic_dim() == 1 {
                prop_assert_eq!(c.len(), n);
            }
            prop_assert!(c.chart_residual(&m).unwrap() < 1e-12);
            for i in 0..c.len() {
                let pc = &m.pieces()[c.piece_of(i)];
                prop_assert!(pc.locate(c.point(i), 1e-9).is_ok());
            }
        }
    }

    #[test]
    fn csv_and_json_round_trip(which in 0usize..10, seed in any::<u64>(), n in 2usize..200) {
        let name = names()[which % names().len()];
        let m = build_builtin(name, &Params::new()).unwrap();
        let c = sample(&m, n, SampleMode::Iid, seed).unwrap();
        let mut buf = Vec::new();
        write_cloud_csv(&c, &mut buf).unwrap();
        let back = read_cloud_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.coords(), c.coords());
        prop_assert_eq!(back.pieces(), c.pieces());
        prop_assert_eq!(back.seed, seed);
        let mut json = Vec::new();
        write_cloud_json(&c, &mut json).unwrap();
        let back = read_cloud_json(json.as_slice()).unwrap();
        prop_assert_eq!(back.coords(), c.coords());
    }

    #[test]
    fn iid_is_reproducible(seed in any::<u64>()) {
        let m = build_builtin("glued_half_planes", &Params::new()).unwrap();
        let a = sample(&m, 300, SampleMode::Iid, seed).unwrap();
        let b = sample(&m, 300, SampleMode::Iid, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn chord_oracle_matches_iid_frequency(rho in 0.05f64..0.45, seed in 0u64..1000) {
        let m = build_builtin("crossing_segments", &Params::new().with("theta", PI / 3.0)).unwrap();
        let n = 2000;
        let c = sample(&m, n, SampleMode::Iid, seed).unwrap();
        let inside = (0..n).filter(|&i| norm(c.point(i)) <= rho).count() as f64;
        let u2 = [(PI / 3.0).cos(), (PI / 3.0).sin()];
        let p = (chord(&[0.0, 0.0], &[1.0, 0.0], (-0.5, 0.5), rho) + chord(&[0.0, 0.0], &u2, (-0.5, 0.5), rho)) / 2.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        prop_assert!((inside - n as f64 * p).abs() <= 4.5 * sd);
    }
}
