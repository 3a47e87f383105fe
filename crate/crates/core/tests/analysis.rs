use std::f64::consts::PI;

use proptest::prelude::*;
use singlap::analysis::*;
use singlap::geometry::{build_builtin, sample, AnnotatedCloud, Params, SampleMode, SingularityKind};
use singlap::operator::{apply_laplacian, LaplacianConfig, Query, ScalarField};

fn zs() -> Vec<f64> {
    (0..16).map(|k| 3.0 * k as f64 / 15.0).collect()
}

#[test]
fn boundary_approach_is_classified_boundary() {
    let m = build_builtin("interval", &Params::new()).unwrap();
    let cloud = sample(&m, 5000, SampleMode::Grid, 0).unwrap();
    let f = ScalarField::parse("expr:x", 1).unwrap();
    let t = 1e-4;
    let config = LaplacianConfig::new(t, 1).unwrap();
    let fit = profile_fit(&cloud, &f, &config, &approach_line(&[0.0], &[1.0], 0, t, &zs()), &FitOptions::default()).unwrap();
    let b = fit.fit(SingularityKind::Boundary).unwrap().residual;
    let i = fit.fit(SingularityKind::Intersection).unwrap().residual;
    assert!(5.0 * b <= i, "{b} vs {i}");
    assert_eq!(fit.classified, Some(SingularityKind::Boundary), "{:?}", fit.fits);
}

#[test]
fn fold_approach_is_classified_edge() {
    let angle = PI / 4.0;
    let m = build_builtin("folded_rectangle", &Params::new().with("fold_angle", angle)).unwrap();
    let cloud = sample(&m, 40_000, SampleMode::Grid, 0).unwrap();
    // the intrinsic y coordinate on both halves
    let f = ScalarField::parse(&format!("pieces:x2;x2*{} + x3*{}", angle.cos(), angle.sin()), 3).unwrap();
    let t = 1e-3;
    let config = LaplacianConfig::new(t, 2).unwrap();
    let approach = approach_line(&[0.0, 0.0, 0.0], &[0.0, -1.0, 0.0], 0, t, &zs());
    let fit = profile_fit(&cloud, &f, &config, &approach, &FitOptions::default()).unwrap();
    assert_eq!(fit.classified, Some(SingularityKind::Edge), "{:?}", fit.fits);
}

#[test]
fn interval_scaling_slopes() {
    let m = build_builtin("interval", &Params::new()).unwrap();
    let cloud = sample(&m, 5000, SampleMode::Grid, 0).unwrap();
    let grid = log_grid(1e-2, 1e-5, 7).unwrap();
    let base = LaplacianConfig::new(grid[0], 1).unwrap();
    let linear = ScalarField::parse("expr:x", 1).unwrap().sample(&cloud).unwrap();
    let at_end = select_point(&cloud, PointSelector::Near(SingularityKind::Boundary)).unwrap();
    let fit = scaling_fit(&cloud, &linear, &base, at_end, &grid).unwrap();
    assert!((-0.6..=-0.4).contains(&fit.slope), "{}", fit.slope);
    let square = ScalarField::parse("expr:x^2", 1).unwrap().sample(&cloud).unwrap();
    let mid = select_point(&cloud, PointSelector::Interior).unwrap();
    let fit = scaling_fit(&cloud, &square, &base, mid, &grid).unwrap();
    assert!(fit.slope.abs() <= 0.15, "{}", fit.slope);
    let mut csv = Vec::new();
    write_scaling_csv(&fit, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 8);
}

#[test]
fn deviation_is_reproducible_and_scales_with_n() {
    let m = build_builtin("interval", &Params::new()).unwrap();
    let f = ScalarField::parse("expr:x^2", 1).unwrap();
    let config = LaplacianConfig::new(1e-2, 1).unwrap();
    let a = deviation_mc(&m, &f, &[0.5], 0, 1000, &config, 200, 5, None).unwrap();
    let again = deviation_mc(&m, &f, &[0.5], 0, 1000, &config, 200, 5, None).unwrap();
    assert_eq!(a, again);
    let b = deviation_mc(&m, &f, &[0.5], 0, 2000, &config, 200, 5, None).unwrap();
    let ratio = a.std_dev / b.std_dev;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "{ratio}");
    // the oracle is the large-sample centre
    assert!((a.mean - a.oracle).abs() < 4.0 * a.std_dev / (200f64).sqrt());
    assert!(a.checks.iter().all(|c| c.within));
    assert!(deviation_mc(&m, &f, &[0.5], 0, 1000, &config, 50, 5, None).is_err());
}

#[test]
fn detection_on_three_intervals() {
    let m = build_builtin("three_intervals", &Params::new()).unwrap();
    let cloud = sample(&m, 2500, SampleMode::Grid, 0).unwrap();
    let f = ScalarField::parse("d1field", 2).unwrap();
    let t = 1e-4;
    let all: Vec<Query> = (0..cloud.len()).map(Query::Index).collect();
    let values = apply_laplacian(&LaplacianConfig::new(t, 1).unwrap(), &cloud, &f, &all).unwrap();
    let r = detect(&cloud, &values, t, 0.02, 5.0).unwrap();
    assert_eq!(r.flagged.len(), 50);
    assert_eq!(r.precision, Some(1.0));

    let bare = AnnotatedCloud::external(2, 1, cloud.coords().to_vec(), None).unwrap();
    let r = detect(&bare, &values, t, 0.02, 5.0).unwrap();
    assert!(r.confusion.is_none() && r.precision.is_none());
    assert_eq!(r.flagged.len(), 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_laws_are_recovered(exponent in -2.0f64..2.0, c in 0.01f64..100.0, count in 4usize..12) {
        let grid = log_grid(1e-1, 1e-6, count).unwrap();
        let values: Vec<f64> = grid.iter().map(|t| -c * t.powf(exponent)).collect();
        let fit = fit_power_law(&grid, &values).unwrap();
        prop_assert!((fit.slope - exponent).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn flagged_points_outscore_the_rest(values in proptest::collection::vec(-10.0f64..10.0, 4..300), q in 0.01f64..0.9) {
        let n = values.len();
        let cloud = AnnotatedCloud::external(1, 1, (0..n).map(|i| i as f64).collect(), None).unwrap();
        let r = detect(&cloud, &values, 1e-3, q, 5.0).unwrap();
        prop_assert_eq!(r.flagged.len(), ((q * n as f64).ceil() as usize).clamp(1, n));
        let lowest_flagged = r.flagged.iter().map(|&i| values[i].abs()).fold(f64::INFINITY, f64::min);
        for i in (0..n).filter(|i| !r.flagged.contains(i)) {
            prop_assert!(values[i].abs() <= lowest_flagged);
        }
    }

    #[test]
    fn profile_families_fit_their_own_curves(a in 0.2f64..3.0, c in 0.3f64..2.0) {
        let z = zs();
        let data: Vec<f64> = z.iter().map(|z| a * z * (-c * z * z).exp()).collect();
        let fit = fit_profiles(&z, &data, &FitOptions::default()).unwrap();
        prop_assert_eq!(fit.classified, Some(SingularityKind::Intersection));
        let best = fit.fit(SingularityKind::Intersection).unwrap();
        prop_assert!((best.params[0] - a).abs() < 1e-5 * a && (best.params[1] - c).abs() < 1e-5 * c);
    }
}
