use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singlap::geometry::{build_builtin, sample, AnnotatedCloud, Params, SampleMode};
use singlap::operator::{kernel, laplacian_matrix, LaplacianConfig};
use singlap::spectral::*;
use std::f64::consts::PI;

fn lanczos() -> SolverChoice {
    SolverChoice::default()
}

fn dense() -> SolverChoice {
    SolverChoice { name: "dense".into(), ..Default::default() }
}

#[test]
fn two_point_cloud() {
    let cloud = AnnotatedCloud::external(1, 1, vec![0.0, 0.1], None).unwrap();
    let config = LaplacianConfig::new(0.01, 1).unwrap();
    let w = kernel(&config, &[0.0], &[0.1]) / (2.0 * 0.01);
    let r = cloud_spectrum(&cloud, 0.01, 2, &lanczos()).unwrap();
    assert!(r.eigenvalues[0].abs() < 1e-15);
    assert!((r.eigenvalues[1] - 2.0 * w).abs() < 1e-12 * w);
}

#[test]
fn iterative_matches_dense_on_random_cloud() {
    let m = build_builtin("crossing_segments", &Params::new()).unwrap();
    let cloud = sample(&m, 500, SampleMode::Iid, 11).unwrap();
    let a = cloud_spectrum(&cloud, 2e-3, 20, &lanczos()).unwrap();
    let b = cloud_spectrum(&cloud, 2e-3, 20, &dense()).unwrap();
    assert!(a.all_converged() && b.all_converged());
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues).skip(1) {
        assert!((x - y).abs() <= 1e-8 * y.abs(), "{x} vs {y}");
    }
}

#[test]
fn null_vector_is_constant_and_residuals_small() {
    let m = build_builtin("folded_rectangle", &Params::new()).unwrap();
    let cloud = sample(&m, 1500, SampleMode::Grid, 0).unwrap();
    let r = cloud_spectrum(&cloud, 5e-4, 8, &lanczos()).unwrap();
    assert!(r.eigenvalues[0] <= 1e-8 * r.norm);
    let v = &r.eigenvectors[0];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    assert!(v.iter().all(|x| (x - mean).abs() <= 1e-6 * mean.abs()));
    for (res, w) in r.residuals.iter().zip(r.eigenvalues.windows(2)) {
        assert!(*res <= 1e-8 * r.norm);
        assert!(w[0] <= w[1]);
    }
}

#[test]
fn spectrum_invariant_under_permutation() {
    let m = build_builtin("three_intervals", &Params::new()).unwrap();
    let cloud = sample(&m, 900, SampleMode::Grid, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let shuffled = cloud.permuted(&perm);
    let a = cloud_spectrum(&cloud, 1e-3, 10, &lanczos()).unwrap();
    let b = cloud_spectrum(&shuffled, 1e-3, 10, &lanczos()).unwrap();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues).skip(1) {
        assert!((x - y).abs() <= 1e-10 * x.abs(), "{x} vs {y}");
    }
}

#[test]
fn diff_properties() {
    let s = build_builtin("rectangle", &Params::new()).unwrap();
    let f = build_builtin("folded_rectangle", &Params::new()).unwrap();
    let ca = sample(&s, 800, SampleMode::Grid, 0).unwrap();
    let cb = sample(&f, 800, SampleMode::Grid, 0).unwrap();
    let a = cloud_spectrum(&ca, 1e-3, 8, &lanczos()).unwrap();
    let b = cloud_spectrum(&cb, 1e-3, 8, &lanczos()).unwrap();
    assert_eq!(spectrum_diff(&a, &a, 7).unwrap(), 0.0);
    let na: f64 = a.eigenvalues[1..=7].iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.eigenvalues[1..=7].iter().map(|x| x * x).sum::<f64>().sqrt();
    let ab = spectrum_diff(&a, &b, 7).unwrap();
    let ba = spectrum_diff(&b, &a, 7).unwrap();
    assert!((ab - ba * nb / na).abs() <= 1e-14 * ab);
    assert!(spectrum_diff(&a, &b, 8).is_err());
}

#[test]
fn identity_fold_is_exact() {
    let s = build_builtin("rectangle", &Params::new()).unwrap();
    let f = build_builtin("folded_rectangle", &Params::new().with("fold_angle", 0.0)).unwrap();
    let r = fold_invariance(&s, &f, 6, 1000, 1e-3, 6, &lanczos()).unwrap();
    assert_eq!(r.diff_k, 0.0);
    for c in &r.correlations {
        assert!((c.correlation - 1.0).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn fold_desk_scale() {
    let s = build_builtin("rectangle", &Params::new()).unwrap();
    let f = build_builtin("folded_rectangle", &Params::new()).unwrap();
    let r = fold_invariance(&s, &f, 10, 2000, 3e-4, 10, &lanczos()).unwrap();
    assert!(r.diff_k <= 0.01, "{}", r.diff_k);
    assert!(r.correlations.iter().all(|c| c.correlation >= 0.95));
}

#[test]
fn correlations_ignore_sign_flips() {
    let s = build_builtin("rectangle", &Params::new()).unwrap();
    let f = build_builtin("folded_rectangle", &Params::new()).unwrap();
    let r = fold_invariance(&s, &f, 8, 1200, 6e-4, 8, &lanczos()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut flipped = r.folded.clone();
    for v in &mut flipped.eigenvectors {
        if rng.random::<bool>() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let again = mode_correlations(&r.smooth, &flipped, 8).unwrap();
    for (a, b) in r.correlations.iter().zip(&again) {
        assert!((a.correlation - b.correlation).abs() < 1e-14);
    }
}

#[test]
fn degenerate_modes_compared_as_subspaces() {
    // a square has doubly degenerate modes; rotating within the eigenspace
    // must not lower the reported correlation
    let sq = build_builtin("rectangle", &Params::new()).unwrap();
    let cloud = sample(&sq, 900, SampleMode::Grid, 0).unwrap();
    let a = cloud_spectrum(&cloud, 2e-3, 6, &lanczos()).unwrap();
    let mut b = a.clone();
    b.eigenvalues[2] = b.eigenvalues[1] * (1.0 + 1e-9);
    let (c, s) = (0.6, 0.8);
    let (v1, v2) = (b.eigenvectors[1].clone(), b.eigenvectors[2].clone());
    b.eigenvectors[1] = v1.iter().zip(&v2).map(|(x, y)| c * x + s * y).collect();
    b.eigenvectors[2] = v1.iter().zip(&v2).map(|(x, y)| -s * x + c * y).collect();
    let mut a2 = a.clone();
    a2.eigenvalues[2] = a2.eigenvalues[1] * (1.0 + 1e-9);
    let corr = mode_correlations(&a2, &b, 3).unwrap();
    assert!(corr[0].subspace && corr[1].subspace && !corr[2].subspace);
    assert!((corr[0].correlation - 1.0).abs() < 1e-12);
}

fn interval_setup() -> (singlap::geometry::SingularManifold, AnnotatedCloud, SpectrumReport) {
    let m = build_builtin("interval", &Params::new()).unwrap();
    let cloud = sample(&m, 4000, SampleMode::Grid, 0).unwrap();
    let r = cloud_spectrum(&cloud, 1e-4, 6, &lanczos()).unwrap();
    (m, cloud, r)
}

#[test]
fn neumann_modes_on_interval() {
    let (m, cloud, r) = interval_setup();
    let report = neumann_check(&r, &cloud, &m, 5).unwrap();
    assert_eq!(report.modes[0].stats.normalized_max, 0.0);
    for mode in &report.modes[1..] {
        let j = mode.mode as f64;
        let cos: Vec<f64> = (0..cloud.len()).map(|i| (j * PI * cloud.point(i)[0]).cos()).collect();
        assert!(abs_correlation(&r.eigenvectors[mode.mode], &cos) >= 0.99);
        assert!(mode.stats.normalized_max <= 0.1, "{mode:?}");
        let sin: Vec<f64> = (0..cloud.len()).map(|i| (j * PI * cloud.point(i)[0]).sin()).collect();
        assert!(boundary_derivative(&sin, &cloud, &m, 1e-4).unwrap().normalized_max >= 0.5);
    }
    let constant = vec![0.7; cloud.len()];
    assert_eq!(boundary_derivative(&constant, &cloud, &m, 1e-4).unwrap().max_abs, 0.0);
}

#[test]
fn neumann_needs_points_near_boundary() {
    let m = build_builtin("interval", &Params::new()).unwrap();
    let cloud = sample(&m, 40, SampleMode::Grid, 0).unwrap();
    let values: Vec<f64> = (0..40).map(|i| i as f64).collect();
    assert!(boundary_derivative(&values, &cloud, &m, 1e-4).is_err());
}

#[test]
fn codim2_locality_decays() {
    let pair = build_builtin("crossing_planes_r4", &Params::new()).unwrap();
    let apart = build_builtin("crossing_planes_r4", &Params::new().with("separation", 2.0)).unwrap();
    let same = codim2_locality(&apart, &apart, 300, &[1e-2], 4, &lanczos()).unwrap();
    assert_eq!(same.entries[0].diff_k, 0.0);
    let r = codim2_locality(&pair, &apart, 500, &LOCALITY_T_GRID, 5, &lanczos()).unwrap();
    assert!(r.entries[2].diff_k < r.entries[0].diff_k);
}

#[test]
fn eigenvector_csv_layout() {
    let (_, _, r) = interval_setup();
    let mut buf = Vec::new();
    write_eigenvectors_csv(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index,phi_0,phi_1,phi_2,phi_3,phi_4,phi_5");
    assert_eq!(lines.count(), r.n);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["eigenvalues"].as_array().unwrap().len(), 6);
}

#[test]
fn unknown_solver_is_reported() {
    let cloud = AnnotatedCloud::external(1, 1, vec![0.0, 0.1], None).unwrap();
    let l = laplacian_matrix(&LaplacianConfig::new(0.01, 1).unwrap(), &cloud, None).unwrap();
    let err = solve_spectrum(&l, 1, "arpack", &SolveOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "unknown_name");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lanczos_agrees_with_dense(seed in 0u64..1000, n in 80usize..160, t in 5e-3f64..3e-2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
        let cloud = AnnotatedCloud::external(2, 2, coords, None).unwrap();
        let a = cloud_spectrum(&cloud, t, 6, &lanczos()).unwrap();
        let b = cloud_spectrum(&cloud, t, 6, &dense()).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-9 * a.norm);
        }
    }
}
