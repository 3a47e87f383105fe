use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnotatedCloud, SingularityKind};
use crate::operator::{GraphLaplacian, LaplacianConfig, Query, ScalarField};
use crate::registry::{Named, Registry};

/// Parametric shape `φ(z)` of the rescaled operator along an approach to a
/// singular set, `z` being the distance in units of `√t`.
pub trait ProfileFamily: Named + Send + Sync {
    fn kind(&self) -> SingularityKind;
    fn param_names(&self) -> &'static [&'static str];
    fn eval(&self, params: &[f64], z: f64) -> f64;
    fn jacobian(&self, params: &[f64], z: f64) -> Vec<f64>;
    /// Starting point: `A = max|data|`, `C = 1`, `B = data at the smallest z`.
    fn initial(&self, z: &[f64], data: &[f64]) -> Vec<f64>;
}

fn max_abs(data: &[f64]) -> f64 {
    data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn value_at_smallest(z: &[f64], data: &[f64]) -> f64 {
    let k = (0..z.len()).min_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap_or(0);
    data.get(k).copied().unwrap_or(0.0)
}

/// `C e^{−z²}`.
pub struct BoundaryProfile;
/// `A z e^{−C z²}`.
pub struct IntersectionProfile;
/// `A z e^{−C z²} + B e^{−C z²}`.
pub struct EdgeProfile;

impl Named for BoundaryProfile {
    fn name(&self) -> &'static str {
        "boundary"
    }
}

impl ProfileFamily for BoundaryProfile {
    fn kind(&self) -> SingularityKind {
        SingularityKind::Boundary
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["C"]
    }
    fn eval(&self, p: &[f64], z: f64) -> f64 {
        p[0] * (-z * z).exp()
    }
    fn jacobian(&self, _p: &[f64], z: f64) -> Vec<f64> {
        vec![(-z * z).exp()]
    }
    fn initial(&self, z: &[f64], data: &[f64]) -> Vec<f64> {
        vec![value_at_smallest(z, data)]
    }
}

impl Named for IntersectionProfile {
    fn name(&self) -> &'static str {
        "intersection"
    }
}

impl ProfileFamily for IntersectionProfile {
    fn kind(&self) -> SingularityKind {
        SingularityKind::Intersection
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "C"]
    }
    fn eval(&self, p: &[f64], z: f64) -> f64 {
        p[0] * z * (-p[1] * z * z).exp()
    }
    fn jacobian(&self, p: &[f64], z: f64) -> Vec<f64> {
        let e = (-p[1] * z * z).exp();
        vec![z * e, -p[0] * z * z * z * e]
    }
    fn initial(&self, _z: &[f64], data: &[f64]) -> Vec<f64> {
        vec![max_abs(data), 1.0]
    }
}

impl Named for EdgeProfile {
    fn name(&self) -> &'static str {
        "edge"
    }
}

impl ProfileFamily for EdgeProfile {
    fn kind(&self) -> SingularityKind {
        SingularityKind::Edge
    }
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "B", "C"]
    }
    fn eval(&self, p: &[f64], z: f64) -> f64 {
        (p[0] * z + p[1]) * (-p[2] * z * z).exp()
    }
    fn jacobian(&self, p: &[f64], z: f64) -> Vec<f64> {
        let e = (-p[2] * z * z).exp();
        vec![z * e, e, -(p[0] * z + p[1]) * z * z * e]
    }
    fn initial(&self, z: &[f64], data: &[f64]) -> Vec<f64> {
        vec![max_abs(data), value_at_smallest(z, data), 1.0]
    }
}

pub fn profile_registry() -> Registry<dyn ProfileFamily> {
    let mut reg: Registry<dyn ProfileFamily> = Registry::new("profile family");
    reg.register(Arc::new(BoundaryProfile))
        .register(Arc::new(IntersectionProfile))
        .register(Arc::new(EdgeProfile));
    reg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub family: String,
    pub kind: SingularityKind,
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    pub z: Vec<f64>,
    pub data: Vec<f64>,
    pub fits: Vec<FamilyFit>,
    pub classified: Option<SingularityKind>,
}

impl ProfileFit {
    pub fn fit(&self, kind: SingularityKind) -> Option<&FamilyFit> {
        self.fits.iter().find(|f| f.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Residuals within `tie_band·Σdata²` of the best count as tied and the
    /// simpler family wins (Boundary < Intersection < Edge). Measured against
    /// the signal energy so that a richer family cannot win by fitting
    /// lattice-level bias.
    pub tie_band: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 500, tie_band: 1e-4 }
    }
}

fn ssr(f: &dyn ProfileFamily, p: &[f64], z: &[f64], data: &[f64]) -> f64 {
    z.iter().zip(data).map(|(zi, yi)| (yi - f.eval(p, *zi)).powi(2)).sum()
}

/// Levenberg–Marquardt with diagonal (Marquardt) damping.
pub fn levenberg_marquardt(
    f: &dyn ProfileFamily,
    z: &[f64],
    data: &[f64],
    start: Vec<f64>,
    max_iterations: usize,
) -> FamilyFit {
    let k = start.len();
    let scale: f64 = data.iter().map(|v| v * v).sum::<f64>().max(1e-300);
    let mut p = start;
    let mut cost = ssr(f, &p, z, data);
    let mut lambda = 1e-3;
    let mut converged = cost <= 1e-30 * scale;
    let mut iterations = 0;
    while !converged && iterations < max_iterations {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        for (zi, yi) in z.iter().zip(data) {
            let j = f.jacobian(&p, *zi);
            let r = yi - f.eval(&p, *zi);
            for a in 0..k {
                jtr[a] += j[a] * r;
                for b in 0..k {
                    jtj[(a, b)] += j[a] * j[b];
                }
            }
        }
        if jtr.norm() <= 1e-15 * scale.sqrt() {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut m = jtj.clone();
            for a in 0..k {
                m[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            let Some(step) = m.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let c = ssr(f, &trial, z, data);
            if c.is_finite() && c <= cost {
                let small_step = step.norm() <= 1e-12 * (1e-12 + p.iter().map(|v| v * v).sum::<f64>().sqrt());
                let small_gain = cost - c <= 1e-15 * cost;
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small_step || small_gain || cost <= 1e-30 * scale {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: a stationary point
            converged = true;
        }
    }
    FamilyFit {
        family: f.name().to_string(),
        kind: f.kind(),
        params: p,
        residual: cost,
        iterations,
        converged: converged && cost.is_finite(),
    }
}

/// Fits every family to `(z, data)` and classifies by smallest residual.
pub fn fit_profiles(z: &[f64], data: &[f64], opts: &FitOptions) -> Result<ProfileFit> {
    if z.len() != data.len() {
        return Err(Error::param("data", "one value per z required"));
    }
    let mut distinct = z.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 8 {
        return Err(Error::Insufficient("profile fits need at least 8 distinct distances".into()));
    }
    let reg = profile_registry();
    let mut fits: Vec<FamilyFit> = reg
        .iter()
        .map(|f| levenberg_marquardt(f.as_ref(), z, data, f.initial(z, data), opts.max_iterations))
        .collect();
    fits.sort_by_key(|f| f.kind);
    let scale: f64 = data.iter().map(|v| v * v).sum();
    let best = fits
        .iter()
        .filter(|f| f.converged)
        .map(|f| f.residual)
        .fold(f64::INFINITY, f64::min);
    // first (simplest) converged family within the tie band of the best
    let classified = fits
        .iter()
        .filter(|f| f.converged)
        .find(|f| f.residual - best <= opts.tie_band * scale)
        .map(|f| f.kind);
    Ok(ProfileFit { z: z.to_vec(), data: data.to_vec(), fits, classified })
}

/// Query point on an approach: ambient point, its piece and `z = r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachPoint {
    pub point: Vec<f64>,
    pub piece: usize,
    pub z: f64,
}

/// Points `x₀ + z√t·direction` for each `z`.
pub fn approach_line(x0: &[f64], direction: &[f64], piece: usize, t: f64, zs: &[f64]) -> Vec<ApproachPoint> {
    zs.iter()
        .map(|&z| ApproachPoint {
            point: x0.iter().zip(direction).map(|(a, b)| a + z * t.sqrt() * b).collect(),
            piece,
            z,
        })
        .collect()
}

/// Samples `√t·L_{n,t}f` along the approach and fits all families.
pub fn profile_fit(
    cloud: &AnnotatedCloud,
    field: &ScalarField,
    config: &LaplacianConfig,
    approach: &[ApproachPoint],
    opts: &FitOptions,
) -> Result<ProfileFit> {
    if approach.iter().any(|a| !(0.0..=3.0).contains(&a.z)) {
        return Err(Error::param("approach", "distances must lie in [0, 3] (units of √t)"));
    }
    let values = field.sample(cloud)?;
    let queries = approach
        .iter()
        .map(|a| {
            Ok(Query::External { point: a.point.clone(), piece: a.piece, value: Some(field.value(a.piece, &a.point)?) })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = GraphLaplacian::new(*config, cloud)?.apply(&values, &queries)?;
    let data: Vec<f64> = out.iter().map(|v| v * config.t.sqrt()).collect();
    let z: Vec<f64> = approach.iter().map(|a| a.z).collect();
    fit_profiles(&z, &data, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..16).map(|k| 3.0 * k as f64 / 15.0).collect()
    }

    #[test]
    fn recovers_intersection_parameters() {
        let z = grid();
        let data: Vec<f64> = z.iter().map(|z| IntersectionProfile.eval(&[1.0, 0.5], *z)).collect();
        let fit = fit_profiles(&z, &data, &FitOptions::default()).unwrap();
        let f = fit.fit(SingularityKind::Intersection).unwrap();
        assert!((f.params[0] - 1.0).abs() < 1e-6 && (f.params[1] - 0.5).abs() < 1e-6, "{:?}", f.params);
        assert!(f.residual < 1e-10);
        assert_eq!(fit.classified, Some(SingularityKind::Intersection));
    }

    #[test]
    fn families_reproduce_their_own_data() {
        let z = grid();
        let cases: Vec<(Box<dyn ProfileFamily>, Vec<f64>)> = vec![
            (Box::new(BoundaryProfile), vec![-0.7]),
            (Box::new(IntersectionProfile), vec![2.0, 0.8]),
            (Box::new(EdgeProfile), vec![1.5, -0.4, 1.3]),
        ];
        for (fam, p) in cases {
            let data: Vec<f64> = z.iter().map(|z| fam.eval(&p, *z)).collect();
            let fit = levenberg_marquardt(fam.as_ref(), &z, &data, fam.initial(&z, &data), 500);
            assert!(fit.converged && fit.residual < 1e-10, "{} {:?}", fam.name(), fit);
        }
    }

    #[test]
    fn boundary_data_prefers_boundary() {
        let z = grid();
        let data: Vec<f64> = z.iter().map(|z| -0.5 * (-z * z).exp()).collect();
        let fit = fit_profiles(&z, &data, &FitOptions::default()).unwrap();
        assert_eq!(fit.classified, Some(SingularityKind::Boundary));
        let b = fit.fit(SingularityKind::Boundary).unwrap().residual;
        let i = fit.fit(SingularityKind::Intersection).unwrap().residual;
        assert!(i > 5.0 * b);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_profiles(&[0.0, 1.0], &[1.0, 2.0], &FitOptions::default()).is_err());
    }
}
