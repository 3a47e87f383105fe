use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chart::{Chart, ParamBox};
use crate::error::{Error, Result};
use crate::numeric::{dot, integrate_box, norm, sub};

/// Role of one face of a piece's parameter box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaceRole {
    /// True manifold boundary.
    Boundary,
    /// Face where another piece is glued on. Exactly one of the two glued
    /// pieces owns the shared lattice points in grid sampling.
    Seam { owned: bool },
    /// Face that is neither a boundary nor glued: it lies on some other
    /// piece's interior (e.g. the far side of a crossing).
    Open,
}

/// A smooth piece: chart, parameter box, and the role of each box face
/// (`faces[axis] = [low face, high face]`).
#[derive(Debug, Clone)]
pub struct ManifoldPiece {
    pub id: usize,
    pub label: String,
    pub chart: Arc<dyn Chart>,
    pub domain: ParamBox,
    pub faces: Vec<[FaceRole; 2]>,
}

impl ManifoldPiece {
    pub fn new(
        id: usize,
        label: impl Into<String>,
        chart: Arc<dyn Chart>,
        domain: ParamBox,
        faces: Vec<[FaceRole; 2]>,
    ) -> Self {
        Self {
            id,
            label: label.into(),
            chart,
            domain,
            faces,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.chart.param_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.chart.ambient_dim()
    }

    /// Chart parameters of `x` if `x` lies on this piece within `tol`,
    /// otherwise the residual distance.
    pub fn locate(&self, x: &[f64], tol: f64) -> std::result::Result<Vec<f64>, f64> {
        let u = self.chart.invert(x);
        let back = self.chart.point(&u);
        let residual = norm(&sub(&back, x));
        let scale = 1.0 + norm(x);
        if residual <= tol * scale && self.domain.contains(&u, tol * scale) {
            Ok(u)
        } else {
            let outside: f64 = u
                .iter()
                .zip(self.domain.lo.iter().zip(&self.domain.hi))
                .map(|(v, (a, b))| (a - v).max(v - b).max(0.0))
                .fold(0.0, f64::max);
            Err(residual.max(outside))
        }
    }

    /// d-volume of the piece.
    pub fn volume(&self) -> f64 {
        let chart = &self.chart;
        integrate_box(&self.domain.lo, &self.domain.hi, 64, |u| chart.volume_factor(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularityKind {
    Boundary,
    Intersection,
    Edge,
}

impl SingularityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SingularityKind::Boundary => "boundary",
            SingularityKind::Intersection => "intersection",
            SingularityKind::Edge => "edge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(SingularityKind::Boundary),
            "intersection" => Ok(SingularityKind::Intersection),
            "edge" => Ok(SingularityKind::Edge),
            other => Err(Error::Unknown {
                what: "singularity kind",
                name: other.to_string(),
                available: "boundary, edge, intersection".into(),
            }),
        }
    }
}

impl fmt::Display for SingularityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bounded affine subset `origin + Σ s_k dirs[k]`, `s_k ∈ extents[k]`, with
/// orthonormal directions. A point locus has no directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLocus {
    pub origin: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub extents: Vec<(f64, f64)>,
}

impl AffineLocus {
    pub fn point(origin: Vec<f64>) -> Self {
        Self {
            origin,
            directions: Vec::new(),
            extents: Vec::new(),
        }
    }

    pub fn segment(origin: Vec<f64>, direction: Vec<f64>, extent: (f64, f64)) -> Self {
        let n = norm(&direction);
        let dir = direction.iter().map(|x| x / n).collect();
        Self {
            origin,
            directions: vec![dir],
            extents: vec![(extent.0 * n, extent.1 * n)],
        }
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Nearest locus point to `x` and its distance.
    pub fn nearest(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let rel = sub(x, &self.origin);
        let mut x0 = self.origin.clone();
        for (dir, (lo, hi)) in self.directions.iter().zip(&self.extents) {
            let s = dot(&rel, dir).clamp(*lo, *hi);
            for (o, d) in x0.iter_mut().zip(dir) {
                *o += s * d;
            }
        }
        let dist = norm(&sub(x, &x0));
        (x0, dist)
    }

    /// Evenly spread sample points on the locus (`per_dim` per direction).
    pub fn samples(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.origin.clone()];
        for (dir, (lo, hi)) in self.directions.iter().zip(&self.extents) {
            let mut next = Vec::new();
            for base in &out {
                for k in 0..per_dim.max(1) {
                    let s = if per_dim <= 1 {
                        0.5 * (lo + hi)
                    } else {
                        lo + (hi - lo) * k as f64 / (per_dim - 1) as f64
                    };
                    next.push(base.iter().zip(dir).map(|(b, d)| b + s * d).collect());
                }
            }
            out = next;
        }
        out
    }
}

/// One singular set: the pieces it involves, its locus and, for boundaries
/// and edges, each involved piece's inward unit normal (orthogonal to the
/// locus, tangent to the piece, pointing into the piece).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularitySpec {
    pub kind: SingularityKind,
    pub pieces: Vec<usize>,
    pub locus: AffineLocus,
    pub inward: Vec<Vec<f64>>,
    /// Angle between the two pieces at the locus (constant on flat loci).
    pub angle: Option<f64>,
}

impl SingularitySpec {
    pub fn boundary(piece: usize, locus: AffineLocus, inward: Vec<f64>) -> Self {
        Self {
            kind: SingularityKind::Boundary,
            pieces: vec![piece],
            locus,
            inward: vec![inward],
            angle: None,
        }
    }

    pub fn intersection(a: usize, b: usize, locus: AffineLocus, angle: f64) -> Self {
        Self {
            kind: SingularityKind::Intersection,
            pieces: vec![a, b],
            locus,
            inward: Vec::new(),
            angle: Some(angle),
        }
    }

    pub fn edge(a: usize, b: usize, locus: AffineLocus, inward_a: Vec<f64>, inward_b: Vec<f64>) -> Self {
        let c = dot(&inward_a, &inward_b) / (norm(&inward_a) * norm(&inward_b));
        Self {
            kind: SingularityKind::Edge,
            pieces: vec![a, b],
            locus,
            inward: vec![inward_a, inward_b],
            angle: Some(c.clamp(-1.0, 1.0).acos()),
        }
    }

    pub fn touches(&self, piece: usize) -> bool {
        self.pieces.contains(&piece)
    }
}

/// Unnormalised density shape on one piece, as a function of the ambient point.
pub trait DensityProfile: Send + Sync + fmt::Debug {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct UniformProfile;

impl DensityProfile for UniformProfile {
    fn value(&self, _x: &[f64]) -> f64 {
        1.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// `exp(⟨slope, x⟩)`.
#[derive(Debug, Clone)]
pub struct ExponentialProfile {
    pub slope: Vec<f64>,
}

impl DensityProfile for ExponentialProfile {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.slope, x).exp()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let v = self.value(x);
        self.slope.iter().map(|s| s * v).collect()
    }
}

/// Piecewise-smooth probability density, normalised over the union.
#[derive(Debug, Clone)]
pub struct Density {
    profiles: Vec<Arc<dyn DensityProfile>>,
    scale: f64,
    masses: Vec<f64>,
    lower: f64,
    upper: f64,
}

impl Density {
    pub fn value(&self, piece: usize, x: &[f64]) -> f64 {
        self.scale * self.profiles[piece].value(x)
    }

    pub fn gradient(&self, piece: usize, x: &[f64]) -> Vec<f64> {
        self.profiles[piece]
            .gradient(x)
            .into_iter()
            .map(|g| g * self.scale)
            .collect()
    }

    /// Probability mass of each piece.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Lower bound `a` of the density.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper bound `b` of the density.
    pub fn upper(&self) -> f64 {
        self.upper
    }
}

/// Union of smooth pieces together with its singular sets and sampling density.
#[derive(Debug, Clone)]
pub struct SingularManifold {
    pub name: String,
    pieces: Vec<ManifoldPiece>,
    singularities: Vec<SingularitySpec>,
    density: Density,
}

/// Quadrature nodes per dimension used to normalise densities.
const DENSITY_NODES: usize = 128;

impl SingularManifold {
    pub fn new(
        name: impl Into<String>,
        pieces: Vec<ManifoldPiece>,
        singularities: Vec<SingularitySpec>,
        profiles: Vec<Arc<dyn DensityProfile>>,
    ) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::param("pieces", "at least one piece required"));
        }
        let d = pieces[0].intrinsic_dim();
        let n = pieces[0].ambient_dim();
        for (i, p) in pieces.iter().enumerate() {
            if p.id != i {
                return Err(Error::param("pieces", format!("piece {i} has id {}", p.id)));
            }
            if p.intrinsic_dim() != d {
                return Err(Error::param(
                    "pieces",
                    "mixed intrinsic dimensions are not supported",
                ));
            }
            if p.ambient_dim() != n || d > n {
                return Err(Error::param("pieces", "inconsistent ambient dimension"));
            }
            if p.domain.dim() != d || p.faces.len() != d {
                return Err(Error::param("pieces", format!("piece {i} box/face arity mismatch")));
            }
        }
        for (k, s) in singularities.iter().enumerate() {
            let expected = match s.kind {
                SingularityKind::Boundary => 1,
                _ => 2,
            };
            if s.pieces.len() != expected || s.pieces.iter().any(|&p| p >= pieces.len()) {
                return Err(Error::param(
                    "singularities",
                    format!("singularity {k} ({}) references invalid pieces", s.kind),
                ));
            }
            if expected == 2 && s.pieces[0] == s.pieces[1] {
                return Err(Error::param("singularities", format!("singularity {k} repeats a piece")));
            }
            if s.locus.dim() + 1 > d {
                return Err(Error::param("singularities", format!("singularity {k} locus too large")));
            }
            match (s.kind, s.angle) {
                (SingularityKind::Intersection, Some(a)) if a > 0.0 && a < std::f64::consts::PI => {}
                // a flat seam (angle π) is admitted for edges
                (SingularityKind::Edge, Some(a)) if a > 0.0 && a <= std::f64::consts::PI + 1e-12 => {}
                (SingularityKind::Boundary, _) => {}
                _ => {
                    return Err(Error::param(
                        "theta",
                        format!("singularity {k}: angle must lie in (0, π)"),
                    ))
                }
            }
            for v in &s.inward {
                if (norm(v) - 1.0).abs() > 1e-12 {
                    return Err(Error::param("singularities", format!("singularity {k} normal not unit")));
                }
            }
        }
        if profiles.len() != pieces.len() {
            return Err(Error::param("density", "one density profile per piece required"));
        }

        // normalise by quadrature
        let mut raw_masses = Vec::with_capacity(pieces.len());
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (piece, prof) in pieces.iter().zip(&profiles) {
            let chart = &piece.chart;
            let mass = integrate_box(&piece.domain.lo, &piece.domain.hi, DENSITY_NODES, |u| {
                prof.value(&chart.point(u)) * chart.volume_factor(u)
            });
            raw_masses.push(mass);
            // bounds from a lattice including box corners
            for u in lattice_with_corners(&piece.domain, 33) {
                let v = prof.value(&chart.point(&u));
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let total: f64 = raw_masses.iter().sum();
        if !(total.is_finite() && total > 0.0 && lo > 0.0) {
            return Err(Error::param("density", "density must be positive and integrable"));
        }
        let scale = 1.0 / total;
        let density = Density {
            profiles,
            scale,
            masses: raw_masses.iter().map(|m| m / total).collect(),
            lower: lo * scale,
            upper: hi * scale,
        };
        Ok(Self {
            name: name.into(),
            pieces,
            singularities,
            density,
        })
    }

    pub fn pieces(&self) -> &[ManifoldPiece] {
        &self.pieces
    }

    pub fn piece(&self, id: usize) -> Result<&ManifoldPiece> {
        self.pieces
            .get(id)
            .ok_or_else(|| Error::param("piece", format!("no piece {id}")))
    }

    pub fn singularities(&self) -> &[SingularitySpec] {
        &self.singularities
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.pieces[0].intrinsic_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.pieces[0].ambient_dim()
    }

    /// Integral of the density over all pieces using `nodes` quadrature nodes
    /// per dimension; 1 up to quadrature error.
    pub fn total_mass(&self, nodes: usize) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let chart = &p.chart;
                integrate_box(&p.domain.lo, &p.domain.hi, nodes, |u| {
                    self.density.value(p.id, &chart.point(u)) * chart.volume_factor(u)
                })
            })
            .sum()
    }
}

fn lattice_with_corners(domain: &ParamBox, per_dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for (a, b) in domain.lo.iter().zip(&domain.hi) {
        let mut next = Vec::new();
        for base in &out {
            for k in 0..per_dim {
                let mut v: Vec<f64> = base.clone();
                v.push(a + (b - a) * k as f64 / (per_dim - 1) as f64);
                next.push(v);
            }
        }
        out = next;
    }
    out
}
