use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::chart::{AffineChart, Chart, ParamBox};
use super::manifold::{
    AffineLocus, DensityProfile, ExponentialProfile, FaceRole, ManifoldPiece, SingularManifold,
    SingularitySpec, UniformProfile,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::registry::{Named, Registry};

/// Numeric builtin parameters keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(BTreeMap<String, f64>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    /// Parses `key=value` pairs; values may be constant expressions such as `pi/4`.
    pub fn parse<'a>(pairs: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut out = Self::new();
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
            out.0.insert(k.trim().to_string(), Expr::parse_constant(v.trim())?);
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }

    /// Fills in defaults and rejects names the builtin does not know.
    fn resolve(&self, builtin: &str, defaults: &[(&'static str, f64)]) -> Result<Params> {
        for key in self.0.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                let known: Vec<_> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(Error::param(
                    key.clone(),
                    format!("not a parameter of `{builtin}` (known: {})", known.join(", ")),
                ));
            }
        }
        let mut out = Params::new();
        for (k, v) in defaults {
            let value = self.get(k).unwrap_or(*v);
            if !value.is_finite() {
                return Err(Error::param(*k, "must be finite"));
            }
            out.0.insert(k.to_string(), value);
        }
        Ok(out)
    }

    fn req(&self, key: &str) -> f64 {
        self.0[key]
    }
}

/// A named geometry constructor.
pub trait BuiltinGeometry: Named + Send + Sync {
    fn description(&self) -> &'static str;
    /// Parameter names and their default values.
    fn defaults(&self) -> Vec<(&'static str, f64)>;
    fn construct(&self, params: &Params) -> Result<SingularManifold>;

    /// Intrinsically isometric partner used by `compare`, if the builtin has one.
    /// Its grid lattice matches this builtin's point for point.
    fn twin(&self, _params: &Params) -> Option<Result<SingularManifold>> {
        None
    }

    /// `params` with defaults filled in; unknown names are rejected.
    fn resolve_params(&self, params: &Params) -> Result<Params> {
        params.resolve(self.name(), &self.defaults())
    }

    fn build(&self, params: &Params) -> Result<SingularManifold> {
        self.construct(&self.resolve_params(params)?)
    }

    fn build_twin(&self, params: &Params) -> Option<Result<SingularManifold>> {
        match params.resolve(self.name(), &self.defaults()) {
            Ok(p) => self.twin(&p),
            Err(e) => Some(Err(e)),
        }
    }
}

pub fn builtin_registry() -> Registry<dyn BuiltinGeometry> {
    let mut reg: Registry<dyn BuiltinGeometry> = Registry::new("builtin geometry");
    reg.register(Arc::new(Interval))
        .register(Arc::new(CrossingSegments))
        .register(Arc::new(GluedSegments))
        .register(Arc::new(CrossingPlanes))
        .register(Arc::new(GluedHalfPlanes))
        .register(Arc::new(ThreeIntervals))
        .register(Arc::new(FoldedRectangle))
        .register(Arc::new(Rectangle))
        .register(Arc::new(CrossingPlanesR4))
        .register(Arc::new(Cube));
    reg
}

pub fn build_builtin(name: &str, params: &Params) -> Result<SingularManifold> {
    builtin_registry().get(name)?.build(params)
}

fn affine(origin: Vec<f64>, axes: Vec<Vec<f64>>) -> Arc<dyn Chart> {
    Arc::new(AffineChart::new(origin, axes))
}

fn uniform(n: usize) -> Vec<Arc<dyn DensityProfile>> {
    (0..n).map(|_| Arc::new(UniformProfile) as Arc<dyn DensityProfile>).collect()
}

fn positive(params: &Params, key: &str) -> Result<f64> {
    let v = params.req(key);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::param(key, format!("must be positive, got {v}")))
    }
}

fn open_angle(params: &Params, key: &str) -> Result<f64> {
    let v = params.req(key);
    if v > 0.0 && v < PI {
        Ok(v)
    } else {
        Err(Error::param(key, format!("must lie in (0, π), got {v}")))
    }
}

fn glue_angle(params: &Params, key: &str) -> Result<f64> {
    let v = params.req(key);
    if v > 0.0 && v <= PI {
        Ok(v)
    } else {
        Err(Error::param(key, format!("must lie in (0, π], got {v}")))
    }
}

fn scale(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// Segment piece `origin + s·dir`, `s ∈ [lo, hi]`, with ends flagged by role.
/// Pushes Boundary singularities for boundary ends.
fn segment_piece(
    id: usize,
    label: &str,
    origin: Vec<f64>,
    dir: Vec<f64>,
    (lo, hi): (f64, f64),
    roles: [FaceRole; 2],
    sings: &mut Vec<SingularitySpec>,
) -> ManifoldPiece {
    let end = |s: f64| -> Vec<f64> { origin.iter().zip(&dir).map(|(o, d)| o + s * d).collect() };
    if roles[0] == FaceRole::Boundary {
        sings.push(SingularitySpec::boundary(id, AffineLocus::point(end(lo)), dir.clone()));
    }
    if roles[1] == FaceRole::Boundary {
        sings.push(SingularitySpec::boundary(id, AffineLocus::point(end(hi)), scale(&dir, -1.0)));
    }
    ManifoldPiece::new(
        id,
        label,
        affine(origin.clone(), vec![dir.clone()]),
        ParamBox::new(vec![lo], vec![hi]),
        vec![roles],
    )
}

/// Rectangle piece `origin + u·a + v·b` over `[lo,hi]` with orthonormal a, b.
/// Pushes Boundary singularities for every face flagged Boundary.
fn rect_piece(
    id: usize,
    label: &str,
    origin: Vec<f64>,
    axes: [Vec<f64>; 2],
    lo: [f64; 2],
    hi: [f64; 2],
    faces: [[FaceRole; 2]; 2],
    sings: &mut Vec<SingularitySpec>,
) -> ManifoldPiece {
    let at = |u: f64, v: f64| -> Vec<f64> {
        origin
            .iter()
            .zip(axes[0].iter().zip(&axes[1]))
            .map(|(o, (a, b))| o + u * a + v * b)
            .collect()
    };
    for axis in 0..2 {
        let other = 1 - axis;
        for side in 0..2 {
            if faces[axis][side] != FaceRole::Boundary {
                continue;
            }
            let fixed = if side == 0 { lo[axis] } else { hi[axis] };
            let (u, v) = if axis == 0 { (fixed, 0.0) } else { (0.0, fixed) };
            let origin = at(u, v);
            let inward = scale(&axes[axis], if side == 0 { 1.0 } else { -1.0 });
            sings.push(SingularitySpec::boundary(
                id,
                AffineLocus {
                    origin,
                    directions: vec![axes[other].clone()],
                    extents: vec![(lo[other], hi[other])],
                },
                inward,
            ));
        }
    }
    ManifoldPiece::new(
        id,
        label,
        affine(origin, axes.to_vec()),
        ParamBox::new(lo.to_vec(), hi.to_vec()),
        faces.to_vec(),
    )
}

const B: FaceRole = FaceRole::Boundary;
const OWNED: FaceRole = FaceRole::Seam { owned: true };
const SHARED: FaceRole = FaceRole::Seam { owned: false };

/// Unit interval (or `[0, length]`) on the real line; density ∝ exp(slope·x).
pub struct Interval;

impl Named for Interval {
    fn name(&self) -> &'static str {
        "interval"
    }
}

impl BuiltinGeometry for Interval {
    fn description(&self) -> &'static str {
        "segment [0, length] in R^1 with density proportional to exp(density_slope*x)"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("length", 1.0), ("density_slope", 0.0)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let len = positive(p, "length")?;
        let slope = p.req("density_slope");
        let mut sings = Vec::new();
        let piece = segment_piece(0, "interval", vec![0.0], vec![1.0], (0.0, len), [B, B], &mut sings);
        let profile: Arc<dyn DensityProfile> = if slope == 0.0 {
            Arc::new(UniformProfile)
        } else {
            Arc::new(ExponentialProfile { slope: vec![slope] })
        };
        SingularManifold::new("interval", vec![piece], sings, vec![profile])
    }
}

/// Two segments in the plane crossing at their midpoints.
pub struct CrossingSegments;

impl Named for CrossingSegments {
    fn name(&self) -> &'static str {
        "crossing_segments"
    }
}

impl BuiltinGeometry for CrossingSegments {
    fn description(&self) -> &'static str {
        "two segments in R^2 of half-length half_length crossing at the origin at angle theta"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("theta", PI / 2.0), ("half_length", 0.5)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let theta = open_angle(p, "theta")?;
        let h = positive(p, "half_length")?;
        let mut sings = Vec::new();
        let a = segment_piece(0, "first", vec![0.0, 0.0], vec![1.0, 0.0], (-h, h), [B, B], &mut sings);
        let b = segment_piece(
            1,
            "second",
            vec![0.0, 0.0],
            vec![theta.cos(), theta.sin()],
            (-h, h),
            [B, B],
            &mut sings,
        );
        sings.push(SingularitySpec::intersection(0, 1, AffineLocus::point(vec![0.0, 0.0]), theta));
        SingularManifold::new("crossing_segments", vec![a, b], sings, uniform(2))
    }
}

/// Two segments glued at a common endpoint (a one-dimensional edge).
pub struct GluedSegments;

impl Named for GluedSegments {
    fn name(&self) -> &'static str {
        "glued_segments"
    }
}

impl BuiltinGeometry for GluedSegments {
    fn description(&self) -> &'static str {
        "two segments of given length in R^2 glued at the origin with angle theta between them (theta = pi is a straight line)"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("theta", PI / 2.0), ("length", 0.5)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let theta = glue_angle(p, "theta")?;
        let len = positive(p, "length")?;
        let d1 = vec![1.0, 0.0];
        let d2 = vec![theta.cos(), theta.sin()];
        let mut sings = Vec::new();
        let a = segment_piece(0, "first", vec![0.0, 0.0], d1.clone(), (0.0, len), [OWNED, B], &mut sings);
        let b = segment_piece(1, "second", vec![0.0, 0.0], d2.clone(), (0.0, len), [SHARED, B], &mut sings);
        sings.push(SingularitySpec::edge(0, 1, AffineLocus::point(vec![0.0, 0.0]), d1, d2));
        SingularManifold::new("glued_segments", vec![a, b], sings, uniform(2))
    }
}

/// Two squares in R³ crossing along a line.
pub struct CrossingPlanes;

impl Named for CrossingPlanes {
    fn name(&self) -> &'static str {
        "crossing_planes"
    }
}

impl BuiltinGeometry for CrossingPlanes {
    fn description(&self) -> &'static str {
        "two squares [-h,h]^2 in R^3 crossing along the y axis at angle theta"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("theta", PI / 2.0), ("half_length", 0.5)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let theta = open_angle(p, "theta")?;
        let h = positive(p, "half_length")?;
        let mut sings = Vec::new();
        let ey = vec![0.0, 1.0, 0.0];
        let a = rect_piece(
            0,
            "first",
            vec![0.0; 3],
            [vec![1.0, 0.0, 0.0], ey.clone()],
            [-h, -h],
            [h, h],
            [[B, B], [B, B]],
            &mut sings,
        );
        let b = rect_piece(
            1,
            "second",
            vec![0.0; 3],
            [vec![theta.cos(), 0.0, theta.sin()], ey.clone()],
            [-h, -h],
            [h, h],
            [[B, B], [B, B]],
            &mut sings,
        );
        let locus = AffineLocus { origin: vec![0.0; 3], directions: vec![ey], extents: vec![(-h, h)] };
        sings.push(SingularitySpec::intersection(0, 1, locus, theta));
        SingularManifold::new("crossing_planes", vec![a, b], sings, uniform(2))
    }
}

/// Two half-planes in R³ glued along the y axis.
pub struct GluedHalfPlanes;

impl Named for GluedHalfPlanes {
    fn name(&self) -> &'static str {
        "glued_half_planes"
    }
}

impl BuiltinGeometry for GluedHalfPlanes {
    fn description(&self) -> &'static str {
        "two rectangles [0,length]x[-width/2,width/2] in R^3 glued along the y axis with angle theta"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("theta", PI / 2.0), ("length", 0.5), ("width", 1.0)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let theta = glue_angle(p, "theta")?;
        let len = positive(p, "length")?;
        let w = positive(p, "width")? / 2.0;
        let ey = vec![0.0, 1.0, 0.0];
        let d1 = vec![1.0, 0.0, 0.0];
        let d2 = vec![theta.cos(), 0.0, theta.sin()];
        let mut sings = Vec::new();
        let a = rect_piece(
            0,
            "first",
            vec![0.0; 3],
            [d1.clone(), ey.clone()],
            [0.0, -w],
            [len, w],
            [[OWNED, B], [B, B]],
            &mut sings,
        );
        let b = rect_piece(
            1,
            "second",
            vec![0.0; 3],
            [d2.clone(), ey.clone()],
            [0.0, -w],
            [len, w],
            [[SHARED, B], [B, B]],
            &mut sings,
        );
        let locus = AffineLocus { origin: vec![0.0; 3], directions: vec![ey], extents: vec![(-w, w)] };
        sings.push(SingularitySpec::edge(0, 1, locus, d1, d2));
        SingularManifold::new("glued_half_planes", vec![a, b], sings, uniform(2))
    }
}

/// Three segments in the plane: a crossing, an edge and four free ends.
pub struct ThreeIntervals;

impl Named for ThreeIntervals {
    fn name(&self) -> &'static str {
        "three_intervals"
    }
}

impl BuiltinGeometry for ThreeIntervals {
    fn description(&self) -> &'static str {
        "three segments in R^2: a horizontal segment of length 1.2, a segment of length 0.8 crossing it at its midpoint, and a segment of length 0.5 glued to its right end; both slanted segments point at angle pi/3"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![]
    }
    fn construct(&self, _p: &Params) -> Result<SingularManifold> {
        let slant = PI / 3.0;
        let dir = vec![slant.cos(), slant.sin()];
        let ex = vec![1.0, 0.0];
        let mut sings = Vec::new();
        let a = segment_piece(0, "horizontal", vec![-0.6, 0.0], ex.clone(), (0.0, 1.2), [B, OWNED], &mut sings);
        let b = segment_piece(1, "crossing", vec![0.0, 0.0], dir.clone(), (-0.4, 0.4), [B, B], &mut sings);
        let c = segment_piece(2, "glued", vec![0.6, 0.0], dir.clone(), (0.0, 0.5), [SHARED, B], &mut sings);
        sings.push(SingularitySpec::intersection(0, 1, AffineLocus::point(vec![0.0, 0.0]), slant));
        sings.push(SingularitySpec::edge(0, 2, AffineLocus::point(vec![0.6, 0.0]), scale(&ex, -1.0), dir));
        SingularManifold::new("three_intervals", vec![a, b, c], sings, uniform(3))
    }
}

fn folded(fold_angle: f64, name: &str) -> Result<SingularManifold> {
    if !(0.0..PI).contains(&fold_angle) {
        return Err(Error::param("fold_angle", format!("must lie in [0, π), got {fold_angle}")));
    }
    let ex = vec![1.0, 0.0, 0.0];
    let up = vec![0.0, fold_angle.cos(), fold_angle.sin()];
    let down = vec![0.0, -1.0, 0.0];
    let mut sings = Vec::new();
    let lower = rect_piece(
        0,
        "lower",
        vec![0.0; 3],
        [ex.clone(), vec![0.0, 1.0, 0.0]],
        [-0.3, -0.5],
        [0.3, 0.0],
        [[B, B], [B, OWNED]],
        &mut sings,
    );
    let upper = rect_piece(
        1,
        "upper",
        vec![0.0; 3],
        [ex.clone(), up.clone()],
        [-0.3, 0.0],
        [0.3, 0.5],
        [[B, B], [SHARED, B]],
        &mut sings,
    );
    let locus = AffineLocus { origin: vec![0.0; 3], directions: vec![ex], extents: vec![(-0.3, 0.3)] };
    sings.push(SingularitySpec::edge(0, 1, locus, down, up));
    SingularManifold::new(name, vec![lower, upper], sings, uniform(2))
}

/// The rectangle (−0.3,0.3)×(−0.5,0.5)×{0} with its upper half rotated
/// about the x axis by `fold_angle`.
pub struct FoldedRectangle;

impl Named for FoldedRectangle {
    fn name(&self) -> &'static str {
        "folded_rectangle"
    }
}

impl BuiltinGeometry for FoldedRectangle {
    fn description(&self) -> &'static str {
        "rectangle (-0.3,0.3)x(-0.5,0.5)x{0} with the half y>0 rotated about the x axis by fold_angle"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("fold_angle", PI / 4.0)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        folded(p.req("fold_angle"), "folded_rectangle")
    }
    fn twin(&self, _p: &Params) -> Option<Result<SingularManifold>> {
        Some(folded(0.0, "rectangle"))
    }
}

/// The flat rectangle, built as an unfolded `folded_rectangle` so that both
/// share one lattice.
pub struct Rectangle;

impl Named for Rectangle {
    fn name(&self) -> &'static str {
        "rectangle"
    }
}

impl BuiltinGeometry for Rectangle {
    fn description(&self) -> &'static str {
        "flat rectangle (-0.3,0.3)x(-0.5,0.5)x{0}, split at y=0 into two pieces joined by a flat seam"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![]
    }
    fn construct(&self, _p: &Params) -> Result<SingularManifold> {
        folded(0.0, "rectangle")
    }
    fn twin(&self, _p: &Params) -> Option<Result<SingularManifold>> {
        Some(folded(PI / 4.0, "folded_rectangle"))
    }
}

fn planes_r4(separation: f64) -> Result<SingularManifold> {
    if !(separation == 0.0 || separation >= 1.0) {
        return Err(Error::param(
            "separation",
            format!("must be 0 (touching) or at least 1 (disjoint), got {separation}"),
        ));
    }
    let e = |k: usize| -> Vec<f64> { (0..4).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    let h = 0.5;
    let mut sings = Vec::new();
    let a = rect_piece(0, "first", vec![0.0; 4], [e(0), e(1)], [-h, -h], [h, h], [[B, B], [B, B]], &mut sings);
    let b = rect_piece(
        1,
        "second",
        vec![separation, 0.0, 0.0, 0.0],
        [e(2), e(3)],
        [-h, -h],
        [h, h],
        [[B, B], [B, B]],
        &mut sings,
    );
    if separation == 0.0 {
        sings.push(SingularitySpec::intersection(0, 1, AffineLocus::point(vec![0.0; 4]), PI / 2.0));
    }
    let name = if separation == 0.0 { "crossing_planes_r4" } else { "separated_planes_r4" };
    SingularManifold::new(name, vec![a, b], sings, uniform(2))
}

/// Two orthogonal squares in R⁴ meeting at a single point, or shifted apart.
pub struct CrossingPlanesR4;

impl Named for CrossingPlanesR4 {
    fn name(&self) -> &'static str {
        "crossing_planes_r4"
    }
}

impl BuiltinGeometry for CrossingPlanesR4 {
    fn description(&self) -> &'static str {
        "squares [-0.5,0.5]^2 in the (x1,x2) and (x3,x4) planes of R^4, meeting at the origin; separation>0 shifts the second along x1"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("separation", 0.0)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        planes_r4(p.req("separation"))
    }
    fn twin(&self, p: &Params) -> Option<Result<SingularManifold>> {
        let sep = p.req("separation");
        Some(planes_r4(if sep == 0.0 { 2.0 } else { 0.0 }))
    }
}

/// Axis-aligned cube `[0, side]^3`, a flat 3-manifold with boundary.
pub struct Cube;

impl Named for Cube {
    fn name(&self) -> &'static str {
        "cube"
    }
}

impl BuiltinGeometry for Cube {
    fn description(&self) -> &'static str {
        "solid cube [0,side]^3 in R^3 with uniform density"
    }
    fn defaults(&self) -> Vec<(&'static str, f64)> {
        vec![("side", 1.0)]
    }
    fn construct(&self, p: &Params) -> Result<SingularManifold> {
        let s = positive(p, "side")?;
        let e = |k: usize| -> Vec<f64> { (0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
        let mut sings = Vec::new();
        for axis in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&k| k != axis).collect();
            for side in 0..2 {
                let mut origin = vec![0.0; 3];
                origin[axis] = side as f64 * s;
                let locus = AffineLocus {
                    origin,
                    directions: others.iter().map(|&k| e(k)).collect(),
                    extents: vec![(0.0, s); 2],
                };
                let inward = scale(&e(axis), if side == 0 { 1.0 } else { -1.0 });
                sings.push(SingularitySpec::boundary(0, locus, inward));
            }
        }
        let piece = ManifoldPiece::new(
            0,
            "cube",
            affine(vec![0.0; 3], (0..3).map(e).collect()),
            ParamBox::new(vec![0.0; 3], vec![s; 3]),
            vec![[B, B]; 3],
        );
        SingularManifold::new("cube", vec![piece], sings, uniform(1))
    }
}
