use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotate::{annotate, Annotation};
use super::manifold::{FaceRole, ManifoldPiece, SingularManifold};
use crate::error::{Error, Result};
use crate::numeric::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Iid,
    Grid,
    /// Loaded from a file without a generating manifold.
    External,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Iid => "iid",
            SampleMode::Grid => "grid",
            SampleMode::External => "external",
        })
    }
}

impl FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(SampleMode::Iid),
            "grid" => Ok(SampleMode::Grid),
            "external" => Ok(SampleMode::External),
            other => Err(Error::Unknown {
                what: "sampling mode",
                name: other.to_string(),
                available: "grid, iid".into(),
            }),
        }
    }
}

/// Sampled points, their pieces and chart parameters, and (for generated
/// clouds) ground-truth annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCloud {
    ambient_dim: usize,
    intrinsic_dim: usize,
    coords: Vec<f64>,
    piece_of: Vec<usize>,
    params: Option<Vec<f64>>,
    annotations: Option<Vec<Annotation>>,
    pub seed: u64,
    pub mode: SampleMode,
}

impl AnnotatedCloud {
    /// A cloud without chart parameters or annotations (e.g. loaded data).
    pub fn external(ambient_dim: usize, intrinsic_dim: usize, coords: Vec<f64>, piece_of: Option<Vec<usize>>) -> Result<Self> {
        if ambient_dim == 0 || !coords.len().is_multiple_of(ambient_dim) {
            return Err(Error::param("coords", "length is not a multiple of the ambient dimension"));
        }
        if intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(Error::param("intrinsic_dim", "must satisfy 1 <= d <= N"));
        }
        let n = coords.len() / ambient_dim;
        let piece_of = piece_of.unwrap_or_else(|| vec![0; n]);
        if piece_of.len() != n {
            return Err(Error::param("piece_of", "one piece id per point required"));
        }
        Ok(Self {
            ambient_dim,
            intrinsic_dim,
            coords,
            piece_of,
            params: None,
            annotations: None,
            seed: 0,
            mode: SampleMode::External,
        })
    }

    pub(crate) fn assemble(
        ambient_dim: usize,
        intrinsic_dim: usize,
        coords: Vec<f64>,
        piece_of: Vec<usize>,
        params: Option<Vec<f64>>,
        annotations: Option<Vec<Annotation>>,
        seed: u64,
        mode: SampleMode,
    ) -> Self {
        Self { ambient_dim, intrinsic_dim, coords, piece_of, params, annotations, seed, mode }
    }

    pub fn len(&self) -> usize {
        self.piece_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.piece_of.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn piece_of(&self, i: usize) -> usize {
        self.piece_of[i]
    }

    pub fn pieces(&self) -> &[usize] {
        &self.piece_of
    }

    pub fn params(&self, i: usize) -> Option<&[f64]> {
        self.params
            .as_ref()
            .map(|p| &p[i * self.intrinsic_dim..(i + 1) * self.intrinsic_dim])
    }

    pub fn annotation(&self, i: usize) -> Option<&Annotation> {
        self.annotations.as_ref().map(|a| &a[i])
    }

    pub fn annotations(&self) -> Option<&[Annotation]> {
        self.annotations.as_deref()
    }

    pub fn has_annotations(&self) -> bool {
        self.annotations.is_some()
    }

    /// Copy whose regular flags use `horizon` (e.g. `10·√t`).
    pub fn with_horizon(&self, horizon: f64) -> Self {
        let mut out = self.clone();
        if let Some(a) = out.annotations.as_mut() {
            for ann in a.iter_mut() {
                *ann = ann.with_horizon(horizon);
            }
        }
        out
    }

    /// Copy with points reordered so that new point `k` is old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.intrinsic_dim;
        let mut coords = Vec::with_capacity(self.coords.len());
        for &i in perm {
            coords.extend_from_slice(self.point(i));
        }
        let params = self.params.as_ref().map(|p| {
            perm.iter().flat_map(|&i| p[i * d..(i + 1) * d].iter().copied()).collect()
        });
        Self {
            ambient_dim: self.ambient_dim,
            intrinsic_dim: d,
            coords,
            piece_of: perm.iter().map(|&i| self.piece_of[i]).collect(),
            params,
            annotations: self.annotations.as_ref().map(|a| perm.iter().map(|&i| a[i].clone()).collect()),
            seed: self.seed,
            mode: self.mode,
        }
    }

    /// Largest distance between a stored point and the chart image of its
    /// stored parameters.
    pub fn chart_residual(&self, m: &SingularManifold) -> Option<f64> {
        let params = self.params.as_ref()?;
        let d = self.intrinsic_dim;
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let pc = &m.pieces()[self.piece_of[i]];
            let x = pc.chart.point(&params[i * d..(i + 1) * d]);
            let r = norm(&crate::numeric::sub(&x, self.point(i)));
            worst = worst.max(r);
        }
        Some(worst)
    }
}

/// Draws `n` points from `m`. Grid mode ignores the seed apart from recording it;
/// on pieces of dimension ≥ 2 it rounds to the nearest product lattice (at
/// least 2 per axis), so the count is only approximately `n` there.
pub fn sample(m: &SingularManifold, n: usize, mode: SampleMode, seed: u64) -> Result<AnnotatedCloud> {
    if n < 2 {
        return Err(Error::param("n", format!("need at least 2 points, got {n}")));
    }
    let params = match mode {
        SampleMode::Grid => grid_params(m, n)?,
        SampleMode::Iid => iid_params(m, n, &mut ChaCha8Rng::seed_from_u64(seed))?,
        SampleMode::External => return Err(Error::param("mode", "external clouds cannot be sampled")),
    };
    finish(m, params, seed, mode)
}

/// i.i.d. sample from the independent stream `stream` of `seed`; used for
/// Monte-Carlo trials so that every trial is reproducible on its own.
pub fn sample_stream(m: &SingularManifold, n: usize, seed: u64, stream: u64) -> Result<AnnotatedCloud> {
    if n < 2 {
        return Err(Error::param("n", format!("need at least 2 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let params = iid_params(m, n, &mut rng)?;
    finish(m, params, seed, SampleMode::Iid)
}

fn finish(m: &SingularManifold, params: Vec<(usize, Vec<f64>)>, seed: u64, mode: SampleMode) -> Result<AnnotatedCloud> {
    let dim = m.ambient_dim();
    let d = m.intrinsic_dim();
    let points: Vec<Vec<f64>> = params
        .par_iter()
        .map(|(piece, u)| m.pieces()[*piece].chart.point(u))
        .collect();
    let annotations = points
        .par_iter()
        .zip(params.par_iter())
        .map(|(x, (piece, _))| annotate(m, x, *piece, f64::INFINITY))
        .collect::<Result<Vec<_>>>()?;
    let mut coords = Vec::with_capacity(points.len() * dim);
    let mut flat = Vec::with_capacity(points.len() * d);
    for (x, (_, u)) in points.iter().zip(&params) {
        coords.extend_from_slice(x);
        flat.extend_from_slice(u);
    }
    Ok(AnnotatedCloud {
        ambient_dim: dim,
        intrinsic_dim: d,
        coords,
        piece_of: params.iter().map(|(p, _)| *p).collect(),
        params: Some(flat),
        annotations: Some(annotations),
        seed,
        mode,
    })
}

/// Splits `n` proportionally to `weights` by largest remainder (ties to the
/// lower index).
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn included(role: FaceRole) -> bool {
    role != FaceRole::Seam { owned: false }
}

/// `m` evenly spaced values on `[lo, hi]`; faces whose points belong to a
/// glued neighbour are left out, keeping the spacing `(hi−lo)/m`.
fn axis_lattice(lo: f64, hi: f64, m: usize, roles: [FaceRole; 2]) -> Vec<f64> {
    let len = hi - lo;
    match (included(roles[0]), included(roles[1])) {
        (true, true) => (0..m).map(|k| lo + len * k as f64 / (m - 1) as f64).collect(),
        (false, true) => (1..=m).map(|k| lo + len * k as f64 / m as f64).collect(),
        (true, false) => (0..m).map(|k| lo + len * k as f64 / m as f64).collect(),
        (false, false) => (1..=m).map(|k| lo + len * k as f64 / (m + 1) as f64).collect(),
    }
}

fn piece_lattice(piece: &ManifoldPiece, count: usize) -> Result<Vec<Vec<f64>>> {
    let d = piece.intrinsic_dim();
    let lengths = piece.domain.lengths();
    let per_axis: Vec<usize> = if d == 1 {
        vec![count]
    } else {
        let density = (count as f64 / piece.domain.volume()).powf(1.0 / d as f64);
        lengths.iter().map(|l| ((l * density).round() as usize).max(2)).collect()
    };
    if per_axis.iter().any(|&m| m < 2) {
        return Err(Error::param(
            "n",
            format!("piece {} receives fewer than 2 lattice points per axis", piece.id),
        ));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| axis_lattice(piece.domain.lo[j], piece.domain.hi[j], per_axis[j], piece.faces[j]))
        .collect();
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for base in &out {
            for &v in axis {
                let mut u = base.clone();
                u.push(v);
                next.push(u);
            }
        }
        out = next;
    }
    Ok(out)
}

fn grid_params(m: &SingularManifold, n: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let volumes: Vec<f64> = m.pieces().iter().map(|p| p.volume()).collect();
    let counts = apportion(n, &volumes);
    let mut out = Vec::with_capacity(n);
    for (piece, &count) in m.pieces().iter().zip(&counts) {
        for u in piece_lattice(piece, count)? {
            out.push((piece.id, u));
        }
    }
    Ok(out)
}

fn iid_params<R: Rng>(m: &SingularManifold, n: usize, rng: &mut R) -> Result<Vec<(usize, Vec<f64>)>> {
    let density = m.density();
    let chooser = WeightedIndex::new(density.masses())
        .map_err(|e| Error::Numerical(format!("piece masses: {e}")))?;
    // envelope for rejection sampling, from a lattice that contains the corners
    let envelopes: Vec<f64> = m
        .pieces()
        .iter()
        .map(|p| {
            let mut hi: f64 = 0.0;
            for u in piece_lattice_plain(p, 17) {
                let x = p.chart.point(&u);
                hi = hi.max(density.value(p.id, &x) * p.chart.volume_factor(&u));
            }
            hi * (1.0 + 1e-9)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = chooser.sample(rng);
        let p = &m.pieces()[k];
        let mut tries = 0usize;
        loop {
            let u: Vec<f64> = p
                .domain
                .lo
                .iter()
                .zip(&p.domain.hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect();
            let x = p.chart.point(&u);
            let w = density.value(k, &x) * p.chart.volume_factor(&u);
            if !w.is_finite() {
                return Err(Error::Numerical(format!("density not finite on piece {k}")));
            }
            if rng.random::<f64>() * envelopes[k] <= w {
                out.push((k, u));
                break;
            }
            tries += 1;
            if tries > 1_000_000 {
                return Err(Error::Numerical("rejection sampler stalled".into()));
            }
        }
    }
    Ok(out)
}

fn piece_lattice_plain(p: &ManifoldPiece, per_dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for j in 0..p.intrinsic_dim() {
        let (a, b) = (p.domain.lo[j], p.domain.hi[j]);
        let mut next = Vec::new();
        for base in &out {
            for k in 0..per_dim {
                let mut u = base.clone();
                u.push(a + (b - a) * k as f64 / (per_dim - 1) as f64);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_builtin, Params, SingularityKind};

    #[test]
    fn three_point_interval_grid() {
        let m = build_builtin("interval", &Params::new()).unwrap();
        let c = sample(&m, 3, SampleMode::Grid, 0).unwrap();
        assert_eq!(c.coords(), &[0.0, 0.5, 1.0]);
        let a0 = c.annotation(0).unwrap();
        assert_eq!(a0.kind, Some(SingularityKind::Boundary));
        assert_eq!(a0.r_ambient, 0.0);
        assert_eq!(c.annotation(2).unwrap().r_ambient, 0.0);
    }

    #[test]
    fn apportion_by_largest_remainder() {
        assert_eq!(apportion(2500, &[1.2, 0.8, 0.5]), vec![1200, 800, 500]);
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
    }

    #[test]
    fn glued_lattice_has_no_duplicate_seam() {
        let m = build_builtin("glued_segments", &Params::new().with("theta", std::f64::consts::PI)).unwrap();
        let c = sample(&m, 11, SampleMode::Grid, 0).unwrap();
        let mut xs: Vec<f64> = (0..c.len()).map(|i| c.point(i)[0]).collect();
        xs.sort_by(f64::total_cmp);
        for w in xs.windows(2) {
            assert!(w[1] - w[0] > 1e-9);
        }
    }

    #[test]
    fn fold_lattice_shape() {
        let m = build_builtin("folded_rectangle", &Params::new()).unwrap();
        let c = sample(&m, 6000, SampleMode::Grid, 0).unwrap();
        assert_eq!(c.len(), 6000);
        assert!(c.chart_residual(&m).unwrap() <= 1e-10);
    }

    #[test]
    fn iid_is_deterministic_and_on_pieces() {
        let m = build_builtin("crossing_segments", &Params::new()).unwrap();
        let a = sample(&m, 500, SampleMode::Iid, 42).unwrap();
        let b = sample(&m, 500, SampleMode::Iid, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.chart_residual(&m).unwrap() <= 1e-10);
        let c = sample(&m, 500, SampleMode::Iid, 43).unwrap();
        assert_ne!(a.coords(), c.coords());
    }
}
