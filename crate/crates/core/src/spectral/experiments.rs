use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::eigen::{solve_spectrum, SolveOptions, SpectrumReport};
use crate::error::{Error, Result};
use crate::geometry::{sample, AnnotatedCloud, SampleMode, SingularManifold, SingularityKind};
use crate::numeric::{dist2, dot, fmt17, median, norm};
use crate::operator::{default_search, laplacian_matrix, LaplacianConfig, SparseLaplacian};

/// Relative gap below which neighbouring eigenvalues are treated as one eigenspace.
pub const MULTIPLICITY_GAP: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SolverChoice {
    pub name: String,
    pub options: SolveOptions,
}

impl Default for SolverChoice {
    fn default() -> Self {
        Self { name: "lanczos".into(), options: SolveOptions::default() }
    }
}

impl SolverChoice {
    pub fn solve(&self, l: &SparseLaplacian, k: usize) -> Result<SpectrumReport> {
        solve_spectrum(l, k, &self.name, &self.options)
    }
}

/// The `count` smallest eigenpairs of the graph Laplacian of `cloud`.
pub fn cloud_spectrum(cloud: &AnnotatedCloud, t: f64, count: usize, solver: &SolverChoice) -> Result<SpectrumReport> {
    let config = LaplacianConfig::new(t, cloud.intrinsic_dim())?;
    let l = laplacian_matrix(&config, cloud, None)?;
    solver.solve(&l, count)
}

/// `‖λ¹ − λ²‖ / ‖λ¹‖` over eigenvalues `1..=k` (index 0 is the trivial one).
/// Not symmetric: the first report is the reference.
pub fn spectrum_diff(a: &SpectrumReport, b: &SpectrumReport, k: usize) -> Result<f64> {
    for (name, r) in [("first", a), ("second", b)] {
        if r.converged_prefix() < k + 1 {
            return Err(Error::Insufficient(format!(
                "{name} report has {} converged eigenpairs, need {}",
                r.converged_prefix(),
                k + 1
            )));
        }
    }
    let la = &a.eigenvalues[1..=k];
    let lb = &b.eigenvalues[1..=k];
    let diff: Vec<f64> = la.iter().zip(lb).map(|(x, y)| x - y).collect();
    let den = norm(la);
    if den == 0.0 {
        return Err(Error::Numerical("reference eigenvalues are all zero".into()));
    }
    Ok(norm(&diff) / den)
}

pub fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let den = norm(a) * norm(b);
    if den == 0.0 {
        return 0.0;
    }
    (dot(a, b).abs() / den).min(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeCorrelation {
    pub mode: usize,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub correlation: f64,
    /// Compared as part of a near-degenerate eigenspace (cosine of the largest principal angle).
    pub subspace: bool,
}

/// Correlations of modes `1..=count` between two spectra on identified point
/// sets. Modes inside a cluster with relative gaps below [`MULTIPLICITY_GAP`]
/// (in either spectrum) are compared as subspaces.
pub fn mode_correlations(a: &SpectrumReport, b: &SpectrumReport, count: usize) -> Result<Vec<ModeCorrelation>> {
    let need = count + 1;
    if a.eigenvectors.len() < need || b.eigenvectors.len() < need {
        return Err(Error::Insufficient(format!("need {need} eigenvectors in both reports")));
    }
    if a.n != b.n {
        return Err(Error::param("report", format!("point counts differ ({} vs {})", a.n, b.n)));
    }
    let tied = |r: &SpectrumReport, i: usize| {
        let (x, y) = (r.eigenvalues[i], r.eigenvalues[i + 1]);
        (y - x).abs() < MULTIPLICITY_GAP * x.abs().max(y.abs())
    };
    let mut out = Vec::with_capacity(count);
    let mut i = 1;
    while i <= count {
        let mut j = i;
        while j + 1 < a.eigenvalues.len().min(b.eigenvalues.len()) && (tied(a, j) || tied(b, j)) {
            j += 1;
        }
        let corr = if j == i {
            abs_correlation(&a.eigenvectors[i], &b.eigenvectors[i])
        } else {
            principal_cosine(&a.eigenvectors[i..=j], &b.eigenvectors[i..=j])
        };
        for mode in i..=j.min(count) {
            out.push(ModeCorrelation {
                mode,
                lambda_a: a.eigenvalues[mode],
                lambda_b: b.eigenvalues[mode],
                correlation: corr,
                subspace: j > i,
            });
        }
        i = j + 1;
    }
    Ok(out)
}

/// Cosine of the largest principal angle between two spans of orthonormal vectors.
fn principal_cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let s = a.len();
    let m = DMatrix::from_fn(s, s, |i, j| dot(&a[i], &b[j]));
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min).min(1.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldReport {
    pub n: usize,
    pub t: f64,
    pub k: usize,
    pub diff_k: f64,
    /// `diff_j` for `j = 1..=k`.
    pub diff_by_k: Vec<f64>,
    pub correlations: Vec<ModeCorrelation>,
    pub smooth: SpectrumReport,
    pub folded: SpectrumReport,
}

impl FoldReport {
    pub fn diff(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.diff_by_k.get(i)).copied()
    }
}

/// Grid-samples both manifolds with the same lattice, solves both spectra and
/// compares them. Eigenvectors are transported by point index, which the
/// matched lattice makes an exact isometry.
pub fn fold_invariance(
    smooth: &SingularManifold,
    folded: &SingularManifold,
    field_count: usize,
    n: usize,
    t: f64,
    k: usize,
    solver: &SolverChoice,
) -> Result<FoldReport> {
    if field_count > k {
        return Err(Error::param("field_count", format!("cannot exceed k = {k}")));
    }
    let ca = sample(smooth, n, SampleMode::Grid, 0)?;
    let cb = sample(folded, n, SampleMode::Grid, 0)?;
    check_matched(&ca, &cb)?;
    let (ra, rb) = rayon::join(
        || cloud_spectrum(&ca, t, k + 1, solver),
        || cloud_spectrum(&cb, t, k + 1, solver),
    );
    let (ra, rb) = (ra?, rb?);
    let diff_by_k = (1..=k).map(|j| spectrum_diff(&ra, &rb, j)).collect::<Result<Vec<_>>>()?;
    let correlations = mode_correlations(&ra, &rb, field_count)?;
    Ok(FoldReport { n: ca.len(), t, k, diff_k: diff_by_k[k - 1], diff_by_k, correlations, smooth: ra, folded: rb })
}

fn check_matched(a: &AnnotatedCloud, b: &AnnotatedCloud) -> Result<()> {
    let same = a.len() == b.len()
        && a.pieces() == b.pieces()
        && (0..a.len()).all(|i| match (a.params(i), b.params(i)) {
            (Some(u), Some(v)) => u.iter().zip(v).all(|(x, y)| (x - y).abs() <= 1e-12),
            _ => false,
        });
    if same {
        Ok(())
    } else {
        Err(Error::param("m_folded", "grid lattice does not match the smooth manifold's parameter lattice"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryDerivative {
    pub boundary_points: usize,
    pub max_abs: f64,
    pub median_abs: f64,
    pub max_interior_gradient: f64,
    pub normalized_max: f64,
    pub normalized_median: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeumannMode {
    pub mode: usize,
    pub lambda: f64,
    #[serde(flatten)]
    pub stats: BoundaryDerivative,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeumannReport {
    pub t: f64,
    pub modes: Vec<NeumannMode>,
}

/// Boundary statistics for eigenvectors `0..=k` of `report`.
pub fn neumann_check(report: &SpectrumReport, cloud: &AnnotatedCloud, m: &SingularManifold, k: usize) -> Result<NeumannReport> {
    if report.converged_prefix() < k + 1 {
        return Err(Error::Insufficient(format!("need {} converged eigenpairs", k + 1)));
    }
    let probe = BoundaryProbe::new(cloud, m, report.t)?;
    let modes = (0..=k)
        .map(|j| {
            Ok(NeumannMode { mode: j, lambda: report.eigenvalues[j], stats: probe.derivative(&report.eigenvectors[j])? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NeumannReport { t: report.t, modes })
}

/// Inward normal derivative statistics of an arbitrary vector of values on the cloud.
pub fn boundary_derivative(values: &[f64], cloud: &AnnotatedCloud, m: &SingularManifold, t: f64) -> Result<BoundaryDerivative> {
    BoundaryProbe::new(cloud, m, t)?.derivative(values)
}

/// Boundary locations with inward normals, plus the machinery to interpolate
/// cloud values at off-lattice points of a piece.
struct BoundaryProbe<'a> {
    cloud: &'a AnnotatedCloud,
    m: &'a SingularManifold,
    h: f64,
    index: Box<dyn crate::operator::NeighborIndex>,
    /// (piece, boundary point, inward normal)
    sites: Vec<(usize, Vec<f64>, Vec<f64>)>,
    interior: Vec<usize>,
}

const STENCIL_PER_DIM: usize = 4;

/// Relative spread below which a vector counts as constant.
pub const CONSTANT_SPREAD: f64 = 1e-8;

impl<'a> BoundaryProbe<'a> {
    fn new(cloud: &'a AnnotatedCloud, m: &'a SingularManifold, t: f64) -> Result<Self> {
        if values_len_mismatch(cloud, m) {
            return Err(Error::param("cloud", "ambient dimension differs from the manifold"));
        }
        let annotations = cloud
            .annotations()
            .ok_or_else(|| Error::param("cloud", "needs ground-truth annotations (sampled from a builtin)"))?;
        let h = t.sqrt();
        let reach = 3.0 * h;
        let dim = cloud.ambient_dim();
        let index = default_search(dim).build(cloud.coords(), dim, reach);
        let per_dim = 33;
        let mut sites = Vec::new();
        for spec in m.singularities().iter().filter(|s| s.kind == SingularityKind::Boundary) {
            for x0 in spec.locus.samples(per_dim) {
                sites.push((spec.pieces[0], x0, spec.inward[0].clone()));
            }
        }
        if sites.is_empty() {
            return Err(Error::param("m", "manifold has no boundary"));
        }
        let interior = annotations
            .iter()
            .enumerate()
            .filter(|(_, a)| a.r_ambient > reach)
            .map(|(i, _)| i)
            .collect();
        let probe = Self { cloud, m, h, index, sites, interior };
        let d = m.intrinsic_dim();
        let mut scratch = Vec::new();
        for (piece, x0, _) in &probe.sites {
            if probe.stencil(x0, *piece, &mut scratch).len() < d + 2 {
                return Err(Error::Insufficient(format!(
                    "fewer than {} cloud points within 3√t of the boundary point {x0:?}",
                    d + 2
                )));
            }
        }
        Ok(probe)
    }

    /// Nearest same-piece cloud points to `x` within 3√t, nearest first.
    fn stencil(&self, x: &[f64], piece: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
        scratch.clear();
        self.index.query(x, scratch);
        let mut near: Vec<(f64, usize)> = scratch
            .iter()
            .filter(|&&i| self.cloud.piece_of(i) == piece)
            .map(|&i| (dist2(self.cloud.point(i), x), i))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.truncate(STENCIL_PER_DIM * (self.m.intrinsic_dim() + 1));
        near.into_iter().map(|(_, i)| i).collect()
    }

    /// Least-squares tangential gradient from differences to the nearest
    /// stencil point; constant data gives exactly zero.
    fn gradient(&self, values: &[f64], stencil: &[usize], piece: usize) -> Option<Vec<f64>> {
        let pc = self.m.pieces().get(piece)?;
        let z = stencil[0];
        let xz = self.cloud.point(z);
        let basis = pc.chart.tangent_basis(&pc.chart.invert(xz));
        let d = basis.len();
        let mut ata = DMatrix::<f64>::zeros(d, d);
        let mut atb = nalgebra::DVector::<f64>::zeros(d);
        for &i in &stencil[1..] {
            let dx: Vec<f64> = self.cloud.point(i).iter().zip(xz).map(|(a, b)| a - b).collect();
            let c: Vec<f64> = basis.iter().map(|e| dot(e, &dx)).collect();
            let dv = values[i] - values[z];
            for a in 0..d {
                atb[a] += c[a] * dv;
                for b in 0..d {
                    ata[(a, b)] += c[a] * c[b];
                }
            }
        }
        let g = ata.cholesky()?.solve(&atb);
        let mut out = vec![0.0; xz.len()];
        for (gk, e) in g.iter().zip(&basis) {
            for (o, ei) in out.iter_mut().zip(e) {
                *o += gk * ei;
            }
        }
        Some(out)
    }

    fn interpolate(&self, values: &[f64], x: &[f64], piece: usize, scratch: &mut Vec<usize>) -> Result<f64> {
        let st = self.stencil(x, piece, scratch);
        if st.len() < self.m.intrinsic_dim() + 2 {
            return Err(Error::Insufficient(format!("too few cloud points near {x:?}")));
        }
        let z = st[0];
        let g = self
            .gradient(values, &st, piece)
            .ok_or_else(|| Error::Numerical(format!("degenerate stencil near {x:?}")))?;
        let step: Vec<f64> = x.iter().zip(self.cloud.point(z)).map(|(a, b)| a - b).collect();
        Ok(values[z] + dot(&g, &step))
    }

    fn derivative(&self, values: &[f64]) -> Result<BoundaryDerivative> {
        if values.len() != self.cloud.len() {
            return Err(Error::param("values", format!("expected {} values", self.cloud.len())));
        }
        let h = self.h;
        // a numerically constant vector (the null eigenvector) has no boundary derivative
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo <= CONSTANT_SPREAD * lo.abs().max(hi.abs()) {
            return Ok(BoundaryDerivative {
                boundary_points: self.sites.len(),
                max_abs: 0.0,
                median_abs: 0.0,
                max_interior_gradient: 0.0,
                normalized_max: 0.0,
                normalized_median: 0.0,
            });
        }
        let mut derivs = self
            .sites
            .par_iter()
            .map_init(Vec::new, |scratch, (piece, x0, n)| {
                let at = |s: f64| -> Vec<f64> { x0.iter().zip(n).map(|(a, b)| a + s * b).collect() };
                let f0 = self.interpolate(values, x0, *piece, scratch)?;
                let f1 = self.interpolate(values, &at(h), *piece, scratch)?;
                let f2 = self.interpolate(values, &at(2.0 * h), *piece, scratch)?;
                // one-sided differences at h/2 and 3h/2, linearly extrapolated to 0
                Ok(((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let max_grad = self
            .interior
            .par_iter()
            .map_init(Vec::new, |scratch, &i| {
                let piece = self.cloud.piece_of(i);
                let st = self.stencil(self.cloud.point(i), piece, scratch);
                if st.len() < self.m.intrinsic_dim() + 2 {
                    return 0.0;
                }
                self.gradient(values, &st, piece).map_or(0.0, |g| norm(&g))
            })
            .reduce(|| 0.0, f64::max);
        derivs.sort_by(f64::total_cmp);
        let max_abs = *derivs.last().unwrap_or(&0.0);
        let median_abs = median(&derivs);
        let scale = |v: f64| if v == 0.0 { 0.0 } else { v / max_grad };
        Ok(BoundaryDerivative {
            boundary_points: derivs.len(),
            max_abs,
            median_abs,
            max_interior_gradient: max_grad,
            normalized_max: scale(max_abs),
            normalized_median: scale(median_abs),
        })
    }
}

fn values_len_mismatch(cloud: &AnnotatedCloud, m: &SingularManifold) -> bool {
    cloud.ambient_dim() != m.ambient_dim()
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalityEntry {
    pub t: f64,
    pub diff_k: f64,
    pub lambda_pair: Vec<f64>,
    pub lambda_disjoint: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalityReport {
    pub n_per_piece: usize,
    pub k: usize,
    pub entries: Vec<LocalityEntry>,
    /// diff_k strictly decreasing as t decreases along the grid.
    pub monotone_decay: bool,
    /// Least-squares slope of log diff_k against log t (the hypothesis predicts about 1/2).
    pub decay_slope: Option<f64>,
}

pub const LOCALITY_T_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Spectral perturbation between a codimension ≥ 2 intersecting pair and the
/// same pieces pulled apart, across a bandwidth grid. The disjoint union is
/// the reference spectrum.
pub fn codim2_locality(
    pair: &SingularManifold,
    disjoint: &SingularManifold,
    n_per_piece: usize,
    t_grid: &[f64],
    k: usize,
    solver: &SolverChoice,
) -> Result<LocalityReport> {
    if pair.pieces().len() != disjoint.pieces().len() {
        return Err(Error::param("disjoint", "must have the same pieces as the intersecting pair"));
    }
    let n = n_per_piece * pair.pieces().len();
    let ca = sample(pair, n, SampleMode::Grid, 0)?;
    let cb = sample(disjoint, n, SampleMode::Grid, 0)?;
    let mut entries = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (ra, rb) = rayon::join(
            || cloud_spectrum(&cb, t, k + 1, solver),
            || cloud_spectrum(&ca, t, k + 1, solver),
        );
        let (reference, perturbed) = (ra?, rb?);
        entries.push(LocalityEntry {
            t,
            diff_k: spectrum_diff(&reference, &perturbed, k)?,
            lambda_pair: perturbed.eigenvalues,
            lambda_disjoint: reference.eigenvalues,
        });
    }
    let mut by_t: Vec<&LocalityEntry> = entries.iter().collect();
    by_t.sort_by(|a, b| b.t.total_cmp(&a.t));
    let monotone_decay = by_t.windows(2).all(|w| w[1].diff_k < w[0].diff_k);
    let positive: Vec<(f64, f64)> =
        entries.iter().filter(|e| e.diff_k > 0.0).map(|e| (e.t.ln(), e.diff_k.ln())).collect();
    let decay_slope = (positive.len() >= 2).then(|| {
        let mx = positive.iter().map(|p| p.0).sum::<f64>() / positive.len() as f64;
        let my = positive.iter().map(|p| p.1).sum::<f64>() / positive.len() as f64;
        let sxy: f64 = positive.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = positive.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(LocalityReport { n_per_piece, k, entries, monotone_decay, decay_slope })
}

/// Eigenvectors as CSV: `index,phi_0,...,phi_{k-1}`.
pub fn write_eigenvectors_csv<W: Write>(report: &SpectrumReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend((0..report.eigenvectors.len()).map(|j| format!("phi_{j}")));
    w.write_record(&header)?;
    for i in 0..report.n {
        let mut row = vec![i.to_string()];
        row.extend(report.eigenvectors.iter().map(|v| fmt17(v[i])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
