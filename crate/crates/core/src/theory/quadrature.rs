use crate::error::{Error, Result};
use crate::geometry::SingularManifold;
use crate::numeric::{dist2, integrate_box};
use crate::operator::ScalarField;

/// Smallest accepted quadrature resolution (nodes per parameter dimension).
pub const MIN_RESOLUTION: usize = 64;

/// Checks that `resolution` nodes per axis resolve the kernel on every piece
/// (node spacing below `√t/4`).
fn check_resolution(m: &SingularManifold, t: f64, resolution: usize) -> Result<()> {
    let limit = t.sqrt() / 4.0;
    for p in m.pieces() {
        for len in p.domain.lengths() {
            let spacing = len / resolution as f64;
            if resolution < MIN_RESOLUTION || spacing >= limit {
                return Err(Error::Resolution { resolution, spacing, limit });
            }
        }
    }
    Ok(())
}

/// Smallest resolution (rounded up to whole 8-node panels) meeting the
/// spacing requirement with the given safety factor.
pub fn resolution_for(m: &SingularManifold, t: f64, factor: f64) -> usize {
    let longest = m
        .pieces()
        .iter()
        .flat_map(|p| p.domain.lengths())
        .fold(0.0, f64::max);
    let need = (factor * 4.0 * longest / t.sqrt()).ceil() as usize + 1;
    need.max(MIN_RESOLUTION).div_ceil(8) * 8
}

/// Integrates `f` over a piece's parameter box, split at the parameters of
/// singular loci lying inside the box (where piecewise fields may kink).
/// Sub-boxes get nodes in proportion to their length.
fn integrate_piece<F>(m: &SingularManifold, piece: usize, resolution: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let pc = &m.pieces()[piece];
    let d = pc.intrinsic_dim();
    let mut cuts: Vec<Vec<f64>> = (0..d).map(|j| vec![pc.domain.lo[j], pc.domain.hi[j]]).collect();
    for s in m.singularities().iter().filter(|s| s.touches(piece)) {
        let u = pc.chart.invert(&s.locus.origin);
        for j in 0..d {
            let (a, b) = (pc.domain.lo[j], pc.domain.hi[j]);
            let margin = 1e-12 * (b - a);
            if u[j] > a + margin && u[j] < b - margin {
                cuts[j].push(u[j]);
            }
        }
    }
    for c in cuts.iter_mut() {
        c.sort_by(f64::total_cmp);
        c.dedup();
    }
    let cells: usize = cuts.iter().map(|c| c.len() - 1).product();
    let mut total = 0.0;
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    for code in 0..cells {
        let mut rem = code;
        let mut nodes = 0;
        for j in 0..d {
            let k = rem % (cuts[j].len() - 1);
            rem /= cuts[j].len() - 1;
            lo[j] = cuts[j][k];
            hi[j] = cuts[j][k + 1];
            let share = (hi[j] - lo[j]) / (pc.domain.hi[j] - pc.domain.lo[j]);
            nodes = nodes.max((resolution as f64 * share).ceil() as usize);
        }
        total += integrate_box(&lo, &hi, nodes.max(crate::numeric::PANEL_ORDER), &f);
    }
    total
}

/// Functional Laplacian
/// `L_t f(x) = (1/t) ∫ K_t(x,y)(f(x) − f(y)) p(y) dy`
/// by composite Gauss–Legendre quadrature over every piece's parameter box,
/// with the untruncated kernel.
pub fn quadrature_lt(
    m: &SingularManifold,
    field: &ScalarField,
    x: &[f64],
    piece: usize,
    t: f64,
    resolution: usize,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", "must be positive"));
    }
    check_resolution(m, t, resolution)?;
    let fx = field.value(piece, x)?;
    let d = m.intrinsic_dim() as f64;
    let norm = t.powf(-d / 2.0) / t;
    let density = m.density();
    let mut total = 0.0;
    for pc in m.pieces() {
        let f = field.function(pc.id)?;
        let chart = &pc.chart;
        let id = pc.id;
        total += integrate_piece(m, id, resolution, |u| {
            let y = chart.point(u);
            let k = (-dist2(x, &y) / t).exp();
            if k == 0.0 {
                return 0.0;
            }
            k * (fx - f.value(&y)) * density.value(id, &y) * chart.volume_factor(u)
        });
    }
    Ok(norm * total)
}

/// `C_g = ∫ K_t(x,y) dy` over the manifold (volume measure).
pub fn kernel_mass(m: &SingularManifold, x: &[f64], t: f64, resolution: usize) -> Result<f64> {
    check_resolution(m, t, resolution)?;
    let d = m.intrinsic_dim() as f64;
    let mut total = 0.0;
    for pc in m.pieces() {
        let chart = &pc.chart;
        total += integrate_piece(m, pc.id, resolution, |u| {
            (-dist2(x, &chart.point(u)) / t).exp() * chart.volume_factor(u)
        });
    }
    Ok(total * t.powf(-d / 2.0))
}

/// `sup_y |f(x) − f(y)|` over a lattice of `per_dim` nodes per axis on each piece.
pub fn field_oscillation(m: &SingularManifold, field: &ScalarField, x: &[f64], piece: usize, per_dim: usize) -> Result<f64> {
    let fx = field.value(piece, x)?;
    let mut sup: f64 = 0.0;
    for pc in m.pieces() {
        let f = field.function(pc.id)?;
        let d = pc.intrinsic_dim();
        let total = per_dim.pow(d as u32);
        let mut u = vec![0.0; d];
        for code in 0..total {
            let mut c = code;
            for j in 0..d {
                let k = c % per_dim;
                c /= per_dim;
                u[j] = pc.domain.lo[j] + (pc.domain.hi[j] - pc.domain.lo[j]) * k as f64 / (per_dim - 1) as f64;
            }
            sup = sup.max((fx - f.value(&pc.chart.point(&u))).abs());
        }
    }
    Ok(sup)
}
