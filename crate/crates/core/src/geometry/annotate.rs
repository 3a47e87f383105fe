use serde::{Deserialize, Serialize};

use super::manifold::{SingularManifold, SingularityKind, SingularitySpec};
use crate::error::{Error, Result};
use crate::numeric::{dot, gram_schmidt, normalized, project, sub};

/// Tolerance for deciding that a point lies on its piece.
pub(crate) const ON_PIECE_TOL: f64 = 1e-9;

/// Ground truth for one sample: the nearest singular set touching its piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub regular: bool,
    /// `None` when the piece touches no singular set at all.
    pub kind: Option<SingularityKind>,
    /// Index into the manifold's singularity list.
    pub singularity: Option<usize>,
    pub x0: Vec<f64>,
    pub r_ambient: f64,
    pub n1: Vec<f64>,
    pub n2: Option<Vec<f64>>,
    pub theta: Option<f64>,
}

impl Annotation {
    /// Annotation for a point with no singular set in reach.
    pub fn unattached() -> Self {
        Self {
            regular: true,
            kind: None,
            singularity: None,
            x0: Vec::new(),
            r_ambient: f64::INFINITY,
            n1: Vec::new(),
            n2: None,
            theta: None,
        }
    }

    /// Distance in units of `√t`.
    pub fn r(&self, t: f64) -> f64 {
        self.r_ambient / t.sqrt()
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        let mut a = self.clone();
        a.regular = a.kind.is_none() || a.r_ambient > horizon;
        a
    }
}

/// Annotates `x` (which must lie on `piece`) against every singular set
/// touching that piece. `horizon` is the distance beyond which the point is
/// called regular.
pub fn annotate(m: &SingularManifold, x: &[f64], piece: usize, horizon: f64) -> Result<Annotation> {
    let pc = m.piece(piece)?;
    if x.len() != pc.ambient_dim() {
        return Err(Error::param("x", format!("expected {} coordinates", pc.ambient_dim())));
    }
    pc.locate(x, ON_PIECE_TOL)
        .map_err(|residual| Error::NotOnPiece { piece, residual })?;

    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for (k, s) in m.singularities().iter().enumerate() {
        if !s.touches(piece) {
            continue;
        }
        let (x0, dist) = s.locus.nearest(x);
        if best.as_ref().is_none_or(|b| dist < b.2) {
            best = Some((k, x0, dist));
        }
    }
    let Some((k, x0, dist)) = best else {
        return Ok(Annotation::unattached());
    };
    let spec = &m.singularities()[k];
    let (n1, n2) = normals(m, spec, piece, x, &x0);
    let theta = n2.as_ref().map(|n2| dot(&n1, n2).clamp(-1.0, 1.0).acos());
    Ok(Annotation {
        regular: dist > horizon,
        kind: Some(spec.kind),
        singularity: Some(k),
        x0,
        r_ambient: dist,
        n1,
        n2,
        theta,
    })
}

fn normals(
    m: &SingularManifold,
    spec: &SingularitySpec,
    piece: usize,
    x: &[f64],
    x0: &[f64],
) -> (Vec<f64>, Option<Vec<f64>>) {
    let own = spec.pieces.iter().position(|&p| p == piece).unwrap_or(0);
    match spec.kind {
        SingularityKind::Boundary => (spec.inward[0].clone(), None),
        SingularityKind::Edge => (spec.inward[own].clone(), Some(spec.inward[1 - own].clone())),
        SingularityKind::Intersection => {
            let other = spec.pieces[1 - own];
            let t1 = normal_space(m, piece, x0, &spec.locus.directions);
            let t2 = normal_space(m, other, x0, &spec.locus.directions);
            let rel = sub(x, x0);
            // x1, x2: projections of x onto the two tangent spaces at x0;
            // n_i points from x_i toward x0
            let n1 = normalized(&project(&rel, &t1).iter().map(|v| -v).collect::<Vec<_>>(), 1e-13)
                .unwrap_or_else(|| t1[0].clone());
            let n2 = normalized(&project(&rel, &t2).iter().map(|v| -v).collect::<Vec<_>>(), 1e-13)
                .or_else(|| normalized(&project(&n1, &t2), 1e-12))
                .unwrap_or_else(|| t2[0].clone());
            (n1, Some(n2))
        }
    }
}

/// Orthonormal basis of the piece's tangent space at `x0` with the locus
/// directions removed.
fn normal_space(m: &SingularManifold, piece: usize, x0: &[f64], locus: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pc = &m.pieces()[piece];
    let u = pc.chart.invert(x0);
    let mut vs: Vec<Vec<f64>> = locus.to_vec();
    vs.extend(pc.chart.tangent_basis(&u));
    let basis = gram_schmidt(&vs);
    basis[locus.len()..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_builtin, Params};
    use std::f64::consts::PI;

    #[test]
    fn interval_near_left_end() {
        let m = build_builtin("interval", &Params::new()).unwrap();
        let a = annotate(&m, &[0.02], 0, f64::INFINITY).unwrap();
        assert_eq!(a.kind, Some(SingularityKind::Boundary));
        assert_eq!(a.x0, vec![0.0]);
        assert_eq!(a.n1, vec![1.0]);
        assert!((a.r_ambient - 0.02).abs() < 1e-15);
        assert!(a.theta.is_none());
    }

    #[test]
    fn crossing_origin() {
        let m = build_builtin("crossing_segments", &Params::new()).unwrap();
        let a = annotate(&m, &[0.0, 0.0], 0, f64::INFINITY).unwrap();
        assert_eq!(a.kind, Some(SingularityKind::Intersection));
        assert_eq!(a.r_ambient, 0.0);
        assert!(a.theta.unwrap().cos().abs() < 1e-12);
    }

    #[test]
    fn fold_edge_normals() {
        let m = build_builtin("folded_rectangle", &Params::new()).unwrap();
        let a = annotate(&m, &[0.1, -0.05, 0.0], 0, f64::INFINITY).unwrap();
        assert_eq!(a.kind, Some(SingularityKind::Edge));
        assert!((a.theta.unwrap() - 3.0 * PI / 4.0).abs() < 1e-12);
        assert!((a.r_ambient - 0.05).abs() < 1e-15);
        assert_eq!(a.n1, vec![0.0, -1.0, 0.0]);
    }

    #[test]
    fn off_piece_is_rejected() {
        let m = build_builtin("crossing_segments", &Params::new()).unwrap();
        let err = annotate(&m, &[0.1, 0.1], 0, 1.0).unwrap_err();
        assert!(matches!(err, Error::NotOnPiece { .. }));
    }
}
