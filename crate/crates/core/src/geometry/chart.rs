use std::fmt;

use serde::{Deserialize, Serialize};

use crate::numeric::{dot, gram_schmidt};

/// Smooth parametrisation of a manifold piece over a box in `R^d`.
pub trait Chart: Send + Sync + fmt::Debug {
    fn param_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
    /// d-volume scaling factor `sqrt(det(JᵀJ))` at `u`.
    fn volume_factor(&self, u: &[f64]) -> f64;
    /// Orthonormal basis of the tangent space at `u` (ambient vectors).
    fn tangent_basis(&self, u: &[f64]) -> Vec<Vec<f64>>;
    /// Parameters of the point on the (unbounded) chart image nearest `x`.
    fn invert(&self, x: &[f64]) -> Vec<f64>;

    fn point(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim()];
        self.eval(u, &mut out);
        out
    }
}

/// `u ↦ origin + Σ_k u_k axes[k]`.
#[derive(Debug, Clone)]
pub struct AffineChart {
    origin: Vec<f64>,
    axes: Vec<Vec<f64>>,
    gram_inv: Vec<Vec<f64>>,
    volume: f64,
    tangent: Vec<Vec<f64>>,
}

impl AffineChart {
    /// Panics if the axes are linearly dependent or have mismatched length.
    pub fn new(origin: Vec<f64>, axes: Vec<Vec<f64>>) -> Self {
        let n = origin.len();
        let d = axes.len();
        assert!(d >= 1 && d <= n, "chart needs 1 <= d <= N");
        assert!(axes.iter().all(|a| a.len() == n), "axis length mismatch");
        let g = nalgebra::DMatrix::from_fn(d, d, |i, j| dot(&axes[i], &axes[j]));
        let det = g.determinant();
        assert!(det > 1e-300, "chart axes are degenerate");
        let inv = g.try_inverse().expect("gram matrix invertible");
        let gram_inv = (0..d).map(|i| (0..d).map(|j| inv[(i, j)]).collect()).collect();
        let tangent = gram_schmidt(&axes);
        Self {
            origin,
            axes,
            gram_inv,
            volume: det.sqrt(),
            tangent,
        }
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }
}

impl Chart for AffineChart {
    fn param_dim(&self) -> usize {
        self.axes.len()
    }

    fn ambient_dim(&self) -> usize {
        self.origin.len()
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.origin);
        for (uk, a) in u.iter().zip(&self.axes) {
            for (o, ai) in out.iter_mut().zip(a) {
                *o += uk * ai;
            }
        }
    }

    fn volume_factor(&self, _u: &[f64]) -> f64 {
        self.volume
    }

    fn tangent_basis(&self, _u: &[f64]) -> Vec<Vec<f64>> {
        self.tangent.clone()
    }

    fn invert(&self, x: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self
            .axes
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x.iter().zip(&self.origin))
                    .map(|(ai, (xi, oi))| ai * (xi - oi))
                    .sum()
            })
            .collect();
        self.gram_inv
            .iter()
            .map(|row| row.iter().zip(&rhs).map(|(g, r)| g * r).sum())
            .collect()
    }
}

/// Axis-aligned parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "empty parameter box");
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).collect()
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| *x >= a - tol && *x <= b + tol)
    }
}
