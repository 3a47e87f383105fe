//! The Gaussian-kernel graph Laplacian: pointwise application to fields and
//! sparse matrix assembly.

mod field;
mod matrix;
mod neighbors;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{ExprFunction, PieceFunction, ScalarField, CONTINUITY_TOL};
pub use matrix::{laplacian_matrix, laplacian_matrix_with, SparseLaplacian};
pub use neighbors::{default_search, neighbor_registry, BruteForce, NeighborIndex, NeighborSearch, SpatialHash};

use crate::error::{Error, Result};
use crate::geometry::AnnotatedCloud;
use crate::numeric::{dist2, KahanSum};

pub const DEFAULT_TRUNCATION: f64 = 8.0;
pub const MIN_TRUNCATION: f64 = 5.0;

/// Bandwidth, intrinsic dimension and truncation multiplier of the operator.
/// Weights are normalised by `1/(n·t^{d/2+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianConfig {
    pub t: f64,
    pub d: usize,
    pub truncation: f64,
}

impl LaplacianConfig {
    pub fn new(t: f64, d: usize) -> Result<Self> {
        Self::with_truncation(t, d, DEFAULT_TRUNCATION)
    }

    pub fn with_truncation(t: f64, d: usize, truncation: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::param("t", format!("must be positive, got {t}")));
        }
        if d == 0 {
            return Err(Error::param("d", "intrinsic dimension must be at least 1"));
        }
        if !(truncation >= MIN_TRUNCATION && truncation.is_finite()) {
            return Err(Error::param("truncation", format!("must be at least {MIN_TRUNCATION}, got {truncation}")));
        }
        Ok(Self { t, d, truncation })
    }

    /// Ambient distance beyond which weights vanish.
    pub fn radius(&self) -> f64 {
        self.truncation * self.t.sqrt()
    }

    /// `K_t(x,y) = t^{−d/2} exp(−‖x−y‖²/t)`, zero beyond the truncation radius.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        self.kernel_d2(dist2(x, y))
    }

    fn kernel_d2(&self, d2: f64) -> f64 {
        let r = self.radius();
        if d2 > r * r {
            0.0
        } else {
            self.t.powf(-(self.d as f64) / 2.0) * (-d2 / self.t).exp()
        }
    }

    /// Graph weight `w_{n,t}` between two points of an `n`-point cloud.
    pub fn weight(&self, n: usize, x: &[f64], y: &[f64]) -> f64 {
        self.kernel(x, y) / (n as f64 * self.t)
    }
}

/// Free-function form of [`LaplacianConfig::kernel`].
pub fn kernel(config: &LaplacianConfig, x: &[f64], y: &[f64]) -> f64 {
    config.kernel(x, y)
}

/// Where to evaluate `L_{n,t}f`.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// A cloud point; its value comes from the sampled field.
    Index(usize),
    /// Any point together with its piece and field value.
    External { point: Vec<f64>, piece: usize, value: Option<f64> },
}

/// Operator bound to one cloud and configuration, with a prebuilt neighbor index.
pub struct GraphLaplacian<'a> {
    config: LaplacianConfig,
    cloud: &'a AnnotatedCloud,
    index: Box<dyn NeighborIndex>,
}

impl<'a> GraphLaplacian<'a> {
    pub fn new(config: LaplacianConfig, cloud: &'a AnnotatedCloud) -> Result<Self> {
        Self::with_search(config, cloud, default_search(cloud.ambient_dim()))
    }

    pub fn with_search(config: LaplacianConfig, cloud: &'a AnnotatedCloud, search: Arc<dyn NeighborSearch>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::param("cloud", "empty cloud"));
        }
        let index = search.build(cloud.coords(), cloud.ambient_dim(), config.radius());
        Ok(Self { config, cloud, index })
    }

    pub fn config(&self) -> &LaplacianConfig {
        &self.config
    }

    /// `L_{n,t}f(x) = (1/(n t)) Σ_j K_t(x, X_j)(f(x) − f(X_j))`, summed with
    /// compensation over neighbours in index order.
    pub fn apply_at(&self, values: &[f64], x: &[f64], fx: f64, scratch: &mut Vec<usize>) -> f64 {
        scratch.clear();
        self.index.query(x, scratch);
        let mut acc = KahanSum::new();
        for &j in scratch.iter() {
            let k = self.config.kernel_d2(dist2(x, self.cloud.point(j)));
            acc.add(k * (fx - values[j]));
        }
        acc.value() / (self.cloud.len() as f64 * self.config.t)
    }

    pub fn apply(&self, values: &[f64], queries: &[Query]) -> Result<Vec<f64>> {
        if values.len() != self.cloud.len() {
            return Err(Error::MissingValue(format!(
                "{} field values for {} cloud points",
                values.len(),
                self.cloud.len()
            )));
        }
        for q in queries {
            match q {
                Query::Index(i) if *i >= self.cloud.len() => {
                    return Err(Error::param("query", format!("index {i} outside the cloud")))
                }
                Query::External { value: None, .. } => {
                    return Err(Error::MissingValue("external query point without a field value".into()))
                }
                Query::External { point, .. } if point.len() != self.cloud.ambient_dim() => {
                    return Err(Error::param("query", "wrong number of coordinates"))
                }
                _ => {}
            }
        }
        Ok(queries
            .par_iter()
            .map_init(Vec::new, |scratch, q| match q {
                Query::Index(i) => self.apply_at(values, self.cloud.point(*i), values[*i], scratch),
                Query::External { point, value, .. } => self.apply_at(values, point, value.unwrap_or(f64::NAN), scratch),
            })
            .collect())
    }

    /// Applies at every cloud point.
    pub fn apply_all(&self, values: &[f64]) -> Result<Vec<f64>> {
        let queries: Vec<Query> = (0..self.cloud.len()).map(Query::Index).collect();
        self.apply(values, &queries)
    }
}

/// One-shot application of the operator.
pub fn apply_laplacian(
    config: &LaplacianConfig,
    cloud: &AnnotatedCloud,
    field: &ScalarField,
    queries: &[Query],
) -> Result<Vec<f64>> {
    let values = field.sample(cloud)?;
    let queries: Vec<Query> = queries
        .iter()
        .map(|q| match q {
            Query::External { point, piece, value: None } => {
                field.value(*piece, point).map(|v| Query::External { point: point.clone(), piece: *piece, value: Some(v) })
            }
            other => Ok(other.clone()),
        })
        .collect::<Result<_>>()?;
    GraphLaplacian::new(*config, cloud)?.apply(&values, &queries)
}
