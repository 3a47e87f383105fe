use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::neighbors::{default_search, NeighborSearch};
use super::LaplacianConfig;
use crate::error::{Error, Result};
use crate::geometry::AnnotatedCloud;
use crate::numeric::{dist2, fmt17, KahanSum};

/// `L = D − W` in compressed sparse rows. Each stored row holds the diagonal
/// and all off-diagonal neighbours in ascending column order.
#[derive(Debug, Clone)]
pub struct SparseLaplacian {
    pub config: LaplacianConfig,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    degree: Vec<f64>,
}

#[derive(Serialize)]
struct MatrixHeader {
    n: usize,
    nnz: usize,
    t: f64,
    d: usize,
    truncation: f64,
}

impl SparseLaplacian {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    /// Diagonal of `L` (degree without the self weight).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    /// Degrees `D_ii = Σ_j w_ij`, self weight included.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `‖L‖_∞`, the largest absolute row sum; bounds the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n())
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (c, v) = self.row(i);
            let mut acc = KahanSum::new();
            for (j, w) in c.iter().zip(v) {
                acc.add(w * x[*j]);
            }
            *yi = acc.value();
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        y
    }

    /// Coordinate-format export: a JSON header line, then `row col value` lines.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        let header = MatrixHeader {
            n: self.n(),
            nnz: self.nnz(),
            t: self.config.t,
            d: self.config.d,
            truncation: self.config.truncation,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for i in 0..self.n() {
            let (c, v) = self.row(i);
            for (j, w) in c.iter().zip(v) {
                writeln!(out, "{i} {j} {}", fmt17(*w))?;
            }
        }
        Ok(())
    }

    /// Symmetric permutation `P L Pᵀ` where new index `k` is old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> SparseLaplacian {
        let n = self.n();
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        for &old in perm {
            let (c, v) = self.row(old);
            let mut entries: Vec<(usize, f64)> = c.iter().map(|&j| inv[j]).zip(v.iter().copied()).collect();
            entries.sort_by_key(|e| e.0);
            for (j, w) in entries {
                cols.push(j);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        SparseLaplacian {
            config: self.config,
            row_ptr,
            cols,
            vals,
            degree: perm.iter().map(|&i| self.degree[i]).collect(),
        }
    }
}

/// Assembles `L` with the default neighbor search. `cap_bytes` bounds the
/// estimated storage; the check happens before any matrix storage is allocated.
pub fn laplacian_matrix(config: &LaplacianConfig, cloud: &AnnotatedCloud, cap_bytes: Option<usize>) -> Result<SparseLaplacian> {
    laplacian_matrix_with(config, cloud, default_search(cloud.ambient_dim()), cap_bytes)
}

pub fn laplacian_matrix_with(
    config: &LaplacianConfig,
    cloud: &AnnotatedCloud,
    search: Arc<dyn NeighborSearch>,
    cap_bytes: Option<usize>,
) -> Result<SparseLaplacian> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::param("cloud", "need at least 2 points for a Laplacian matrix"));
    }
    let index = search.build(cloud.coords(), cloud.ambient_dim(), config.radius());
    let counts: Vec<usize> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            buf.clear();
            index.query(cloud.point(i), buf);
            buf.len()
        })
        .collect();
    let nnz: usize = counts.iter().sum();
    let needed = nnz * (std::mem::size_of::<usize>() + std::mem::size_of::<f64>())
        + (2 * n + 1) * std::mem::size_of::<usize>();
    if let Some(cap) = cap_bytes {
        if needed > cap {
            return Err(Error::MemoryCap { needed, cap });
        }
    }
    let scale = 1.0 / (n as f64 * config.t);
    let rows: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            buf.clear();
            let x = cloud.point(i);
            index.query(x, buf);
            let mut vals = Vec::with_capacity(buf.len());
            let mut off = KahanSum::new();
            let mut self_w = 0.0;
            let mut diag_slot = usize::MAX;
            for (k, &j) in buf.iter().enumerate() {
                let w = config.kernel_d2(dist2(x, cloud.point(j))) * scale;
                if j == i {
                    self_w = w;
                    diag_slot = k;
                    vals.push(0.0);
                } else {
                    off.add(w);
                    vals.push(-w);
                }
            }
            let deg = off.value();
            vals[diag_slot] = deg;
            (buf.clone(), vals, deg + self_w)
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let mut degree = Vec::with_capacity(n);
    for (c, v, deg) in rows {
        cols.extend(c);
        vals.extend(v);
        row_ptr.push(cols.len());
        degree.push(deg);
    }
    Ok(SparseLaplacian { config: *config, row_ptr, cols, vals, degree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_builtin, sample, Params, SampleMode};
    use crate::operator::{GraphLaplacian, ScalarField};
    use proptest::prelude::*;

    #[test]
    fn two_point_matrix() {
        let cloud = AnnotatedCloud::external(1, 1, vec![0.0, 0.3], None).unwrap();
        let c = LaplacianConfig::new(0.5, 1).unwrap();
        let l = laplacian_matrix(&c, &cloud, None).unwrap();
        let w = c.weight(2, &[0.0], &[0.3]);
        assert_eq!(l.get(0, 1), -w);
        assert_eq!(l.get(1, 0), -w);
        assert_eq!(l.get(0, 0), w);
        assert_eq!(l.get(1, 1), w);
    }

    #[test]
    fn memory_cap_is_enforced() {
        let m = build_builtin("interval", &Params::new()).unwrap();
        let cloud = sample(&m, 1000, SampleMode::Grid, 0).unwrap();
        let c = LaplacianConfig::new(1e-3, 1).unwrap();
        assert!(matches!(laplacian_matrix(&c, &cloud, Some(1000)), Err(Error::MemoryCap { .. })));
    }

    #[test]
    fn symmetric_with_zero_row_sums() {
        let m = build_builtin("three_intervals", &Params::new()).unwrap();
        let cloud = sample(&m, 800, SampleMode::Grid, 0).unwrap();
        let c = LaplacianConfig::new(1e-3, 1).unwrap();
        let l = laplacian_matrix(&c, &cloud, None).unwrap();
        for i in 0..l.n() {
            let (cols, vals) = l.row(i);
            let sum: f64 = vals.iter().sum();
            assert!(sum.abs() <= 1e-10 * l.degree()[i]);
            for (j, v) in cols.iter().zip(vals) {
                assert_eq!(l.get(*j, i), *v);
                if *j != i {
                    assert!(*v <= 0.0);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matrix_and_pointwise_paths_agree(
            pts in proptest::collection::vec(-1.0f64..1.0, 20..200),
            t in 0.01f64..0.3,
        ) {
            let n = pts.len() / 2;
            let cloud = AnnotatedCloud::external(2, 1, pts[..2 * n].to_vec(), None).unwrap();
            let c = LaplacianConfig::new(t, 1).unwrap();
            let f = ScalarField::parse("expr:x1^2 - 3*x2 + x1*x2", 2).unwrap();
            let values = f.sample(&cloud).unwrap();
            let l = laplacian_matrix(&c, &cloud, None).unwrap();
            let a = l.mul(&values);
            let b = GraphLaplacian::new(c, &cloud).unwrap().apply_all(&values).unwrap();
            for i in 0..n {
                // relative to the size of the summands
                let (_, vals) = l.row(i);
                let scale: f64 = vals.iter().map(|v| v.abs()).sum::<f64>() * values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_assert!((a[i] - b[i]).abs() <= 1e-12 * scale.max(1e-300));
            }
            // positive semidefinite on the field itself
            let quad: f64 = values.iter().zip(&a).map(|(x, y)| x * y).sum();
            let maxdeg = l.degree().iter().fold(0.0f64, |m, v| m.max(*v));
            prop_assert!(quad >= -1e-10 * values.iter().map(|v| v * v).sum::<f64>() * maxdeg);
        }
    }
}
