use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::operator::SparseLaplacian;

/// Reverse Cuthill–McKee ordering of the matrix graph; `perm[k]` is the old
/// index placed at position `k`. Each connected component starts from a
/// pseudo-peripheral node of minimum degree.
pub fn reverse_cuthill_mckee(l: &SparseLaplacian) -> Vec<usize> {
    let n = l.n();
    let degree: Vec<usize> = (0..n).map(|i| l.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral(l, seed, &degree);
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(l.row(v).0.iter().copied().filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (degree[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Last node of repeated breadth-first sweeps until the eccentricity stops growing.
fn peripheral(l: &SparseLaplacian, start: usize, degree: &[usize]) -> usize {
    let mut node = start;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, e) = farthest(l, node, degree);
        if e <= ecc {
            break;
        }
        ecc = e;
        node = far;
    }
    node
}

fn farthest(l: &SparseLaplacian, start: usize, degree: &[usize]) -> (usize, usize) {
    let n = l.n();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        if level[v] > level[last] || (level[v] == level[last] && degree[v] < degree[last]) {
            last = v;
        }
        for &j in l.row(v).0 {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                queue.push_back(j);
            }
        }
    }
    (last, level[last])
}

/// RCM permutation and envelope profile of a matrix, computed before any
/// numerical work so the caller can judge the factorization's cost.
pub struct EnvelopePlan {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
}

impl EnvelopePlan {
    pub fn new(l: &SparseLaplacian) -> Self {
        let n = l.n();
        let perm = reverse_cuthill_mckee(l);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (k, &old) in perm.iter().enumerate() {
            for &j in l.row(old).0 {
                first[k] = first[k].min(inv[j]);
            }
        }
        Self { perm, inv, first }
    }

    /// Stored entries of the factor.
    pub fn entries(&self) -> usize {
        self.first.iter().enumerate().map(|(k, &f)| k - f + 1).sum()
    }

    pub fn bytes(&self) -> usize {
        self.entries() * std::mem::size_of::<f64>()
    }

    /// Approximate multiply-adds of the factorization.
    pub fn flops(&self) -> f64 {
        self.first.iter().enumerate().map(|(k, &f)| 0.5 * ((k - f) as f64).powi(2)).sum()
    }
}

/// Envelope (profile) Cholesky factor of `P(L + σI)Pᵀ`.
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `L + shift·I` in RCM order. Fails before allocating when the
    /// envelope would exceed `cap_bytes`, and when the matrix is not positive definite.
    pub fn factor(l: &SparseLaplacian, shift: f64, cap_bytes: usize) -> Result<Self> {
        Self::factor_planned(l, EnvelopePlan::new(l), shift, cap_bytes)
    }

    pub fn factor_planned(l: &SparseLaplacian, plan: EnvelopePlan, shift: f64, cap_bytes: usize) -> Result<Self> {
        let n = l.n();
        let needed = plan.bytes();
        if needed > cap_bytes {
            return Err(Error::MemoryCap { needed, cap: cap_bytes });
        }
        let EnvelopePlan { perm, inv, first } = plan;
        let mut start = Vec::with_capacity(n + 1);
        start.push(0usize);
        for k in 0..n {
            start.push(start[k] + (k - first[k] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (k, &old) in perm.iter().enumerate() {
            let (cols, vals) = l.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let c = inv[j];
                if c <= k {
                    data[start[k] + c - first[k]] += v;
                }
            }
            data[start[k] + k - first[k]] += shift;
        }
        // row-oriented Cholesky: row k of the factor from rows first[k]..k
        for k in 0..n {
            let (head, tail) = data.split_at_mut(start[k]);
            let row_k = &mut tail[..k - first[k] + 1];
            for c in first[k]..k {
                let lo = first[k].max(first[c]);
                let row_c = &head[start[c]..start[c] + c - first[c] + 1];
                let mut s = row_k[c - first[k]];
                let a = &row_k[lo - first[k]..c - first[k]];
                let b = &row_c[lo - first[c]..c - first[c]];
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                row_k[c - first[k]] = s / row_c[c - first[c]];
            }
            let diag_pos = k - first[k];
            let s = row_k[diag_pos] - row_k[..diag_pos].iter().map(|x| x * x).sum::<f64>();
            if !(s > 0.0) {
                return Err(Error::Numerical(format!("matrix not positive definite at pivot {k}")));
            }
            row_k[diag_pos] = s.sqrt();
        }
        Ok(Self { perm, first, start, data })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Stored envelope entries.
    pub fn envelope(&self) -> usize {
        self.data.len()
    }

    /// Solves `(L + σI) x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            let row = &self.data[self.start[k]..self.start[k + 1]];
            let f = self.first[k];
            let s: f64 = row[..k - f].iter().zip(&y[f..k]).map(|(a, b)| a * b).sum();
            y[k] = (y[k] - s) / row[k - f];
        }
        for k in (0..n).rev() {
            let row = &self.data[self.start[k]..self.start[k + 1]];
            let f = self.first[k];
            y[k] /= row[k - f];
            let yk = y[k];
            for (c, l) in (f..k).zip(&row[..k - f]) {
                y[c] -= l * yk;
            }
        }
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
    }
}
