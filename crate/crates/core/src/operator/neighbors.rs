use std::collections::HashMap;
use std::sync::Arc;

use crate::numeric::dist2;
use crate::registry::{Named, Registry};

/// Fixed-radius neighbor search over a flat coordinate array.
pub trait NeighborSearch: Named + Send + Sync {
    fn build(&self, coords: &[f64], dim: usize, radius: f64) -> Box<dyn NeighborIndex>;
}

pub trait NeighborIndex: Send + Sync {
    /// Appends to `out` the indices of all points within the radius of `x`
    /// (distance ≤ radius), in ascending order.
    fn query(&self, x: &[f64], out: &mut Vec<usize>);
}

pub fn neighbor_registry() -> Registry<dyn NeighborSearch> {
    let mut reg: Registry<dyn NeighborSearch> = Registry::new("neighbor search");
    reg.register(Arc::new(SpatialHash)).register(Arc::new(BruteForce));
    reg
}

/// Spatial hashing for low ambient dimension, brute force above 8.
pub fn default_search(dim: usize) -> Arc<dyn NeighborSearch> {
    if dim <= 8 {
        Arc::new(SpatialHash)
    } else {
        Arc::new(BruteForce)
    }
}

pub struct BruteForce;

impl Named for BruteForce {
    fn name(&self) -> &'static str {
        "brute"
    }
}

struct BruteIndex {
    coords: Vec<f64>,
    dim: usize,
    r2: f64,
}

impl NeighborSearch for BruteForce {
    fn build(&self, coords: &[f64], dim: usize, radius: f64) -> Box<dyn NeighborIndex> {
        Box::new(BruteIndex { coords: coords.to_vec(), dim, r2: radius * radius })
    }
}

impl NeighborIndex for BruteIndex {
    fn query(&self, x: &[f64], out: &mut Vec<usize>) {
        for (j, y) in self.coords.chunks_exact(self.dim).enumerate() {
            if dist2(x, y) <= self.r2 {
                out.push(j);
            }
        }
    }
}

/// Uniform grid of cubic cells with side equal to the search radius.
pub struct SpatialHash;

impl Named for SpatialHash {
    fn name(&self) -> &'static str {
        "hash"
    }
}

struct HashIndex {
    coords: Vec<f64>,
    dim: usize,
    cell: f64,
    r2: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl NeighborSearch for SpatialHash {
    fn build(&self, coords: &[f64], dim: usize, radius: f64) -> Box<dyn NeighborIndex> {
        let cell = radius;
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (j, y) in coords.chunks_exact(dim).enumerate() {
            cells.entry(cell_of(y, cell)).or_default().push(j);
        }
        Box::new(HashIndex { coords: coords.to_vec(), dim, cell, r2: radius * radius, cells })
    }
}

fn cell_of(x: &[f64], cell: f64) -> Vec<i64> {
    x.iter().map(|v| (v / cell).floor() as i64).collect()
}

impl NeighborIndex for HashIndex {
    fn query(&self, x: &[f64], out: &mut Vec<usize>) {
        let start = out.len();
        let centre = cell_of(x, self.cell);
        let mut key = centre.clone();
        let total = 3usize.pow(self.dim as u32);
        for code in 0..total {
            let mut c = code;
            for (k, slot) in key.iter_mut().enumerate() {
                *slot = centre[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(list) = self.cells.get(&key) {
                for &j in list {
                    let y = &self.coords[j * self.dim..(j + 1) * self.dim];
                    if dist2(x, y) <= self.r2 {
                        out.push(j);
                    }
                }
            }
        }
        out[start..].sort_unstable();
    }
}
