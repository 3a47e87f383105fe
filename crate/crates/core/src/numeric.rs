//! Small numerical building blocks shared across modules: compensated
//! summation, dense vector helpers and composite Gauss–Legendre rules.

use rayon::prelude::*;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Returns `a / |a|`, or `None` when `|a|` does not exceed `tol`.
pub fn normalized(a: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > tol).then(|| a.iter().map(|x| x / n).collect())
}

/// Orthonormalizes `vectors` by modified Gram–Schmidt, dropping vectors
/// that are (numerically) dependent on the ones before them.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = norm(v).max(1e-300);
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        if let Some(u) = normalized(&w, 1e-10 * scale) {
            basis.push(u);
        }
    }
    basis
}

/// Orthogonal projection of `v` onto the span of the orthonormal `basis`.
pub fn project(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for b in basis {
        let c = dot(v, b);
        for (o, bi) in out.iter_mut().zip(b) {
            *o += c * bi;
        }
    }
    out
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let m = order;
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if m == 0 { 1.0 } else { p1 };
    let d = m as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Panel order used by composite rules.
pub const PANEL_ORDER: usize = 8;

/// Composite tensor-product Gauss–Legendre rule over the box `[lo, hi]`
/// with `nodes_per_dim` nodes (rounded up to whole panels) per axis.
///
/// Panels along the first axis are evaluated in parallel; partial sums are
/// reduced in panel order so results do not depend on the thread count.
pub fn integrate_box<F>(lo: &[f64], hi: &[f64], nodes_per_dim: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = lo.len();
    assert_eq!(d, hi.len());
    if d == 0 {
        return f(&[]);
    }
    let rule = GaussLegendre::new(PANEL_ORDER);
    let panels = nodes_per_dim.div_ceil(PANEL_ORDER).max(1);
    // 1-D composite nodes per axis
    let axes: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|j| {
            let h = (hi[j] - lo[j]) / panels as f64;
            let mut pts = Vec::with_capacity(panels * PANEL_ORDER);
            for p in 0..panels {
                let a = lo[j] + p as f64 * h;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    pts.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
                }
            }
            pts
        })
        .collect();

    let partials: Vec<f64> = (0..panels)
        .into_par_iter()
        .map(|p| {
            let mut acc = KahanSum::new();
            let mut u = vec![0.0; d];
            let first = &axes[0][p * PANEL_ORDER..(p + 1) * PANEL_ORDER];
            let rest_len: usize = axes[1..].iter().map(|a| a.len()).product();
            for &(x0, w0) in first {
                u[0] = x0;
                for flat in 0..rest_len {
                    let mut rem = flat;
                    let mut w = w0;
                    for j in (1..d).rev() {
                        let len = axes[j].len();
                        let (x, wj) = axes[j][rem % len];
                        rem /= len;
                        u[j] = x;
                        w *= wj;
                    }
                    acc.add(w * f(&u));
                }
            }
            acc.value()
        })
        .collect();
    kahan_sum(partials)
}

/// Median of unsorted values (mean of the middle pair for even length; NaN when empty).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        for m in [1usize, 2, 5, 8, 16, 33] {
            let rule = GaussLegendre::new(m);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "m={m}");
            for deg in 0..(2 * m) {
                let q: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-12, "m={m} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn composite_gaussian_integral() {
        // ∫_{-1}^{1} e^{-x²/t} dx ≈ √(πt) for small t
        let t = 1e-3;
        let v = integrate_box(&[-1.0], &[1.0], 512, |u| (-u[0] * u[0] / t).exp());
        assert!((v - (std::f64::consts::PI * t).sqrt()).abs() < 1e-12);
        let v2 = integrate_box(&[0.0, 0.0], &[1.0, 2.0], 16, |u| u[0] * u[1]);
        assert!((v2 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn kahan_beats_naive() {
        let mut xs = vec![1.0];
        xs.extend(std::iter::repeat_n(1e-16, 10_000));
        let naive: f64 = xs.iter().sum();
        let k = kahan_sum(xs.iter().copied());
        assert_eq!(naive, 1.0);
        assert!((k - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn gram_schmidt_drops_dependent() {
        let b = gram_schmidt(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(b.len(), 2);
        assert!(dot(&b[0], &b[1]).abs() < 1e-14);
    }
}

