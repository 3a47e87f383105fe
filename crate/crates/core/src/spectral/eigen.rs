use std::cmp::Ordering;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cholesky::{EnvelopeCholesky, EnvelopePlan};
use crate::error::{Error, Result};
use crate::numeric::{dot, norm};
use crate::operator::SparseLaplacian;
use crate::registry::{Named, Registry};

pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, Serialize)]
pub struct SolveOptions {
    /// Relative Ritz residual target inside the Krylov iteration.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; defaults to `max(2k + 20, k + 40)` capped at `n`.
    pub ncv: Option<usize>,
    /// Byte cap for the Cholesky envelope; above it the solver iterates on `‖L‖I − L`.
    pub memory_cap: usize,
    /// Factorization budget in multiply-adds; above it the solver also iterates on
    /// `‖L‖I − L`, which is cheaper for nearly dense matrices.
    pub factor_budget: f64,
    pub dense_limit: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_restarts: 400, ncv: None, memory_cap: 2 << 30, factor_budget: 4e9, dense_limit: DENSE_LIMIT, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub solver: String,
    pub mode: String,
    pub n: usize,
    pub k: usize,
    /// Bandwidth of the Laplacian the spectrum was taken from.
    pub t: f64,
    pub norm: f64,
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    pub restarts: usize,
    pub operator_applications: usize,
}

impl SpectrumReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    pub fn converged_prefix(&self) -> usize {
        self.converged.iter().take_while(|&&c| c).count()
    }
}

pub trait Eigensolver: Named + Send + Sync {
    /// Smallest `k` eigenpairs of the symmetric positive semidefinite `l`.
    fn solve(&self, l: &SparseLaplacian, k: usize, opts: &SolveOptions) -> Result<SpectrumReport>;
}

pub struct DenseSolver;

pub struct LanczosSolver;

impl Named for DenseSolver {
    fn name(&self) -> &'static str {
        "dense"
    }
}

impl Named for LanczosSolver {
    fn name(&self) -> &'static str {
        "lanczos"
    }
}

pub fn solver_registry() -> &'static Registry<dyn Eigensolver> {
    static REG: OnceLock<Registry<dyn Eigensolver>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Eigensolver> = Registry::new("eigensolver");
        r.register(Arc::new(LanczosSolver));
        r.register(Arc::new(DenseSolver));
        r
    })
}

fn check_k(l: &SparseLaplacian, k: usize) -> Result<()> {
    if k == 0 || k > l.n() {
        return Err(Error::param("k", format!("must lie in 1..={}, got {k}", l.n())));
    }
    Ok(())
}

impl Eigensolver for DenseSolver {
    fn solve(&self, l: &SparseLaplacian, k: usize, opts: &SolveOptions) -> Result<SpectrumReport> {
        check_k(l, k)?;
        let n = l.n();
        if n > opts.dense_limit {
            return Err(Error::param("n", format!("dense solver limited to n <= {}, got {n}", opts.dense_limit)));
        }
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let (cols, vals) = l.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                a[(i, j)] = v;
            }
        }
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let pairs = order[..k]
            .iter()
            .map(|&c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect()))
            .collect();
        Ok(finish(l, pairs, "dense", "direct", 0, 0))
    }
}

impl Eigensolver for LanczosSolver {
    fn solve(&self, l: &SparseLaplacian, k: usize, opts: &SolveOptions) -> Result<SpectrumReport> {
        check_k(l, k)?;
        let n = l.n();
        if n <= 64 {
            let mut report = DenseSolver.solve(l, k, opts)?;
            report.solver = "lanczos".into();
            return Ok(report);
        }
        let norm = l.norm_inf().max(f64::MIN_POSITIVE);
        let shift = 1e-5 * norm;
        let plan = EnvelopePlan::new(l);
        let factored = if plan.flops() <= opts.factor_budget && plan.bytes() <= opts.memory_cap {
            Some(EnvelopeCholesky::factor_planned(l, plan, shift, opts.memory_cap)?)
        } else {
            None
        };
        match factored {
            Some(chol) => {
                let op = |x: &[f64], y: &mut [f64]| chol.solve(x, y);
                let run = largest_pairs(&op, n, k, opts);
                let pairs = run.pairs.into_iter().map(|(theta, v)| (1.0 / theta - shift, v)).collect();
                Ok(finish(l, pairs, "lanczos", "shift-invert", run.restarts, run.applications))
            }
            None => {
                // Gershgorin bound: the spectrum of L lies in [0, ‖L‖∞]
                let op = |x: &[f64], y: &mut [f64]| {
                    l.matvec(x, y);
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi = norm * xi - *yi;
                    }
                };
                let run = largest_pairs(&op, n, k, opts);
                let pairs = run.pairs.into_iter().map(|(theta, v)| (norm - theta, v)).collect();
                Ok(finish(l, pairs, "lanczos", "reflected", run.restarts, run.applications))
            }
        }
    }
}

struct Run {
    pairs: Vec<(f64, Vec<f64>)>,
    restarts: usize,
    applications: usize,
}

/// The `k` largest eigenpairs of a symmetric operator. A single Krylov
/// sequence can miss copies of a repeated eigenvalue, so after convergence the
/// iteration is rerun orthogonally to the pairs found and any larger Ritz
/// values are merged in, until a rerun finds nothing new.
fn largest_pairs(op: &dyn Fn(&[f64], &mut [f64]), n: usize, k: usize, opts: &SolveOptions) -> Run {
    let mut run = thick_restart(op, n, k, &[], opts);
    for round in 1..=k {
        let locked: Vec<Vec<f64>> = run.pairs.iter().map(|p| p.1.clone()).collect();
        if locked.len() >= n {
            break;
        }
        let floor = run.pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let want = k.min(4).min(n - locked.len());
        let check_opts = SolveOptions { seed: opts.seed.wrapping_add(round as u64), ncv: None, ..opts.clone() };
        let extra = thick_restart(op, n, want, &locked, &check_opts);
        run.restarts += extra.restarts;
        run.applications += extra.applications;
        let margin = 10.0 * opts.tol * floor.abs();
        let missed: Vec<(f64, Vec<f64>)> = extra.pairs.into_iter().filter(|p| p.0 > floor + margin).collect();
        if missed.is_empty() {
            break;
        }
        run.pairs.extend(missed);
        run.pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        run.pairs.truncate(k);
    }
    run
}

/// Thick-restart Lanczos for the `k` largest eigenpairs of a symmetric operator
/// restricted to the complement of `locked`, with two-pass full
/// reorthogonalization against the whole basis.
fn thick_restart(op: &dyn Fn(&[f64], &mut [f64]), n: usize, k: usize, locked: &[Vec<f64>], opts: &SolveOptions) -> Run {
    let room = n - locked.len();
    let ncv = opts.ncv.unwrap_or((2 * k + 20).max(k + 40)).clamp(k + 1, room.max(k + 1)).min(room);
    let k = k.min(ncv);
    let keep_target = (k + (ncv - k) / 2).min(ncv - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(ncv + 1);
    let mut h = DMatrix::<f64>::zeros(ncv, ncv);
    basis.push(random_unit(&mut rng, n, locked, &[]));
    let mut applications = 0;
    let mut w = vec![0.0; n];
    let mut restarts = 0;
    let mut start = 0;
    loop {
        let mut beta = 0.0;
        for c in start..ncv {
            op(&basis[c], &mut w);
            applications += 1;
            let mut coeff = vec![0.0; basis.len()];
            for _ in 0..2 {
                for b in locked {
                    let p = dot(b, &w);
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= p * bi;
                    }
                }
                for (i, b) in basis.iter().enumerate() {
                    let p = dot(b, &w);
                    coeff[i] += p;
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= p * bi;
                    }
                }
            }
            for (i, &p) in coeff.iter().enumerate() {
                h[(i, c)] = p;
                h[(c, i)] = p;
            }
            beta = norm(&w);
            let scale = coeff.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            if c + 1 < ncv {
                if beta <= 1e-14 * scale {
                    // invariant subspace: continue with a fresh direction
                    basis.push(random_unit(&mut rng, n, locked, &basis));
                } else {
                    basis.push(w.iter().map(|v| v / beta).collect());
                }
                // with an exhausted direction the coupling is exactly zero
                let coupling = if beta <= 1e-14 * scale { 0.0 } else { beta };
                h[(c + 1, c)] = coupling;
                h[(c, c + 1)] = coupling;
            }
        }
        let eig = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..ncv).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let converged = order[..k].iter().all(|&c| {
            let theta = eig.eigenvalues[c];
            (beta * eig.eigenvectors[(ncv - 1, c)]).abs() <= opts.tol * theta.abs().max(f64::MIN_POSITIVE)
        });
        let done = converged || restarts >= opts.max_restarts || ncv == room;
        let keep = if done { k } else { keep_target };
        let ritz: Vec<Vec<f64>> = order[..keep]
            .iter()
            .map(|&c| {
                let y = eig.eigenvectors.column(c);
                let mut v = vec![0.0; n];
                for (j, b) in basis.iter().enumerate() {
                    let yj = y[j];
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi += yj * bi;
                    }
                }
                v
            })
            .collect();
        if done {
            let pairs = order[..k].iter().zip(ritz).map(|(&c, v)| (eig.eigenvalues[c], v)).collect();
            return Run { pairs, restarts, applications };
        }
        restarts += 1;
        let next = if beta > 0.0 { w.iter().map(|v| v / beta).collect() } else { random_unit(&mut rng, n, locked, &ritz) };
        h.fill(0.0);
        for (i, &c) in order[..keep].iter().enumerate() {
            h[(i, i)] = eig.eigenvalues[c];
            let s = beta * eig.eigenvectors[(ncv - 1, c)];
            h[(i, keep)] = s;
            h[(keep, i)] = s;
        }
        basis = ritz;
        basis.push(next);
        start = keep;
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, locked: &[Vec<f64>], against: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for b in locked.iter().chain(against) {
                let p = dot(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= p * bi;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Rayleigh refinement, residual check against `1e-8‖L‖∞`, sign normalization
/// (largest-magnitude component positive) and ordering by eigenvalue with a
/// lexicographic tie-break on the eigenvector.
fn finish(
    l: &SparseLaplacian,
    pairs: Vec<(f64, Vec<f64>)>,
    solver: &str,
    mode: &str,
    restarts: usize,
    applications: usize,
) -> SpectrumReport {
    let n = l.n();
    let norm_l = l.norm_inf();
    let mut refined: Vec<(f64, Vec<f64>, f64)> = pairs
        .into_iter()
        .map(|(_, mut v)| {
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let lv = l.mul(&v);
            let lambda = dot(&v, &lv);
            let r: Vec<f64> = lv.iter().zip(&v).map(|(a, b)| a - lambda * b).collect();
            normalize_sign(&mut v);
            (lambda, v, norm(&r))
        })
        .collect();
    refined.sort_by(|a, b| match a.0.total_cmp(&b.0) {
        Ordering::Equal => lexicographic(&a.1, &b.1),
        o => o,
    });
    let tol = 1e-8 * norm_l.max(f64::MIN_POSITIVE);
    SpectrumReport {
        solver: solver.into(),
        mode: mode.into(),
        n,
        k: refined.len(),
        t: l.config.t,
        norm: norm_l,
        eigenvalues: refined.iter().map(|p| p.0).collect(),
        converged: refined.iter().map(|p| p.2 <= tol).collect(),
        residuals: refined.iter().map(|p| p.2).collect(),
        eigenvectors: refined.into_iter().map(|p| p.1).collect(),
        restarts,
        operator_applications: applications,
    }
}

pub fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Solve with a registered solver by name.
pub fn solve_spectrum(l: &SparseLaplacian, k: usize, solver: &str, opts: &SolveOptions) -> Result<SpectrumReport> {
    solver_registry().get(solver)?.solve(l, k, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_builtin, sample, Params, SampleMode};
    use crate::operator::{laplacian_matrix, LaplacianConfig};

    fn matrix(name: &str, n: usize, t: f64, d: usize) -> SparseLaplacian {
        let m = build_builtin(name, &Params::new()).unwrap();
        let cloud = sample(&m, n, SampleMode::Grid, 0).unwrap();
        laplacian_matrix(&LaplacianConfig::new(t, d).unwrap(), &cloud, None).unwrap()
    }

    #[test]
    fn lanczos_matches_dense() {
        let l = matrix("folded_rectangle", 700, 3e-3, 2);
        let opts = SolveOptions::default();
        let a = LanczosSolver.solve(&l, 12, &opts).unwrap();
        let b = DenseSolver.solve(&l, 12, &opts).unwrap();
        assert!(a.all_converged() && b.all_converged());
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 1e-9 * a.norm, "{x} {y}");
        }
        assert!(a.eigenvalues[0].abs() < 1e-8 * a.norm);
        for (u, v) in a.eigenvectors.iter().zip(&b.eigenvectors).skip(1).take(6) {
            assert!(dot(u, v).abs() > 1.0 - 1e-6);
        }
    }

    #[test]
    fn reflected_mode_when_envelope_over_cap() {
        let l = matrix("interval", 200, 1e-3, 1);
        let opts = SolveOptions { memory_cap: 8, ..Default::default() };
        let a = LanczosSolver.solve(&l, 4, &opts).unwrap();
        assert_eq!(a.mode, "reflected");
        let b = DenseSolver.solve(&l, 4, &opts).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 1e-8 * a.norm, "{x} {y}");
        }
    }

    #[test]
    fn sign_rule() {
        let mut v = vec![0.1, -0.9, 0.3];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }
}
