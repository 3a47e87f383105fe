use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_stream, SingularManifold};
use crate::operator::{GraphLaplacian, LaplacianConfig, Query, ScalarField};
use crate::theory::{bound_thm4, bound_thm4_raw, field_oscillation, kernel_mass, quadrature_lt, resolution_for, BoundParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCheck {
    pub eps: f64,
    pub frequency: f64,
    pub bound: f64,
    pub raw_bound: f64,
    pub clamped: bool,
    /// Binomial standard deviation of the frequency under the bound.
    pub binomial_sd: f64,
    /// `frequency ≤ bound + 3·binomial_sd`.
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub n: usize,
    pub t: f64,
    pub trials: usize,
    pub seed: u64,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    /// `L_t f(x)` from the quadrature oracle.
    pub oracle: f64,
    pub bound_params: BoundParams,
    pub checks: Vec<EpsilonCheck>,
}

/// Monte-Carlo study of `L_{n,t}f(x)` over independent i.i.d. clouds; trial
/// `k` uses stream `k` of `seed`. `eps` defaults to 8 log-spaced values in
/// `[0.1, 10]` times the empirical standard deviation.
#[allow(clippy::too_many_arguments)]
pub fn deviation_mc(
    m: &SingularManifold,
    field: &ScalarField,
    x: &[f64],
    piece: usize,
    n: usize,
    config: &LaplacianConfig,
    trials: usize,
    seed: u64,
    eps: Option<&[f64]>,
) -> Result<DeviationStats> {
    if trials < 100 {
        return Err(Error::param("trials", format!("need at least 100, got {trials}")));
    }
    let fx = field.value(piece, x)?;
    let values = (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let cloud = sample_stream(m, n, seed, k)?;
            let vals = field.sample(&cloud)?;
            let q = Query::External { point: x.to_vec(), piece, value: Some(fx) };
            Ok(GraphLaplacian::new(*config, &cloud)?.apply(&vals, &[q])?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let std_dev = var.sqrt();

    let t = config.t;
    let res = resolution_for(m, t, 2.0);
    let oracle = quadrature_lt(m, field, x, piece, t, res)?;
    let c_g = kernel_mass(m, x, t, res)?;
    let sup = field_oscillation(m, field, x, piece, 257)?;
    let bound_params = BoundParams::from_constants(sup, m.density().upper(), c_g, m.intrinsic_dim())?;

    let grid: Vec<f64> = match eps {
        Some(e) => e.to_vec(),
        None => (0..8)
            .map(|k| std_dev * (0.1f64.ln() + (100.0f64).ln() * k as f64 / 7.0).exp())
            .collect(),
    };
    let checks = grid
        .iter()
        .filter(|e| **e > 0.0)
        .map(|&e| {
            let frequency = values.iter().filter(|v| (*v - oracle).abs() > e).count() as f64 / trials as f64;
            let bound = bound_thm4(&bound_params, n, t, e)?;
            let raw_bound = bound_thm4_raw(&bound_params, n, t, e);
            let binomial_sd = (bound * (1.0 - bound) / trials as f64).sqrt();
            Ok(EpsilonCheck {
                eps: e,
                frequency,
                bound,
                raw_bound,
                clamped: raw_bound >= 1.0,
                binomial_sd,
                within: frequency <= bound + 3.0 * binomial_sd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeviationStats { n, t, trials, seed, values, mean, std_dev, oracle, bound_params, checks })
}
