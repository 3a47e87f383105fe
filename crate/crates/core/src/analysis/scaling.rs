use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnotatedCloud, SingularityKind};
use crate::numeric::fmt17;
use crate::operator::{GraphLaplacian, LaplacianConfig, Query};

/// Least-squares fit of `log|L_{n,t}f(x)|` against `log t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub point: Option<usize>,
    pub t_grid: Vec<f64>,
    /// `log|L|` per grid value; `None` where the value was zero and excluded.
    pub log_values: Vec<Option<f64>>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Log-spaced grid from `start` down to `end` with `count` points.
pub fn log_grid(start: f64, end: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(start > 0.0 && end > 0.0) {
        return Err(Error::param("t grid", "need positive endpoints and at least 2 points"));
    }
    let (a, b) = (start.ln(), end.ln());
    Ok((0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect())
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 4 {
        return Err(Error::param("t_grid", "need at least 4 bandwidths"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("t_grid", "bandwidths must be positive and strictly decreasing"));
    }
    Ok(())
}

/// Fits `values[k]` (signed) against `t_grid[k]`; zero values are excluded.
pub fn fit_power_law(t_grid: &[f64], values: &[f64]) -> Result<ScalingFit> {
    check_grid(t_grid)?;
    if values.len() != t_grid.len() {
        return Err(Error::param("values", "one value per bandwidth required"));
    }
    let log_values: Vec<Option<f64>> = values
        .iter()
        .map(|v| if *v != 0.0 && v.is_finite() { Some(v.abs().ln()) } else { None })
        .collect();
    let pairs: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&log_values)
        .filter_map(|(t, lv)| lv.map(|y| (t.ln(), y)))
        .collect();
    if pairs.len() < 4 {
        return Err(Error::Insufficient(format!(
            "{} nonzero values on the grid, need at least 4",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pairs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    if !slope.is_finite() {
        return Err(Error::Numerical("non-finite slope".into()));
    }
    Ok(ScalingFit { point: None, t_grid: t_grid.to_vec(), log_values, slope, intercept, r_squared })
}

/// Evaluates `L_{n,t}f` at cloud point `point` for every bandwidth in the grid
/// (truncation and dimension from `config_base`) and fits the slope.
pub fn scaling_fit(
    cloud: &AnnotatedCloud,
    values: &[f64],
    config_base: &LaplacianConfig,
    point: usize,
    t_grid: &[f64],
) -> Result<ScalingFit> {
    check_grid(t_grid)?;
    let series = t_grid
        .iter()
        .map(|&t| {
            let cfg = LaplacianConfig::with_truncation(t, config_base.d, config_base.truncation)?;
            Ok(GraphLaplacian::new(cfg, cloud)?.apply(values, &[Query::Index(point)])?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut fit = fit_power_law(t_grid, &series)?;
    fit.point = Some(point);
    Ok(fit)
}

/// Which cloud point a scaling fit is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointSelector {
    /// The sample nearest a singular set of this kind (nearest with `r > 0`
    /// for intersections, where the limit vanishes at `r = 0`).
    Near(SingularityKind),
    /// The sample farthest from every singular set.
    Interior,
    Index(usize),
}

impl std::str::FromStr for PointSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "interior" {
            return Ok(Self::Interior);
        }
        if let Ok(i) = s.parse::<usize>() {
            return Ok(Self::Index(i));
        }
        SingularityKind::parse(s).map(Self::Near).map_err(|_| {
            Error::param("points", format!("`{s}` is not boundary, intersection, edge, interior or an index"))
        })
    }
}

impl std::fmt::Display for PointSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Near(k) => f.write_str(k.as_str()),
            Self::Interior => f.write_str("interior"),
            Self::Index(i) => write!(f, "{i}"),
        }
    }
}

/// Resolves a selector against the cloud's annotations; ties go to the lower index.
pub fn select_point(cloud: &AnnotatedCloud, selector: PointSelector) -> Result<usize> {
    if let PointSelector::Index(i) = selector {
        return if i < cloud.len() {
            Ok(i)
        } else {
            Err(Error::param("points", format!("index {i} out of range for {} points", cloud.len())))
        };
    }
    let ann = cloud
        .annotations()
        .ok_or_else(|| Error::param("points", "named points need an annotated cloud"))?;
    let pick = match selector {
        PointSelector::Near(kind) => {
            let min_r = if kind == SingularityKind::Intersection { 1e-12 } else { f64::NEG_INFINITY };
            let mut best: Option<(usize, f64)> = None;
            for (i, a) in ann.iter().enumerate() {
                if a.kind == Some(kind) && a.r_ambient > min_r && best.is_none_or(|(_, r)| a.r_ambient < r) {
                    best = Some((i, a.r_ambient));
                }
            }
            best.map(|b| b.0)
        }
        PointSelector::Interior => {
            let mut best: Option<(usize, f64)> = None;
            for (i, a) in ann.iter().enumerate() {
                if best.is_none_or(|(_, r)| a.r_ambient > r) {
                    best = Some((i, a.r_ambient));
                }
            }
            best.map(|b| b.0)
        }
        PointSelector::Index(_) => unreachable!(),
    };
    pick.ok_or_else(|| Error::param("points", format!("cloud has no point near a {selector} singularity")))
}

/// Plot-ready `log_t,log_abs_L` rows (excluded points omitted).
pub fn write_scaling_csv<W: Write>(fit: &ScalingFit, mut out: W) -> Result<()> {
    writeln!(out, "log_t,log_abs_L")?;
    for (t, lv) in fit.t_grid.iter().zip(&fit.log_values) {
        if let Some(y) = lv {
            writeln!(out, "{},{}", fmt17(t.ln()), fmt17(*y))?;
        }
    }
    Ok(())
}
