use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use singlap::analysis::log_grid;
use singlap::geometry::{builtin_registry, Params, SampleMode};
use singlap::theory::Convention;
use singlap::{Error, Result};

/// Flags shared by every experiment subcommand. Which ones are required
/// depends on the subcommand and is checked before any computation.
#[derive(Args, Debug, Clone)]
pub struct Flags {
    /// Builtin geometry name.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Builtin parameter `key=value` (repeatable or comma separated; values may be `pi/4`).
    #[arg(long = "param", value_delimiter = ',')]
    pub params: Vec<String>,
    /// Point cloud CSV (or .json) instead of a builtin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Field spec: d1field, const:c, coord:k, expr:E, pieces:E0;E1 or a bare expression.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Bandwidth grid `start:end:count`, log-spaced.
    #[arg(long)]
    pub tgrid: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value = "grid")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "singlap-out")]
    pub out: PathBuf,
    /// Detection quantile.
    #[arg(long, default_value_t = 0.02)]
    pub q: f64,
    /// Number of eigenpairs (spectra) or compared nontrivial modes (compare).
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Modes whose eigenvectors are correlated in `compare` (default min(k, 16)).
    #[arg(long)]
    pub field_count: Option<usize>,
    #[arg(long, default_value = "lanczos")]
    pub solver: String,
    /// Query points: boundary, intersection, edge, interior or point indices.
    #[arg(long, value_delimiter = ',')]
    pub points: Vec<String>,
    /// Limit-formula convention: published or calibrated.
    #[arg(long, default_value = "published")]
    pub convention: String,
    /// Monte-Carlo trials for `bound`.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Deviation thresholds for `bound` (default: grid scaled by the trial spread).
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    /// Kernel truncation radius in units of √t.
    #[arg(long, default_value_t = singlap::operator::DEFAULT_TRUNCATION)]
    pub truncation: f64,
    /// Quadrature resolution safety factor.
    #[arg(long, default_value_t = 2.0)]
    pub resolution_factor: f64,
    /// Detection ground-truth radius in units of √t.
    #[arg(long, default_value_t = 5.0)]
    pub truth_radius: f64,
    /// Also run the boundary-derivative check in `spectra`.
    #[arg(long)]
    pub neumann: bool,
    /// Worker threads (default: all cores).
    #[arg(long, env = "SINGLAP_THREADS")]
    pub threads: Option<usize>,
    /// Validate and print the resolved configuration without computing.
    #[arg(long)]
    pub dry_run: bool,
}

/// Fully resolved configuration, recorded in every manifest.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub builtin: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub input: Option<PathBuf>,
    pub field: Option<String>,
    pub t: Option<f64>,
    pub tgrid: Option<Vec<f64>>,
    pub n: usize,
    pub mode: SampleMode,
    pub seed: u64,
    pub out: PathBuf,
    pub q: f64,
    pub k: usize,
    pub field_count: Option<usize>,
    pub solver: String,
    pub points: Vec<String>,
    pub convention: Convention,
    pub trials: usize,
    pub eps: Option<Vec<f64>>,
    pub truncation: f64,
    pub resolution_factor: f64,
    pub truth_radius: f64,
    pub neumann: bool,
    pub threads: Option<usize>,
}

pub fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.into(), reason: reason.into() }
}

fn parse_tgrid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, m] = parts[..] else {
        return Err(invalid("tgrid", format!("expected start:end:count, got `{s}`")));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| invalid("tgrid", format!("`{v}` is not a number")));
    let count = m.trim().parse::<usize>().map_err(|_| invalid("tgrid", format!("`{m}` is not a count")))?;
    let mut grid = log_grid(num(a)?, num(b)?, count)?;
    // decreasing order is what the fits expect, whichever way round it was written
    grid.sort_by(|x, y| y.total_cmp(x));
    Ok(grid)
}

impl RunConfig {
    pub fn resolve(command: &str, f: &Flags) -> Result<Self> {
        let params = match &f.builtin {
            Some(name) => {
                let b = builtin_registry().get(name)?;
                let p = Params::parse(f.params.iter().map(String::as_str))?;
                b.resolve_params(&p)?.iter().map(|(k, v)| (k.clone(), *v)).collect()
            }
            None if !f.params.is_empty() => return Err(invalid("param", "only meaningful with --builtin")),
            None => BTreeMap::new(),
        };
        if let Some(t) = f.t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("t", format!("must be positive, got {t}")));
            }
        }
        if f.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        Ok(Self {
            command: command.to_string(),
            builtin: f.builtin.clone(),
            params,
            input: f.input.clone(),
            field: f.field.clone(),
            t: f.t,
            tgrid: f.tgrid.as_deref().map(parse_tgrid).transpose()?,
            n: f.n,
            mode: f.mode.parse()?,
            seed: f.seed,
            out: f.out.clone(),
            q: f.q,
            k: f.k,
            field_count: f.field_count,
            solver: f.solver.clone(),
            points: f.points.iter().map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect(),
            convention: Convention::parse(&f.convention)?,
            trials: f.trials,
            eps: (!f.eps.is_empty()).then(|| f.eps.clone()),
            truncation: f.truncation,
            resolution_factor: f.resolution_factor,
            truth_radius: f.truth_radius,
            neumann: f.neumann,
            threads: f.threads,
        })
    }

    pub fn builtin_params(&self) -> Params {
        self.params.iter().fold(Params::new(), |p, (k, v)| p.with(k, *v))
    }

    pub fn require_t(&self) -> Result<f64> {
        self.t.ok_or_else(|| invalid("t", format!("`{}` needs --t", self.command)))
    }

    pub fn require_field(&self) -> Result<&str> {
        self.field.as_deref().ok_or_else(|| invalid("field", format!("`{}` needs --field", self.command)))
    }

    pub fn require_builtin(&self) -> Result<&str> {
        if self.input.is_some() {
            return Err(invalid("input", format!("`{}` works on builtins only", self.command)));
        }
        self.builtin.as_deref().ok_or_else(|| invalid("builtin", format!("`{}` needs --builtin", self.command)))
    }

    /// Exactly one of --builtin and --input.
    pub fn require_source(&self) -> Result<()> {
        match (&self.builtin, &self.input) {
            (Some(_), Some(_)) => Err(invalid("input", "give either --builtin or --input, not both")),
            (None, None) => Err(invalid("builtin", format!("`{}` needs --builtin or --input", self.command))),
            (None, Some(p)) if !p.exists() => Err(invalid("input", format!("{} does not exist", p.display()))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tgrid_is_decreasing() {
        let g = parse_tgrid("1e-5:1e-2:4").unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[0] - 1e-2).abs() < 1e-15 && (g[3] - 1e-5).abs() < 1e-18);
        assert!(parse_tgrid("1e-2:1e-5").is_err());
    }
}
