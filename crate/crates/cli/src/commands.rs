use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use singlap::analysis::{deviation_mc, detect, scaling_fit, select_point, write_scaling_csv, PointSelector};
use singlap::geometry::{
    build_builtin, builtin_registry, read_cloud_csv, read_cloud_json, sample, write_cloud_csv, write_cloud_json,
    AnnotatedCloud, SampleMode, SingularManifold, SingularityKind,
};
use singlap::numeric::fmt17;
use singlap::operator::{laplacian_matrix, GraphLaplacian, LaplacianConfig, Query, ScalarField};
use singlap::registry::{Named, Registry};
use singlap::spectral::{
    codim2_locality, fold_invariance, neumann_check, solver_registry, write_eigenvectors_csv,
    SolveOptions, SolverChoice,
};
use singlap::theory::{
    limit_registry, model_for, quadrature_lt, resolution_for, PointContext, PredictionReport,
};
use singlap::{Error, Result};

use crate::config::{invalid, RunConfig};

/// Files written by a run, relative to the output directory.
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        body(&mut w)?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

/// One experiment subcommand.
pub trait Command: Named + Send + Sync {
    /// Checks flag combinations without computing anything.
    fn validate(&self, cfg: &RunConfig) -> Result<()>;
    /// Runs the experiment, writing artifacts; returns the summary printed on stdout.
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value>;
}

pub fn command_registry() -> Registry<dyn Command> {
    let mut reg: Registry<dyn Command> = Registry::new("subcommand");
    reg.register(Arc::new(SampleCmd))
        .register(Arc::new(ApplyCmd))
        .register(Arc::new(PredictCmd))
        .register(Arc::new(ScalingCmd))
        .register(Arc::new(DetectCmd))
        .register(Arc::new(SpectraCmd))
        .register(Arc::new(CompareCmd))
        .register(Arc::new(BoundCmd))
        .register(Arc::new(OracleCmd));
    reg
}

macro_rules! named {
    ($ty:ident, $name:literal) => {
        pub struct $ty;
        impl Named for $ty {
            fn name(&self) -> &'static str {
                $name
            }
        }
    };
}

named!(SampleCmd, "sample");
named!(ApplyCmd, "apply");
named!(PredictCmd, "predict");
named!(ScalingCmd, "scaling");
named!(DetectCmd, "detect");
named!(SpectraCmd, "spectra");
named!(CompareCmd, "compare");
named!(BoundCmd, "bound");
named!(OracleCmd, "oracle");

fn manifold(cfg: &RunConfig) -> Result<SingularManifold> {
    build_builtin(cfg.require_builtin()?, &cfg.builtin_params())
}

fn check_mode(cfg: &RunConfig) -> Result<()> {
    if cfg.mode == SampleMode::External {
        return Err(invalid("mode", "use grid or iid; external clouds are read with --input"));
    }
    if cfg.n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    Ok(())
}

/// The cloud a run works on, with its generating manifold when there is one.
fn load_cloud(cfg: &RunConfig) -> Result<(Option<SingularManifold>, AnnotatedCloud)> {
    match &cfg.input {
        Some(path) => {
            let file = File::open(path)?;
            let cloud = if path.extension().is_some_and(|e| e == "json") {
                read_cloud_json(file)?
            } else {
                read_cloud_csv(file)?
            };
            Ok((None, cloud))
        }
        None => {
            let m = manifold(cfg)?;
            let cloud = sample(&m, cfg.n, cfg.mode, cfg.seed)?;
            Ok((Some(m), cloud))
        }
    }
}

fn config_at(cfg: &RunConfig, t: f64, d: usize) -> Result<LaplacianConfig> {
    LaplacianConfig::with_truncation(t, d, cfg.truncation)
}

fn selectors(cfg: &RunConfig, m: Option<&SingularManifold>) -> Result<Vec<PointSelector>> {
    if !cfg.points.is_empty() {
        return cfg.points.iter().map(|p| p.parse()).collect();
    }
    let Some(m) = m else {
        return Err(invalid("points", "external clouds need explicit point indices"));
    };
    let mut out: Vec<PointSelector> = [SingularityKind::Boundary, SingularityKind::Intersection, SingularityKind::Edge]
        .into_iter()
        .filter(|k| m.singularities().iter().any(|s| s.kind == *k))
        .map(PointSelector::Near)
        .collect();
    out.push(PointSelector::Interior);
    Ok(out)
}

fn validate_points(cfg: &RunConfig) -> Result<()> {
    for p in &cfg.points {
        p.parse::<PointSelector>()?;
    }
    Ok(())
}

fn validate_field(cfg: &RunConfig) -> Result<()> {
    let dim = match &cfg.builtin {
        Some(_) => manifold(cfg)?.ambient_dim(),
        None => usize::MAX,
    };
    let spec = cfg.require_field()?;
    if dim != usize::MAX {
        ScalarField::parse(spec, dim)?;
    }
    Ok(())
}

fn point_json(cloud: &AnnotatedCloud, i: usize) -> Value {
    json!({ "index": i, "piece": cloud.piece_of(i), "x": cloud.point(i) })
}

impl Command for SampleCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        check_mode(cfg)?;
        manifold(cfg).map(|_| ())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (m, cloud) = load_cloud(cfg)?;
        out.write("cloud.csv", |w| write_cloud_csv(&cloud, w))?;
        out.write("cloud.json", |w| write_cloud_json(&cloud, w))?;
        let m = m.expect("builtin");
        Ok(json!({
            "n": cloud.len(),
            "ambient_dim": cloud.ambient_dim(),
            "intrinsic_dim": cloud.intrinsic_dim(),
            "pieces": m.pieces().len(),
            "singularities": m.singularities().len(),
        }))
    }
}

impl Command for ApplyCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_source()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        validate_field(cfg)
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (_, cloud) = load_cloud(cfg)?;
        let t = cfg.require_t()?;
        let field = ScalarField::parse(cfg.require_field()?, cloud.ambient_dim())?;
        let values = field.sample(&cloud)?;
        let lap = GraphLaplacian::new(config_at(cfg, t, cloud.intrinsic_dim())?, &cloud)?;
        let l = lap.apply_all(&values)?;
        out.write("values.csv", |w| {
            writeln!(w, "index,f,L")?;
            for (i, (f, v)) in values.iter().zip(&l).enumerate() {
                writeln!(w, "{i},{},{}", fmt17(*f), fmt17(*v))?;
            }
            Ok(())
        })?;
        let max_abs = l.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(json!({ "n": cloud.len(), "t": t, "max_abs_L": max_abs }))
    }
}

impl Command for PredictCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_builtin()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        validate_field(cfg)?;
        validate_points(cfg)
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (m, cloud) = load_cloud(cfg)?;
        let m = m.expect("builtin");
        let t = cfg.require_t()?;
        let field = ScalarField::parse(cfg.require_field()?, cloud.ambient_dim())?;
        let values = field.sample(&cloud)?;
        let lap = GraphLaplacian::new(config_at(cfg, t, m.intrinsic_dim())?, &cloud)?;
        let res = resolution_for(&m, t, cfg.resolution_factor);
        let models = limit_registry();
        let mut rows = Vec::new();
        for sel in selectors(cfg, Some(&m))? {
            let i = select_point(&cloud, sel)?;
            let x = cloud.point(i);
            let piece = cloud.piece_of(i);
            // beyond 6√t every singular term is below e^{-36}
            let ann = cloud.annotation(i).expect("builtin clouds are annotated").with_horizon(6.0 * t.sqrt());
            let model = models.get(model_for(&ann))?;
            let ctx = PointContext {
                manifold: &m,
                field: &field,
                piece,
                x,
                annotation: &ann,
                t,
                convention: cfg.convention,
            };
            let pred = model.predict(&ctx)?;
            let oracle = quadrature_lt(&m, &field, x, piece, t, res)?;
            let empirical = lap.apply(&values, &[Query::Index(i)])?[0];
            let report = PredictionReport::new(&pred, &ann, t, Some(oracle), Some(empirical));
            rows.push(json!({
                "selector": sel.to_string(),
                "point": point_json(&cloud, i),
                "model": model.name(),
                "predicted": pred.value(t),
                "report": report,
            }));
        }
        let summary = json!({ "t": t, "convention": cfg.convention, "resolution": res, "predictions": rows });
        out.json("predictions.json", &summary)?;
        Ok(summary)
    }
}

impl Command for ScalingCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_source()?;
        check_mode(cfg)?;
        validate_field(cfg)?;
        validate_points(cfg)?;
        if cfg.input.is_some() && cfg.points.is_empty() {
            return Err(invalid("points", "external clouds need explicit point indices"));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (m, cloud) = load_cloud(cfg)?;
        let grid = cfg.tgrid.clone().unwrap_or(singlap::analysis::log_grid(1e-2, 1e-5, 7)?);
        let field = ScalarField::parse(cfg.require_field()?, cloud.ambient_dim())?;
        let values = field.sample(&cloud)?;
        let base = config_at(cfg, grid[0], cloud.intrinsic_dim())?;
        let mut rows = Vec::new();
        for sel in selectors(cfg, m.as_ref())? {
            let i = select_point(&cloud, sel)?;
            let fit = scaling_fit(&cloud, &values, &base, i, &grid)?;
            out.write(&format!("scaling_{sel}.csv"), |w| write_scaling_csv(&fit, w))?;
            rows.push(json!({
                "selector": sel.to_string(),
                "point": point_json(&cloud, i),
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "log_values": fit.log_values,
            }));
        }
        let summary = json!({ "t_grid": grid, "fits": rows });
        out.json("scaling.json", &summary)?;
        Ok(summary)
    }
}

impl Command for DetectCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_source()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        validate_field(cfg)?;
        if !(cfg.q > 0.0 && cfg.q < 1.0) {
            return Err(invalid("q", format!("must lie in (0, 1), got {}", cfg.q)));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (_, cloud) = load_cloud(cfg)?;
        let t = cfg.require_t()?;
        let field = ScalarField::parse(cfg.require_field()?, cloud.ambient_dim())?;
        let values = field.sample(&cloud)?;
        let l = GraphLaplacian::new(config_at(cfg, t, cloud.intrinsic_dim())?, &cloud)?.apply_all(&values)?;
        let report = detect(&cloud, &l, t, cfg.q, cfg.truth_radius)?;
        out.write("scores.csv", |w| {
            writeln!(w, "index,score,flagged")?;
            for (i, s) in report.scores.iter().enumerate() {
                let flagged = report.flagged.binary_search(&i).is_ok();
                writeln!(w, "{i},{},{}", fmt17(*s), u8::from(flagged))?;
            }
            Ok(())
        })?;
        let summary = json!({
            "t": t,
            "q": report.q,
            "median": report.median,
            "flagged": report.flagged,
            "degenerate": report.degenerate,
            "truth_radius": report.truth_radius,
            "confusion": report.confusion,
            "precision": report.precision,
            "recall": report.recall,
        });
        out.json("detection.json", &summary)?;
        Ok(summary)
    }
}

fn solver_choice(cfg: &RunConfig) -> SolverChoice {
    SolverChoice { name: cfg.solver.clone(), options: SolveOptions { seed: cfg.seed, ..Default::default() } }
}

impl Command for SpectraCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_source()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        solver_registry().get(&cfg.solver)?;
        if cfg.k == 0 {
            return Err(invalid("k", "must be positive"));
        }
        if cfg.neumann && cfg.builtin.is_none() {
            return Err(invalid("neumann", "needs a builtin with boundary"));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (m, cloud) = load_cloud(cfg)?;
        let t = cfg.require_t()?;
        let l = laplacian_matrix(&config_at(cfg, t, cloud.intrinsic_dim())?, &cloud, None)?;
        let report = solver_choice(cfg).solve(&l, cfg.k)?;
        out.write("eigenvectors.csv", |w| write_eigenvectors_csv(&report, w))?;
        let mut summary = serde_json::to_value(&report)?;
        if cfg.neumann {
            let m = m.expect("validated");
            let checked = cfg.k.saturating_sub(1);
            summary["neumann"] = serde_json::to_value(neumann_check(&report, &cloud, &m, checked)?)?;
        }
        out.json("spectrum.json", &summary)?;
        if !report.all_converged() {
            return Err(Error::Numerical(format!(
                "{} of {} eigenpairs missed the residual target",
                report.converged.iter().filter(|c| !**c).count(),
                report.k
            )));
        }
        Ok(summary)
    }
}

impl Command for CompareCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        let name = cfg.require_builtin()?;
        check_mode(cfg)?;
        solver_registry().get(&cfg.solver)?;
        let b = builtin_registry().get(name)?;
        match b.build_twin(&cfg.builtin_params()) {
            None => return Err(invalid("builtin", format!("`{name}` has no twin to compare against"))),
            Some(r) => r.map(|_| ())?,
        }
        if cfg.k == 0 {
            return Err(invalid("k", "must be positive"));
        }
        if cfg.tgrid.is_none() {
            cfg.require_t()?;
        }
        if cfg.field_count.is_some_and(|c| c > cfg.k) {
            return Err(invalid("field_count", "cannot exceed k"));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let name = cfg.require_builtin()?;
        let b = builtin_registry().get(name)?;
        let this = b.build(&cfg.builtin_params())?;
        let twin = b.build_twin(&cfg.builtin_params()).expect("validated")?;
        // the reference spectrum is the member with fewer singular sets; on a tie the twin,
        // which builtins define as the unfolded counterpart
        let (reference, other) = if twin.singularities().len() <= this.singularities().len() {
            (twin, this)
        } else {
            (this, twin)
        };
        let solver = solver_choice(cfg);
        let codim2 = reference.intrinsic_dim() + 2 <= reference.ambient_dim()
            && [&reference, &other].iter().any(|m| m.singularities().iter().any(|s| s.locus.dim() + 2 <= m.intrinsic_dim()));
        let summary = if codim2 {
            let grid = cfg.tgrid.clone().unwrap_or(singlap::spectral::LOCALITY_T_GRID.to_vec());
            let per_piece = cfg.n / other.pieces().len();
            let r = codim2_locality(&other, &reference, per_piece, &grid, cfg.k, &solver)?;
            json!({ "experiment": "codim2_locality", "reference": reference.name, "other": other.name, "report": r })
        } else {
            let t = cfg.require_t()?;
            let count = cfg.field_count.unwrap_or(cfg.k.min(16));
            let r = fold_invariance(&reference, &other, count, cfg.n, t, cfg.k, &solver)?;
            let mut v = json!({
                "experiment": "fold_invariance",
                "reference": reference.name,
                "other": other.name,
                "n": r.n,
                "t": r.t,
                "k": r.k,
                "diff_by_k": r.diff_by_k,
                "correlations": r.correlations,
                "eigenvalues_reference": r.smooth.eigenvalues,
                "eigenvalues_other": r.folded.eigenvalues,
                "converged": r.smooth.all_converged() && r.folded.all_converged(),
            });
            for j in [10, r.k] {
                if let Some(d) = r.diff(j) {
                    v[format!("diff_{j}")] = json!(d);
                }
            }
            v
        };
        out.json("compare.json", &summary)?;
        Ok(summary)
    }
}

fn single_point(cfg: &RunConfig, cloud: &AnnotatedCloud) -> Result<(usize, PointSelector)> {
    let sel = match cfg.points.as_slice() {
        [] => PointSelector::Interior,
        [p] => p.parse()?,
        _ => return Err(invalid("points", "bound takes a single point")),
    };
    Ok((select_point(cloud, sel)?, sel))
}

impl Command for BoundCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_builtin()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        validate_field(cfg)?;
        validate_points(cfg)?;
        if cfg.points.len() > 1 {
            return Err(invalid("points", "bound takes a single point"));
        }
        if cfg.trials < 100 {
            return Err(invalid("trials", "need at least 100"));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let m = manifold(cfg)?;
        let t = cfg.require_t()?;
        let field = ScalarField::parse(cfg.require_field()?, m.ambient_dim())?;
        // the query point is picked on a fixed grid, independent of the trials
        let probe = sample(&m, cfg.n, SampleMode::Grid, 0)?;
        let (i, sel) = single_point(cfg, &probe)?;
        let config = config_at(cfg, t, m.intrinsic_dim())?;
        let stats =
            deviation_mc(&m, &field, probe.point(i), probe.piece_of(i), cfg.n, &config, cfg.trials, cfg.seed, cfg.eps.as_deref())?;
        let summary = json!({ "selector": sel.to_string(), "point": point_json(&probe, i), "stats": stats });
        out.json("bound.json", &summary)?;
        Ok(summary)
    }
}

impl Command for OracleCmd {
    fn validate(&self, cfg: &RunConfig) -> Result<()> {
        cfg.require_builtin()?;
        cfg.require_t()?;
        check_mode(cfg)?;
        validate_field(cfg)?;
        validate_points(cfg)?;
        if !(cfg.resolution_factor > 0.0) {
            return Err(invalid("resolution_factor", "must be positive"));
        }
        Ok(())
    }
    fn run(&self, cfg: &RunConfig, out: &mut Artifacts) -> Result<Value> {
        let (m, cloud) = load_cloud(cfg)?;
        let m = m.expect("builtin");
        let t = cfg.require_t()?;
        let field = ScalarField::parse(cfg.require_field()?, m.ambient_dim())?;
        let res = resolution_for(&m, t, cfg.resolution_factor);
        let mut rows = Vec::new();
        for sel in selectors(cfg, Some(&m))? {
            let i = select_point(&cloud, sel)?;
            let (x, piece) = (cloud.point(i), cloud.piece_of(i));
            let (a, b) = rayon::join(
                || quadrature_lt(&m, &field, x, piece, t, res),
                || quadrature_lt(&m, &field, x, piece, t, 2 * res),
            );
            let (a, b) = (a?, b?);
            let change = if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
            rows.push(json!({
                "selector": sel.to_string(),
                "point": point_json(&cloud, i),
                "value": a,
                "value_doubled": b,
                "relative_change": change,
            }));
        }
        let summary = json!({ "t": t, "resolution": res, "values": rows });
        out.json("oracle.json", &summary)?;
        Ok(summary)
    }
}
