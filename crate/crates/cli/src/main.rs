//! Command-line front end: each subcommand samples or loads a cloud, runs one
//! experiment and writes its artifacts plus a `manifest.json` into `--out`.

mod commands;
mod config;

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use singlap::Error;

use commands::{command_registry, Artifacts};
use config::{Flags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "singlap", version, about = "Graph Laplacians on singular manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample an annotated point cloud.
    Sample(Flags),
    /// Apply the graph Laplacian to a field.
    Apply(Flags),
    /// Compare empirical, quadrature and closed-form limits at selected points.
    Predict(Flags),
    /// Log-log slopes of |L f| against t.
    Scaling(Flags),
    /// Flag points with large operator magnitude.
    Detect(Flags),
    /// Smallest eigenpairs of the graph Laplacian.
    Spectra(Flags),
    /// Spectra of a builtin and its twin (fold invariance or codimension-2 locality).
    Compare(Flags),
    /// Monte-Carlo deviation against the concentration bound.
    Bound(Flags),
    /// Quadrature value of the functional Laplacian.
    Oracle(Flags),
    /// Re-run the configuration recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    config: RunConfig,
    status: String,
    artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<Value>,
}

/// Exit code and machine-readable error body.
struct Failure {
    code: u8,
    body: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() || matches!(e, Error::Insufficient(_)) { 3 } else { 2 };
        Failure { code, body: json!({ "kind": e.kind(), "message": e.to_string() }) }
    }
}

fn resolve(cli: Cli) -> Result<(RunConfig, bool), Failure> {
    let (name, flags) = match cli.command {
        Cmd::Sample(f) => ("sample", f),
        Cmd::Apply(f) => ("apply", f),
        Cmd::Predict(f) => ("predict", f),
        Cmd::Scaling(f) => ("scaling", f),
        Cmd::Detect(f) => ("detect", f),
        Cmd::Spectra(f) => ("spectra", f),
        Cmd::Compare(f) => ("compare", f),
        Cmd::Bound(f) => ("bound", f),
        Cmd::Oracle(f) => ("oracle", f),
        Cmd::Replay { manifest, out, dry_run } => {
            let file = File::open(&manifest).map_err(Error::from)?;
            let recorded: Manifest = serde_json::from_reader(file).map_err(Error::from)?;
            let mut cfg = recorded.config;
            if let Some(out) = out {
                cfg.out = out;
            }
            return Ok((cfg, dry_run));
        }
    };
    Ok((RunConfig::resolve(name, &flags)?, flags.dry_run))
}

fn execute(cfg: &RunConfig, dry_run: bool) -> Result<Value, Failure> {
    let registry = command_registry();
    let command = registry.get(&cfg.command)?;
    command.validate(cfg)?;
    if dry_run {
        return Ok(serde_json::to_value(cfg).map_err(Error::from)?);
    }
    if let Some(threads) = cfg.threads {
        // only fails if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut artifacts = Artifacts::new(&cfg.out)?;
    let outcome = command.run(cfg, &mut artifacts);
    let (status, error) = match &outcome {
        Ok(_) => ("ok", None),
        Err(e) => ("failed", Some(json!({ "kind": e.kind(), "message": e.to_string() }))),
    };
    let mut written = artifacts.written.clone();
    written.push("manifest.json".into());
    let manifest = Manifest {
        tool: "singlap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        status: status.into(),
        artifacts: written,
        error,
    };
    let value = serde_json::to_value(&manifest).map_err(Error::from)?;
    artifacts.json("manifest.json", &value)?;
    Ok(outcome?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "error": { "kind": "usage", "message": e.render().to_string().trim_end() } });
            eprintln!("{body}");
            return ExitCode::from(2);
        }
    };
    let result = resolve(cli).and_then(|(cfg, dry)| execute(&cfg, dry));
    match result {
        Ok(v) => {
            // a closed pipe (`| head`) is not an error; the artifacts are already written
            let text = serde_json::to_string_pretty(&v).expect("json values serialize");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", json!({ "error": f.body }));
            ExitCode::from(f.code)
        }
    }
}
