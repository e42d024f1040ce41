//! `satlab afem`: the p-adaptive loop on a mesh file or a built-in mesh.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use satlab_core::hpafem::{afem_loop, AfemConfig, AfemReport, HpMesh, QRule, Source};
use serde::Serialize;

use crate::output::{now, write_manifest, Checks};

/// Relative tolerance of the Pythagoras identity under nested spaces.
pub const PYTHAGORAS_TOL: f64 = 1e-8;

#[derive(Debug, Args, Serialize)]
pub struct AfemArgs {
    /// Mesh file (`V F`, then `x y` lines, then `i j k [p]` lines), or
    /// `unit-square:N` / `crossed-square`.
    #[arg(long, default_value = "unit-square:2")]
    pub mesh: String,
    /// Replace every triangle degree.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Source, e.g. `poly:1` or `poly:1+x*y^2`.
    #[arg(long, default_value = "poly:1")]
    pub f: String,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// `ceil:λ` or `const:m`.
    #[arg(long, default_value = "ceil:0.5")]
    #[serde(serialize_with = "crate::output::display")]
    pub q: QRule,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_osc: f64,
    /// Number of Galerkin solves.
    #[arg(long, default_value_t = 8)]
    pub iters: usize,
    /// Reference degree is the final maximum degree plus this.
    #[arg(long, default_value_t = 10)]
    pub reference_extra: usize,
    /// JSON report destination (stdout when absent; no manifest then).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Report with per-iteration columns next to the full step records.
#[derive(Serialize)]
struct Output<'a> {
    dofs: Vec<usize>,
    error: Vec<f64>,
    estimator: Vec<f64>,
    osc: Vec<f64>,
    marked: Vec<&'a [usize]>,
    contraction: Vec<Option<f64>>,
    #[serde(flatten)]
    report: &'a AfemReport,
}

pub fn load_mesh(spec: &str) -> Result<HpMesh> {
    if let Some(n) = spec.strip_prefix("unit-square:") {
        let n: usize = n.parse().with_context(|| format!("bad mesh size in '{spec}'"))?;
        if n == 0 {
            bail!("unit-square needs at least one cell");
        }
        return Ok(HpMesh::unit_square(n, 1)?);
    }
    if spec == "crossed-square" {
        return Ok(HpMesh::crossed_square(1)?);
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading mesh '{spec}'"))?;
    Ok(HpMesh::parse(&text)?)
}

pub fn run(args: &AfemArgs) -> Result<Checks> {
    let started = now();
    let mut mesh = load_mesh(&args.mesh)?;
    if let Some(p) = args.degree {
        mesh = mesh.with_degrees(vec![p; mesh.n_triangles()])?;
    }
    let f = Source::parse(&args.f)?;
    let config = AfemConfig {
        theta: args.theta,
        q: args.q,
        lambda_osc: args.lambda_osc,
        iterations: args.iters,
        reference_extra: args.reference_extra,
    };
    let report = afem_loop(&mesh, &f, &config)?;
    let mut checks = Checks::default();
    for s in &report.steps {
        if let Some(d) = s.pythagoras_defect {
            checks.assert(d <= PYTHAGORAS_TOL, || format!("step {}: Pythagoras defect {d:e}", s.iteration));
        }
        if let Some(c) = s.contraction {
            checks.tripwire(c < 1.0, || format!("step {}: error ratio {c}", s.iteration));
        }
        checks.tripwire(s.oscillation_condition, || format!("step {}: oscillation condition fails", s.iteration));
    }
    for s in &report.steps {
        eprintln!(
            "iter {:>2}  ndof {:>6}  p_max {:>3}  eta {:.4e}  err {:.4e}  ratio {}",
            s.iteration,
            s.ndof,
            s.degrees.iter().max().copied().unwrap_or(0),
            s.estimator,
            s.error,
            s.contraction.map_or("-".into(), |c| format!("{c:.4}")),
        );
    }
    let out = Output {
        dofs: report.steps.iter().map(|s| s.ndof).collect(),
        error: report.steps.iter().map(|s| s.error).collect(),
        estimator: report.steps.iter().map(|s| s.estimator).collect(),
        osc: report.steps.iter().map(|s| s.oscillation).collect(),
        marked: report.steps.iter().map(|s| s.marked.as_slice()).collect(),
        contraction: report.steps.iter().map(|s| s.contraction).collect(),
        report: &report,
    };
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &args.report {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            write_manifest("afem", args, &started, path, &checks)?;
        }
        None => print!("{text}"),
    }
    Ok(checks)
}
