//! `satlab rho1d`: the 1D saturation quantity `ρ²_p`.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use rayon::prelude::*;
use satlab_core::oned::{rho_instance, rho_squared_dense_with, Recurrence, DENSE_MAX_P};
use serde::Serialize;

use crate::output::{csv_writer, now, sig12, write_manifest, Checks};

/// Required agreement of the fast path with the dense oracle.
pub const DENSE_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Args, Serialize)]
pub struct Rho1dArgs {
    /// Degrees to evaluate.
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<usize>,
    /// Also solve the dense saddle-point system (p up to the dense limit)
    /// and check agreement.
    #[arg(long)]
    pub dense: bool,
    /// `lagged` (β_{i-2}, the default) or `kernel` (β_{i-1}).
    #[arg(long, default_value = "lagged")]
    #[serde(skip)]
    pub recurrence: Recurrence,
    /// CSV destination (stdout when absent; no manifest then).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    p: usize,
    rho_squared: String,
    rho: String,
    dense_rho_squared: String,
}

pub fn run(args: &Rho1dArgs) -> Result<Checks> {
    let started = now();
    let mut checks = Checks::default();
    let results: Vec<(usize, f64, Option<f64>)> = args
        .p
        .par_iter()
        .map(|&p| {
            let t = Instant::now();
            let fast = rho_instance(p, args.recurrence)?.value;
            eprintln!("p={p}: fast path {:.3} ms", t.elapsed().as_secs_f64() * 1e3);
            let dense = if args.dense && p <= DENSE_MAX_P { Some(rho_squared_dense_with(p, args.recurrence)?) } else { None };
            Ok((p, fast, dense))
        })
        .collect::<satlab_core::Result<_>>()?;
    let mut w = csv_writer(args.csv.as_deref())?;
    for &(p, fast, dense) in &results {
        if args.dense && dense.is_none() {
            eprintln!("p={p}: beyond the dense limit {DENSE_MAX_P}, no oracle");
        }
        if let Some(d) = dense {
            checks.assert((fast - d).abs() <= DENSE_AGREEMENT, || format!("p={p}: fast {fast} vs dense {d}"));
        }
        checks.assert(fast > 0.0 && fast < 1.0, || format!("p={p}: ρ² = {fast} outside (0, 1)"));
        w.serialize(Row { p, rho_squared: sig12(fast), rho: sig12(fast.sqrt()), dense_rho_squared: dense.map_or(String::new(), sig12) })?;
    }
    w.flush()?;
    drop(w);
    if let Some(out) = &args.csv {
        let params = serde_json::json!({ "p": args.p, "dense": args.dense, "recurrence": format!("{:?}", args.recurrence) });
        write_manifest("rho1d", &params, &started, out, &checks)?;
    }
    Ok(checks)
}
