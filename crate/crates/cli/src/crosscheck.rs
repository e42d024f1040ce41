//! `satlab crosscheck`: Raviart–Thomas minimal fluxes against overkill
//! Galerkin dual norms on the reference triangle.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use satlab_core::reftri::{galerkin_energy, ProblemId};
use satlab_core::rtflux::min_flux;
use serde::Serialize;

use crate::output::{csv_writer, now, sig12, write_manifest, Checks};

/// The flux norm may undershoot the overkill dual norm by this much.
pub const RELIABILITY_TOL: f64 = 1e-8;

#[derive(Debug, Args, Serialize)]
pub struct CrosscheckArgs {
    #[arg(long, value_delimiter = ',', default_value = "P1,P2,P3")]
    pub problem: Vec<ProblemId>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    pub p: Vec<usize>,
    /// Random sources per `(problem, p)`, after the zero source.
    #[arg(long, default_value_t = 5)]
    pub samples: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Degree of the overkill Galerkin solve.
    #[arg(long, default_value_t = 40)]
    pub overkill: usize,
    /// Empirical upper bound on flux norm over dual norm.
    #[arg(long, default_value_t = 1.5)]
    pub tripwire: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    problem: String,
    p: usize,
    sample: usize,
    flux_norm: String,
    dual_norm: String,
    ratio: String,
    status: &'static str,
}

struct Sample {
    sample: usize,
    flux: f64,
    dual: f64,
}

fn cell(problem: ProblemId, p: usize, args: &CrosscheckArgs) -> satlab_core::Result<Vec<Sample>> {
    let e = galerkin_energy(problem, p, args.overkill)?;
    let n = problem.source_dim(p);
    // stream depends only on (seed, problem, p), not on scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ ((problem.index() as u64) << 32) ^ p as u64);
    let mut out = Vec::new();
    for s in 0..=args.samples {
        let phi: Vec<f64> = if s == 0 { vec![0.0; n] } else { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let flux = min_flux(problem, p, &phi)?.norm;
        let dual = e.quad_form(&phi).max(0.0).sqrt();
        out.push(Sample { sample: s, flux, dual });
    }
    Ok(out)
}

pub fn run(args: &CrosscheckArgs) -> Result<Checks> {
    let started = now();
    if let Some(&p) = args.p.iter().find(|&&p| p == 0 || p >= args.overkill) {
        bail!("need 1 ≤ p < overkill degree {}, got p={p}", args.overkill);
    }
    let grid: Vec<(ProblemId, usize)> = args.problem.iter().flat_map(|&pb| args.p.iter().map(move |&p| (pb, p))).collect();
    let results: Vec<Vec<Sample>> = grid.par_iter().map(|&(pb, p)| cell(pb, p, args)).collect::<satlab_core::Result<_>>()?;
    let mut checks = Checks::default();
    let mut w = csv_writer(args.out.as_deref())?;
    for (&(problem, p), samples) in grid.iter().zip(&results) {
        for s in samples {
            let (ratio, status) = if s.dual == 0.0 {
                checks.assert(s.flux == 0.0, || format!("{problem} p={p}: zero source, flux {}", s.flux));
                (String::new(), "skipped")
            } else {
                let r = s.flux / s.dual;
                checks.assert(r >= 1.0 - RELIABILITY_TOL, || format!("{problem} p={p} sample {}: ratio {r}", s.sample));
                checks.tripwire(r <= args.tripwire, || format!("{problem} p={p} sample {}: ratio {r} above {}", s.sample, args.tripwire));
                (sig12(r), "ok")
            };
            w.serialize(Row {
                problem: problem.to_string(),
                p,
                sample: s.sample,
                flux_norm: sig12(s.flux),
                dual_norm: sig12(s.dual),
                ratio,
                status,
            })?;
        }
    }
    w.flush()?;
    drop(w);
    if let Some(out) = &args.out {
        write_manifest("crosscheck", args, &started, out, &checks)?;
    }
    Ok(checks)
}
