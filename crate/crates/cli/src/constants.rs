//! `satlab constants`: saturation constants over a grid of cells.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rayon::prelude::*;
use satlab_core::hpafem::QRule;
use satlab_core::reftri::{ProblemId, SaturationReport, SolverCache, DEFAULT_MAX_DEGREE, STABILIZATION_TOL};
use serde::Serialize;

use crate::output::{csv_writer, now, sig12, write_manifest, Checks};
use crate::presets::{table, Cell};

/// Lower bound every constant must respect.
pub const FLOOR_TOL: f64 = 1e-9;
/// Allowed decrease between consecutive `r` of one `(problem, p, q)`.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Args, Serialize)]
pub struct ConstantsArgs {
    /// Preset grid N (2 to 9).
    #[arg(long)]
    pub table: Option<usize>,
    /// Problems of a custom grid.
    #[arg(long, value_delimiter = ',', default_value = "P1")]
    pub problem: Vec<ProblemId>,
    /// Source degrees of a custom grid.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Enrichment rule of a custom grid: `ceil:λ` or `const:m`.
    #[arg(long, default_value = "ceil:1")]
    #[serde(serialize_with = "crate::output::display")]
    pub q: QRule,
    /// Reference degrees of a custom grid; cells with `r < p + q` are dropped.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<usize>,
    /// Also compute every cell at `2r` and flag agreement.
    #[arg(long)]
    pub stabilize: bool,
    /// Largest admissible reference degree.
    #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
    pub max_degree: usize,
    /// CSV destination (stdout when absent; no manifest then).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    problem: String,
    p: usize,
    q: usize,
    r: usize,
    constant: String,
    converged: String,
}

pub fn grid(args: &ConstantsArgs) -> Result<Vec<Cell>> {
    if let Some(n) = args.table {
        return match table(n) {
            Some(cells) => Ok(cells),
            None => bail!("no preset grid {n}; presets are numbered 2 to 9"),
        };
    }
    let mut cells = Vec::new();
    for &problem in &args.problem {
        for &p in &args.p {
            let q = args.q.increment(p);
            for &r in &args.r {
                if q == 0 || r < p + q {
                    eprintln!("skipping {problem} p={p} q={q} r={r}: need q ≥ 1 and r ≥ p + q");
                    continue;
                }
                cells.push(Cell { problem, p, q, r });
            }
        }
    }
    cells.sort();
    cells.dedup();
    Ok(cells)
}

/// Computes every cell, level by level in `r`, dropping factored solvers
/// as soon as no remaining cell needs them.
pub fn compute(cells: &[Cell], stabilize: bool, max_degree: usize) -> Result<Vec<SaturationReport>> {
    let cache = SolverCache::with_cap(max_degree);
    let mut by_r: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        by_r.entry(c.r).or_default().push(i);
    }
    let mut out: Vec<Option<SaturationReport>> = vec![None; cells.len()];
    let levels: Vec<usize> = by_r.keys().copied().collect();
    for (k, r) in levels.iter().enumerate() {
        let idx = &by_r[r];
        // build each shared numerator solver once before fanning out
        let problems: BTreeSet<ProblemId> = idx.iter().map(|&i| cells[i].problem).collect();
        problems.par_iter().try_for_each(|&pb| cache.solver(pb, *r).map(|_| ()))?;
        let reps: Vec<(usize, SaturationReport)> = idx
            .par_iter()
            .map(|&i| {
                let c = cells[i];
                let rep = if stabilize {
                    cache.stabilized(c.problem, c.p, c.q, c.r)?
                } else {
                    cache.saturation_constant(c.problem, c.p, c.q, c.r)?
                };
                Ok((i, rep))
            })
            .collect::<satlab_core::Result<_>>()?;
        for (i, rep) in reps {
            out[i] = Some(rep);
        }
        let mut needed = BTreeSet::new();
        for r2 in &levels[k + 1..] {
            for &i in &by_r[r2] {
                let c = cells[i];
                needed.extend([c.p + c.q, c.r, 2 * c.r]);
            }
        }
        let mut used: BTreeSet<usize> = idx.iter().flat_map(|&i| [cells[i].p + cells[i].q, cells[i].r, 2 * cells[i].r]).collect();
        used.retain(|d| !needed.contains(d));
        for d in used {
            cache.evict(d);
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every cell computed")).collect())
}

/// Convergence flag per cell: agreement with `2r` when stabilized, else
/// with the next larger `r` of the same `(problem, p, q)`.
fn convergence(cells: &[Cell], reps: &[SaturationReport]) -> Vec<Option<bool>> {
    (0..cells.len())
        .map(|i| {
            if let Some(c) = reps[i].converged {
                return Some(c);
            }
            let c = cells[i];
            let next = (0..cells.len())
                .filter(|&j| {
                    let d = cells[j];
                    (d.problem, d.p, d.q) == (c.problem, c.p, c.q) && d.r > c.r
                })
                .min_by_key(|&j| cells[j].r)?;
            match (reps[i].constant, reps[next].constant) {
                (Some(a), Some(b)) => Some((b - a).abs() <= STABILIZATION_TOL * b.abs()),
                _ => Some(false),
            }
        })
        .collect()
}

/// Floor and monotonicity in `r`.
pub fn check(cells: &[Cell], reps: &[SaturationReport], checks: &mut Checks) {
    for (c, rep) in cells.iter().zip(reps) {
        match rep.constant {
            Some(v) => checks.assert(v >= 1.0 - FLOOR_TOL, || format!("{c:?}: constant {v} below 1")),
            None => checks.assert(false, || format!("{c:?}: constant unbounded")),
        }
    }
    for (i, c) in cells.iter().enumerate() {
        for (j, d) in cells.iter().enumerate() {
            if (d.problem, d.p, d.q) == (c.problem, c.p, c.q) && d.r > c.r {
                if let (Some(a), Some(b)) = (reps[i].constant, reps[j].constant) {
                    checks.assert(b >= a - MONOTONE_TOL, || format!("{c:?} → r={}: {a} then {b}", d.r));
                }
            }
        }
    }
}

pub fn run(args: &ConstantsArgs) -> Result<Checks> {
    let started = now();
    let cells = grid(args)?;
    let reps = compute(&cells, args.stabilize, args.max_degree)?;
    let conv = convergence(&cells, &reps);
    let mut checks = Checks::default();
    check(&cells, &reps, &mut checks);
    let mut w = csv_writer(args.out.as_deref())?;
    if cells.is_empty() {
        w.write_record(["problem", "p", "q", "r", "constant", "converged"])?;
    }
    for ((c, rep), conv) in cells.iter().zip(&reps).zip(&conv) {
        w.serialize(Row {
            problem: c.problem.to_string(),
            p: c.p,
            q: c.q,
            r: c.r,
            constant: rep.constant.map_or("inf".into(), sig12),
            converged: conv.map_or(String::new(), |b| b.to_string()),
        })?;
    }
    w.flush()?;
    drop(w);
    if let Some(out) = &args.out {
        write_manifest("constants", args, &started, out, &checks)?;
    }
    Ok(checks)
}
