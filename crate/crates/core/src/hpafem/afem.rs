//! Dörfler marking, p-enrichment of marked stars and the adaptive loop.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::equilibrate::{equilibrate_star, StarEstimate};
use super::mesh::{HpMesh, StarPatch};
use super::residual::{local_residual, oscillation};
use super::source::Source;
use super::space::{solve_hp, HpSolution};
use crate::error::{Result, SatError};

/// Cap on global degree raises spent enforcing the oscillation condition
/// in one iteration.
pub const MAX_GLOBAL_RAISES: usize = 20;

/// Degree increment `q(p)` applied to marked stars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QRule {
    /// `q(p) = ⌈λ p⌉`.
    Linear(f64),
    /// `q(p) = m`.
    Constant(usize),
}

impl QRule {
    pub fn increment(&self, p: usize) -> usize {
        match *self {
            QRule::Linear(l) => (l * p as f64 - 1e-12).ceil().max(0.0) as usize,
            QRule::Constant(m) => m,
        }
    }
}

impl FromStr for QRule {
    type Err = SatError;

    /// `ceil:λ` or `const:m`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SatError::InvalidArgument(format!("q rule '{s}' is not 'ceil:<λ>' or 'const:<m>'"));
        let (kind, val) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "ceil" => {
                let l: f64 = val.parse().map_err(|_| bad())?;
                if !(l > 0.0 && l.is_finite()) {
                    return Err(bad());
                }
                Ok(QRule::Linear(l))
            }
            "const" => Ok(QRule::Constant(val.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for QRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QRule::Linear(l) => write!(f, "ceil:{l}"),
            QRule::Constant(m) => write!(f, "const:{m}"),
        }
    }
}

/// Smallest set carrying a `θ²` share of `Σ η_a²`: largest first, ties by
/// ascending index.
pub fn doerfler_mark(etas: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(SatError::InvalidArgument(format!("theta = {theta} is outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|&i, &j| etas[j].total_cmp(&etas[i]).then(i.cmp(&j)));
    // accumulate in the same order as the total so that θ = 1 stops
    // exactly after the last positive entry
    let total: f64 = order.iter().map(|&i| etas[i] * etas[i]).sum();
    // slack for θ given as a rounded square root
    let goal = theta * theta * total * (1.0 - 1e-12);
    let mut marked = Vec::new();
    let mut acc = 0.0;
    for &i in &order {
        if acc >= goal || etas[i] == 0.0 {
            break;
        }
        acc += etas[i] * etas[i];
        marked.push(i);
    }
    Ok(marked)
}

/// Raises every triangle of each marked star to at least `p_a + q(p_a)`.
pub fn enrich(mesh: &HpMesh, marked: &[usize], q: QRule) -> Result<HpMesh> {
    let mut degrees = mesh.degrees().to_vec();
    for &a in marked {
        if a >= mesh.n_vertices() {
            return Err(SatError::InvalidArgument(format!("marked vertex {a} does not exist")));
        }
        let patch = StarPatch::new(mesh, a);
        let target = patch.p_max + q.increment(patch.p_max);
        for &t in &patch.triangles {
            degrees[t] = degrees[t].max(target);
        }
    }
    mesh.with_degrees(degrees)
}

/// `η_a` for every vertex, in parallel over stars.
pub fn estimate(u: &HpSolution, f: &Source) -> Result<Vec<StarEstimate>> {
    (0..u.mesh().n_vertices())
        .into_par_iter()
        .map(|a| equilibrate_star(u, &local_residual(u, f, a)))
        .collect()
}

/// Parameters of [`afem_loop`].
#[derive(Debug, Clone)]
pub struct AfemConfig {
    pub theta: f64,
    pub q: QRule,
    pub lambda_osc: f64,
    /// Number of Galerkin solves.
    pub iterations: usize,
    /// Reference degree is the final maximum degree plus this.
    pub reference_extra: usize,
}

impl Default for AfemConfig {
    fn default() -> Self {
        Self { theta: 0.5, q: QRule::Linear(0.5), lambda_osc: 0.1, iterations: 8, reference_extra: 10 }
    }
}

/// One solve of the adaptive loop.
#[derive(Debug, Clone, Serialize)]
pub struct AfemStep {
    pub iteration: usize,
    pub ndof: usize,
    pub degrees: Vec<usize>,
    /// `√Σ η_a²` after any oscillation raises.
    pub estimator: f64,
    pub oscillation: f64,
    pub oscillation_condition: bool,
    pub global_raises: usize,
    pub marked: Vec<usize>,
    /// `‖∇(u_ref - u_k)‖`.
    pub error: f64,
    /// `‖∇(u_{k+1} - u_k)‖`, absent for the last solve.
    pub increment: Option<f64>,
    /// `error_{k+1} / error_k`, absent for the last solve.
    pub contraction: Option<f64>,
    /// `|e_{k+1}² + increment² - e_k²| / e_k²`, absent for the last solve.
    pub pythagoras_defect: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AfemReport {
    pub source: String,
    pub theta: f64,
    pub q_rule: String,
    pub lambda_osc: f64,
    pub reference_degree: usize,
    pub reference_energy: f64,
    pub steps: Vec<AfemStep>,
    /// Set when some recorded contraction factor is `≥ 1`.
    pub non_contraction: bool,
}

impl AfemReport {
    pub fn contraction_factors(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.contraction).collect()
    }
}

/// Solve, estimate, mark and enrich, `config.iterations` times, then
/// measure every iterate against a uniform-degree reference solution.
pub fn afem_loop(mesh0: &HpMesh, f: &Source, config: &AfemConfig) -> Result<AfemReport> {
    if config.iterations == 0 {
        return Err(SatError::InvalidArgument("at least one iteration is needed".into()));
    }
    if !(config.lambda_osc > 0.0) {
        return Err(SatError::InvalidArgument("lambda_osc must be positive".into()));
    }
    let mut mesh = mesh0.clone();
    let mut sols: Vec<HpSolution> = Vec::new();
    let mut steps = Vec::new();
    for k in 0..config.iterations {
        let mut u = solve_hp(&mesh, f)?;
        let ndof = u.space.ndof();
        let mut etas: Vec<f64> = estimate(&u, f)?.iter().map(|e| e.eta).collect();
        let mut est = norm(&etas);
        let mut osc = oscillation(&mesh, f);
        let mut raises = 0;
        // condition (i): raise p everywhere without re-solving
        while osc > config.lambda_osc * est && raises < MAX_GLOBAL_RAISES {
            let raised = mesh.with_degrees(mesh.degrees().iter().map(|p| p + 1).collect())?;
            u = u.embed(&raised)?;
            mesh = raised;
            etas = estimate(&u, f)?.iter().map(|e| e.eta).collect();
            est = norm(&etas);
            osc = oscillation(&mesh, f);
            raises += 1;
        }
        let holds = osc <= config.lambda_osc * est;
        let last = k + 1 == config.iterations || est == 0.0;
        let marked = if last { Vec::new() } else { doerfler_mark(&etas, config.theta)? };
        steps.push(AfemStep {
            iteration: k,
            ndof,
            degrees: mesh.degrees().to_vec(),
            estimator: est,
            oscillation: osc,
            oscillation_condition: holds,
            global_raises: raises,
            marked: marked.clone(),
            error: f64::NAN,
            increment: None,
            contraction: None,
            pythagoras_defect: None,
        });
        sols.push(u);
        if last {
            break;
        }
        mesh = enrich(&mesh, &marked, config.q)?;
    }

    let ref_degree = mesh.max_degree() + config.reference_extra;
    let ref_mesh = mesh.with_degrees(vec![ref_degree; mesh.n_triangles()])?;
    let reference = solve_hp(&ref_mesh, f)?;
    let errors: Vec<f64> = sols.iter().map(|u| reference.energy_distance(u)).collect();
    for (k, step) in steps.iter_mut().enumerate() {
        step.error = errors[k];
        if k + 1 < sols.len() {
            let inc = sols[k + 1].energy_distance(&sols[k]);
            step.increment = Some(inc);
            step.contraction = Some(errors[k + 1] / errors[k]);
            let e0 = errors[k] * errors[k];
            step.pythagoras_defect = Some((errors[k + 1].powi(2) + inc * inc - e0).abs() / e0);
        }
    }
    let non_contraction = steps.iter().filter_map(|s| s.contraction).any(|c| !(c < 1.0));
    Ok(AfemReport {
        source: f.label().to_string(),
        theta: config.theta,
        q_rule: config.q.to_string(),
        lambda_osc: config.lambda_osc,
        reference_degree: ref_degree,
        reference_energy: reference.energy,
        steps,
        non_contraction,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
