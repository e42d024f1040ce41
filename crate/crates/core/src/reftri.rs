//! Saturation constants of the three reference-triangle problems.
//!
//! For a source `φ` the Riesz lift `u_r(φ)` solves a Neumann-type problem in
//! the test space of degree `r`:
//! - `P1`: `∫ ∇u·∇v = ∫ ψ φ v`, `v` vanishing on the two edges through the
//!   vertex where `ψ = 1`, `φ ∈ P_{p-1}(Ť)`;
//! - `P2`: `∫ ∇u·∇v = ∫_{ě₁} φ v`, `v ∈ H¹_{0,ě₂}`, `φ ∈ P_p(ě₁)`;
//! - `P3`: `∫ ∇u·∇v = ∫_{∂Ť} φ v`, `v` mean-zero, `φ ∈ ∏ P_p(ě_i)`, `∫_{∂Ť} φ = 0`.
//!
//! The reported constant is `λ_max = sup_φ ‖∇u_r(φ)‖² / ‖∇u_{p+q}(φ)‖²`,
//! the squared energy-norm ratio; its square root is kept as `norm_ratio`.
//!
//! `Ť` is not equilateral, so the `P1` value depends on which vertex carries
//! `ψ`. Here `ψ = 1` at the 45° vertex `(1,-1)`, with
//! Dirichlet edges `ě₁` and `ě₃`, and `ψ = 0` on `ě₂`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::basis::dubiner::{dim_p, DubinerEval};
use crate::basis::poly::legendre_normalized_all;
use crate::basis::{build_space, ref_barycentric, ref_edge_lengths, EdgeMask, TriangleSpace, REF_EDGES};
use crate::densela::{eig_gsym_max, orthonormal_complement, SpdFactor, SymMatrix};
use crate::error::{Result, SatError};

/// Default cap on the reference degree; a dense stiffness at `r = 160` has
/// order about 13 000.
pub const DEFAULT_MAX_DEGREE: usize = 160;

/// Relative change between `r` and `2r` below which a constant is reported
/// as converged.
pub const STABILIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemId {
    P1,
    P2,
    P3,
}

/// Where the source of a reference problem lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// `ψ φ` on the triangle, `ψ` the barycentric coordinate of the vertex.
    Volume { psi_vertex: usize },
    /// `φ` on one edge.
    Edge { edge: usize },
    /// `φ` on the whole boundary with zero total integral.
    Boundary,
}

/// Test-space constraints and source placement of a reference problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemConfig {
    pub mask: EdgeMask,
    pub mean_zero: bool,
    pub source: SourceKind,
}

impl ProblemConfig {
    pub fn source_dim(&self, p: usize) -> usize {
        match self.source {
            SourceKind::Volume { .. } => dim_p(p - 1),
            SourceKind::Edge { .. } => p + 1,
            SourceKind::Boundary => 3 * (p + 1) - 1,
        }
    }
}

/// Vertex of `Ť` where the `P1` weight `ψ` equals one.
pub const P1_PSI_VERTEX: usize = 1;

impl ProblemId {
    pub const ALL: [ProblemId; 3] = [ProblemId::P1, ProblemId::P2, ProblemId::P3];

    pub fn config(self) -> ProblemConfig {
        match self {
            ProblemId::P1 => ProblemConfig {
                mask: EdgeMask([true, false, true]),
                mean_zero: false,
                source: SourceKind::Volume { psi_vertex: P1_PSI_VERTEX },
            },
            ProblemId::P2 => ProblemConfig {
                mask: EdgeMask([false, true, false]),
                mean_zero: false,
                source: SourceKind::Edge { edge: 0 },
            },
            ProblemId::P3 => ProblemConfig {
                mask: EdgeMask::NONE,
                mean_zero: true,
                source: SourceKind::Boundary,
            },
        }
    }

    pub fn mask(self) -> EdgeMask {
        self.config().mask
    }

    pub fn mean_zero(self) -> bool {
        self == ProblemId::P3
    }

    /// Dimension of the source space at degree `p`.
    pub fn source_dim(self, p: usize) -> usize {
        self.config().source_dim(p)
    }

    pub fn index(self) -> usize {
        self as usize + 1
    }
}

impl std::fmt::Display for ProblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "P{}", self.index())
    }
}

impl std::str::FromStr for ProblemId {
    type Err = SatError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches('p') {
            "1" => Ok(ProblemId::P1),
            "2" => Ok(ProblemId::P2),
            "3" => Ok(ProblemId::P3),
            _ => Err(SatError::InvalidArgument(format!("unknown problem '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaturationReport {
    pub problem: ProblemId,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    /// `λ_max` of the energy pencil (the tabulated constant), or `None` when
    /// the denominator form is singular and the constant is unbounded.
    pub constant: Option<f64>,
    /// `sqrt(λ_max)`, the worst-case ratio of energy norms.
    pub norm_ratio: Option<f64>,
    /// Worst-case source in the source basis, normalized in the denominator
    /// energy.
    pub worst_phi: Vec<f64>,
    /// Value at `2r` and whether it agrees to [`STABILIZATION_TOL`]; filled
    /// only by the stabilization protocol.
    pub doubled: Option<f64>,
    pub converged: Option<bool>,
}

/// `P3` constant modes: combinations of per-edge constants with zero total
/// boundary integral, as a `3 × 2` matrix over the orthonormal edge
/// constants.
pub fn p3_constant_modes() -> Mat<f64> {
    let l = ref_edge_lengths();
    orthonormal_complement(&[l[0].sqrt(), l[1].sqrt(), l[2].sqrt()])
}

/// Values of the `P3` source basis on edge `e` at parameter `t`; `out` has
/// `3(p+1) - 1` entries. Column layout: two compatible constant modes, then
/// for each edge the Legendre modes `k = 1..=p`.
pub fn p3_source_on_edge(p: usize, e: usize, t: f64, modes: MatRef<'_, f64>, out: &mut [f64]) {
    let len = ref_edge_lengths()[e];
    let c = (2.0 / len).sqrt();
    let mut ell = vec![0.0; p + 1];
    legendre_normalized_all(t, &mut ell);
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = modes[(e, 0)] * c * ell[0];
    out[1] = modes[(e, 1)] * c * ell[0];
    for k in 1..=p {
        out[2 + e * p + (k - 1)] = c * ell[k];
    }
}

/// Load matrix `G` (`dim(space) × source_dim`) of the source basis.
pub fn assemble_load(problem: ProblemId, p: usize, space: &TriangleSpace) -> Mat<f64> {
    assemble_load_for(&problem.config(), p, space)
}

pub fn assemble_load_for(cfg: &ProblemConfig, p: usize, space: &TriangleSpace) -> Mat<f64> {
    let n = cfg.source_dim(p);
    match cfg.source {
        SourceKind::Volume { psi_vertex } => {
            let mut dub = DubinerEval::new(p - 1);
            let mut d = vec![0.0; n];
            space.volume_load(p, n, |x, y, out| {
                let psi = ref_barycentric(x, y)[psi_vertex];
                dub.values(x, y, &mut d);
                for j in 0..n {
                    out[j] = psi * d[j];
                }
            })
        }
        SourceKind::Edge { edge } => {
            let [a, b] = REF_EDGES[edge];
            let c = (2.0 / ref_edge_lengths()[edge]).sqrt();
            space.edge_load(a, b, p, n, |t, out| {
                legendre_normalized_all(t, out);
                out.iter_mut().for_each(|v| *v *= c);
            })
        }
        SourceKind::Boundary => {
            let modes = p3_constant_modes();
            let mut g = Mat::zeros(space.dim(), n);
            for (e, [a, b]) in REF_EDGES.iter().enumerate() {
                let ge = space.edge_load(*a, *b, p, n, |t, out| {
                    p3_source_on_edge(p, e, t, modes.as_ref(), out)
                });
                g += &ge;
            }
            g
        }
    }
}

/// Test space and factored stiffness of one problem at one degree.
pub struct ReferenceSolver {
    config: ProblemConfig,
    space: TriangleSpace,
    factor: SpdFactor,
}

impl ReferenceSolver {
    pub fn new(problem: ProblemId, r: usize) -> Result<Self> {
        Self::with_cap(problem, r, DEFAULT_MAX_DEGREE)
    }

    pub fn with_cap(problem: ProblemId, r: usize, cap: usize) -> Result<Self> {
        if r > cap {
            return Err(SatError::MemoryGuard { requested: r, cap });
        }
        Self::for_config(problem.config(), r)
    }

    /// Solver for an arbitrary configuration (no memory guard).
    pub fn for_config(config: ProblemConfig, r: usize) -> Result<Self> {
        let space = build_space(r, config.mask, config.mean_zero)?;
        let k = space.stiffness();
        let m = space.dim();
        // mean-zero: K + c cᵀ is definite and agrees with the constrained
        // solution for loads orthogonal to constants
        let a = match space.constraint() {
            Some(c) => SymMatrix::from_fn(m, |i, j| k[(i, j)] + c[i] * c[j])?,
            None => SymMatrix::new(k.clone())?,
        };
        let factor = SpdFactor::new(&a, &format!("reference stiffness at degree {r}"))?;
        Ok(Self { config, space, factor })
    }

    pub fn config(&self) -> ProblemConfig {
        self.config
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    pub fn space(&self) -> &TriangleSpace {
        &self.space
    }

    /// Riesz-lift coefficients `U = K⁻¹ G` for every source basis function.
    pub fn lifts(&self, p: usize) -> Result<(Mat<f64>, Mat<f64>)> {
        let g = assemble_load_for(&self.config, p, &self.space);
        let u = self.factor.solve(g.as_ref())?;
        Ok((g, u))
    }

    /// Energy form `E = Gᵀ K⁻¹ G` over the source basis of degree `p`.
    pub fn energy(&self, p: usize) -> Result<SymMatrix> {
        let (g, u) = self.lifts(p)?;
        let n = g.ncols();
        let mut e = Mat::zeros(n, n);
        matmul(e.as_mut(), Accum::Replace, g.transpose(), u.as_ref(), 1.0, Par::Seq);
        let e = Mat::from_fn(n, n, |i, j| 0.5 * (e[(i, j)] + e[(j, i)]));
        SymMatrix::new(e)
    }
}

/// `E` for `problem` at source degree `p` and solve degree `solve_degree`.
pub fn galerkin_energy(problem: ProblemId, p: usize, solve_degree: usize) -> Result<SymMatrix> {
    check_p(p)?;
    ReferenceSolver::new(problem, solve_degree)?.energy(p)
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(SatError::InvalidArgument("source degree p must be at least 1".into()));
    }
    Ok(())
}

/// Shares factored reference solvers between cells with the same
/// `(problem, r)`.
#[derive(Default)]
pub struct SolverCache {
    cap: Option<usize>,
    solvers: Mutex<HashMap<(ProblemId, usize), Arc<ReferenceSolver>>>,
}

impl SolverCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Cache with a custom degree cap in place of [`DEFAULT_MAX_DEGREE`].
    pub fn with_cap(cap: usize) -> Self {
        Self { cap: Some(cap), ..Self::default() }
    }

    pub fn cap(&self) -> usize {
        self.cap.unwrap_or(DEFAULT_MAX_DEGREE)
    }

    pub fn solver(&self, problem: ProblemId, r: usize) -> Result<Arc<ReferenceSolver>> {
        if let Some(s) = self.solvers.lock().unwrap().get(&(problem, r)) {
            return Ok(s.clone());
        }
        let s = Arc::new(ReferenceSolver::with_cap(problem, r, self.cap())?);
        self.solvers.lock().unwrap().insert((problem, r), s.clone());
        Ok(s)
    }

    /// Drops every cached solver of degree `r`.
    pub fn evict(&self, r: usize) {
        self.solvers.lock().unwrap().retain(|k, _| k.1 != r);
    }

    pub fn saturation_constant(
        &self,
        problem: ProblemId,
        p: usize,
        q: usize,
        r: usize,
    ) -> Result<SaturationReport> {
        check_p(p)?;
        if q == 0 || r < p + q {
            return Err(SatError::InvalidArgument(format!(
                "need q ≥ 1 and r ≥ p + q, got p={p}, q={q}, r={r}"
            )));
        }
        if r > self.cap() {
            return Err(SatError::MemoryGuard { requested: r, cap: self.cap() });
        }
        let den = self.solver(problem, p + q)?.energy(p)?;
        let num = self.solver(problem, r)?.energy(p)?;
        let mut report = SaturationReport {
            problem,
            p,
            q,
            r,
            constant: None,
            norm_ratio: None,
            worst_phi: Vec::new(),
            doubled: None,
            converged: None,
        };
        match eig_gsym_max(&num, &den) {
            Ok((lam, v)) => {
                report.constant = Some(lam);
                report.norm_ratio = Some(lam.max(0.0).sqrt());
                report.worst_phi = v;
            }
            Err(SatError::NotPd { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(report)
    }

    /// Computes the constant at `r` and `2r` and flags convergence.
    pub fn stabilized(
        &self,
        problem: ProblemId,
        p: usize,
        q: usize,
        r: usize,
    ) -> Result<SaturationReport> {
        let mut rep = self.saturation_constant(problem, p, q, r)?;
        let twice = self.saturation_constant(problem, p, q, 2 * r)?;
        rep.doubled = twice.constant;
        rep.converged = match (rep.constant, twice.constant) {
            (Some(a), Some(b)) => Some((b - a).abs() <= STABILIZATION_TOL * b.abs()),
            _ => Some(false),
        };
        Ok(rep)
    }
}

/// `C_{p,q,r}` with freshly built solvers.
pub fn saturation_constant(problem: ProblemId, p: usize, q: usize, r: usize) -> Result<SaturationReport> {
    SolverCache::new().saturation_constant(problem, p, q, r)
}
