//! Equilibrated fluxes on vertex stars and overkill patch dual norms.

use faer::Mat;

use super::mesh::{HpMesh, StarPatch};
use super::residual::{LocalResidual, OrthoBasis};
use super::source::Source;
use super::space::{HpSolution, HpSpace, HpSystem};
use crate::basis::dubiner::dim_p;
use crate::densela::{orthonormal_complement, solve_kkt, SymMatrix};
use crate::error::{Result, SatError};
use crate::quadrature::{gauss_legendre, points_for_degree};
use crate::rtflux::{RtElement, RtValues};

/// Tolerance on `r̆_a(1)` for interior vertices and on the equilibration
/// checks.
pub const EQUILIBRATION_TOL: f64 = 1e-9;

/// A broken Raviart–Thomas field on a star.
#[derive(Debug, Clone)]
pub struct PatchFlux {
    pub triangles: Vec<usize>,
    pub elements: Vec<RtElement>,
    /// Local dof coefficients per element.
    pub coeffs: Vec<Vec<f64>>,
}

impl PatchFlux {
    /// Value and divergence on the `i`-th star triangle.
    pub fn eval(&self, i: usize, x: f64, y: f64) -> ([f64; 2], f64) {
        let el = &self.elements[i];
        el.evaluator().field(&self.coeffs[i], x, y)
    }
}

/// Result of [`equilibrate_star`].
#[derive(Debug, Clone)]
pub struct StarEstimate {
    pub center: usize,
    /// `η_a = ‖ζ_a + ψ_a ∇u_T‖_{ω_a}`.
    pub eta: f64,
    /// Relative defect of `div ζ_a = ψ_a Q f - ∇ψ_a·∇u_T`.
    pub div_defect: f64,
    /// Largest normal-component mismatch across star edges.
    pub jump_defect: f64,
    pub zeta: PatchFlux,
}

/// Solves the star mixed problem for `ζ_a ∈ RT_{p_a,0}(T_a)` with the
/// multiplier in broken `P_{p_a}` (mean-zero for interior vertices).
pub fn equilibrate_star(u: &HpSolution, res: &LocalResidual) -> Result<StarEstimate> {
    equilibrate_star_with_degree(u, res, res.patch.p_max)
}

/// [`equilibrate_star`] with flux and multiplier degree `p ≥ p_a`. Raising
/// `p` enlarges the admissible set, so `η_a` decreases towards the dual norm.
pub fn equilibrate_star_with_degree(u: &HpSolution, res: &LocalResidual, p: usize) -> Result<StarEstimate> {
    let mesh = u.mesh();
    let patch = &res.patch;
    let a = patch.center;
    if p < patch.p_max {
        return Err(SatError::InvalidArgument(format!("flux degree {p} below p_a = {}", patch.p_max)));
    }
    let nt = patch.triangles.len();
    let mut ev = u.evaluator();

    if patch.interior {
        let m = res.mean_test(mesh);
        let scale = res.max_datum().max(1.0);
        if m.abs() > EQUILIBRATION_TOL * scale {
            return Err(SatError::Incompatible {
                context: format!("star residual at interior vertex {a} does not annihilate constants"),
                defect: m,
            });
        }
    }

    let elements: Vec<RtElement> = patch
        .triangles
        .iter()
        .map(|&t| RtElement::new(mesh.geometry(t).verts, mesh.flips(t), p))
        .collect::<Result<_>>()?;
    let nloc = (p + 1) * (p + 3);
    let nint = nloc - 3 * (p + 1);

    // global numbering: shared inner edges first, then element interiors;
    // edges opposite `a` carry no dofs
    let mut edge_base = std::collections::HashMap::new();
    for (k, &e) in patch.inner_edges.iter().enumerate() {
        edge_base.insert(e, k * (p + 1));
    }
    let n_edge = patch.inner_edges.len() * (p + 1);
    let nrt = n_edge + nt * nint;
    let maps: Vec<Vec<Option<usize>>> = patch
        .triangles
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let te = mesh.tri_edges(t);
            let mut m = vec![None; nloc];
            for (le, ge) in te.iter().enumerate() {
                if let Some(&b) = edge_base.get(ge) {
                    for k in 0..=p {
                        m[elements[i].edge_dof(le, k)] = Some(b + k);
                    }
                }
            }
            for (j, d) in elements[i].interior_dofs().enumerate() {
                m[d] = Some(n_edge + i * nint + j);
            }
            m
        })
        .collect();

    let np = dim_p(p);
    let nq = nt * np;
    let mut amat = Mat::<f64>::zeros(nrt, nrt);
    let mut bmat = Mat::<f64>::zeros(nrt, nq);
    let mut f1 = vec![0.0; nrt];
    let mut g = vec![0.0; nq];
    for (i, &t) in patch.triangles.iter().enumerate() {
        let el = &elements[i];
        let gpsi = patch.hat_gradient(mesh, t);
        let mass = el.mass();
        let div = el.divergence_matrix();
        let mom = el.field_moments(p, |x, y| {
            let psi = patch.hat(mesh, t, x, y);
            let du = ev.grad(t, x, y);
            [-psi * du[0], -psi * du[1]]
        });
        let qdeg = mesh.degree(t).saturating_sub(1);
        let mut qb = OrthoBasis::new(mesh.geometry(t), qdeg);
        let target = OrthoBasis::new(mesh.geometry(t), p).project(p, |x, y| {
            let psi = patch.hat(mesh, t, x, y);
            let du = ev.grad(t, x, y);
            psi * qb.combine(&res.qf[i], x, y) - (gpsi[0] * du[0] + gpsi[1] * du[1])
        });
        for r in 0..nloc {
            let Some(gr) = maps[i][r] else { continue };
            f1[gr] += mom[r];
            for c in 0..nloc {
                if let Some(gc) = maps[i][c] {
                    amat[(gr, gc)] += mass[(r, c)];
                }
            }
            for k in 0..np {
                bmat[(gr, i * np + k)] += div[(k, r)];
            }
        }
        g[i * np..(i + 1) * np].copy_from_slice(&target);
    }

    let amat = SymMatrix::new(amat)?;
    let (zeta, _) = if patch.interior {
        let mut v = vec![0.0; nq];
        for (i, &t) in patch.triangles.iter().enumerate() {
            v[i * np] = mesh.geometry(t).area().sqrt();
        }
        let z = orthonormal_complement(&v);
        let c = &bmat * &z;
        let gz: Vec<f64> = (0..z.ncols()).map(|j| (0..nq).map(|i| z[(i, j)] * g[i]).sum()).collect();
        solve_kkt(&amat, c.as_ref(), &f1, &gz)?
    } else {
        solve_kkt(&amat, bmat.as_ref(), &f1, &g)?
    };

    let coeffs: Vec<Vec<f64>> = maps
        .iter()
        .map(|m| m.iter().map(|d| d.map_or(0.0, |k| zeta[k])).collect())
        .collect();

    // divergence defect and estimator
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut div_defect: f64 = 0.0;
    let mut eta2 = 0.0;
    for (i, &t) in patch.triangles.iter().enumerate() {
        let el = &elements[i];
        let div = el.divergence_matrix();
        let mut d2 = 0.0;
        for k in 0..np {
            let dk: f64 = (0..nloc).map(|j| div[(k, j)] * coeffs[i][j]).sum();
            d2 += (dk - g[i * np + k]).powi(2);
        }
        div_defect = div_defect.max(d2.sqrt() / gnorm);
        let (pts, ws) = el.triangle().rule(2 * p + 2);
        let mut rt = el.evaluator();
        let mut vals = RtValues { vx: vec![0.0; nloc], vy: vec![0.0; nloc], div: vec![0.0; nloc] };
        for (pt, w) in pts.iter().zip(&ws) {
            rt.eval(pt[0], pt[1], &mut vals);
            let zx: f64 = (0..nloc).map(|j| coeffs[i][j] * vals.vx[j]).sum();
            let zy: f64 = (0..nloc).map(|j| coeffs[i][j] * vals.vy[j]).sum();
            let psi = patch.hat(mesh, t, pt[0], pt[1]);
            let du = ev.grad(t, pt[0], pt[1]);
            eta2 += w * ((zx + psi * du[0]).powi(2) + (zy + psi * du[1]).powi(2));
        }
    }

    let zeta = PatchFlux { triangles: patch.triangles.clone(), elements, coeffs };
    let jump_defect = normal_jump_defect(mesh, patch, p, &zeta);
    if div_defect > EQUILIBRATION_TOL || jump_defect > EQUILIBRATION_TOL * gnorm {
        return Err(SatError::Singular {
            context: format!("equilibration at vertex {a} (div {div_defect:e}, jump {jump_defect:e})"),
            residual: div_defect.max(jump_defect),
        });
    }
    Ok(StarEstimate { center: a, eta: eta2.sqrt(), div_defect, jump_defect, zeta })
}

/// Largest `|ζ⁺·n - ζ⁻·n|` at Gauss points of the star's shared edges, and
/// `|ζ·n|` on edges opposite the center.
fn normal_jump_defect(mesh: &HpMesh, patch: &StarPatch, p: usize, zeta: &PatchFlux) -> f64 {
    let gl = gauss_legendre(points_for_degree(2 * p + 1));
    let mut worst: f64 = 0.0;
    let local = |t: usize| patch.triangles.iter().position(|&s| s == t).unwrap();
    for &e in patch.inner_edges.iter().chain(&patch.outer_edges) {
        let [i, j] = mesh.edge(e);
        let (s, t) = (mesh.vertex(i), mesh.vertex(j));
        let len = (t[0] - s[0]).hypot(t[1] - s[1]);
        let n = [(t[1] - s[1]) / len, -(t[0] - s[0]) / len];
        let tris: Vec<usize> = mesh.edge_triangles(e).iter().copied().filter(|x| patch.triangles.contains(x)).collect();
        let opposite = patch.outer_edges.contains(&e);
        for x in &gl.nodes {
            let h = 0.5 * (1.0 + x[0]);
            let pt = [s[0] + h * (t[0] - s[0]), s[1] + h * (t[1] - s[1])];
            let vals: Vec<f64> = tris
                .iter()
                .map(|&tt| {
                    let (v, _) = zeta.eval(local(tt), pt[0], pt[1]);
                    v[0] * n[0] + v[1] * n[1]
                })
                .collect();
            if opposite {
                worst = worst.max(vals[0].abs());
            } else if vals.len() == 2 {
                worst = worst.max((vals[0] - vals[1]).abs());
            }
        }
    }
    worst
}

/// Which data enter a star functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualData {
    /// `r̆_a`, built on `Q_{T[a]} f`.
    Projected,
    /// `r_a`, built on `f` itself.
    Exact,
}

/// `‖r̆_a‖` or `‖r_a‖` in `H¹_*(ω_a)'`, approximated by a conforming solve
/// on the star at uniform degree `p_a + extra`. The discrete value never
/// exceeds the exact dual norm.
pub fn patch_dual_norm(u: &HpSolution, f: &Source, a: usize, data: ResidualData, extra: usize) -> Result<f64> {
    let mesh = u.mesh();
    let patch = StarPatch::new(mesh, a);
    let big = patch.p_max + extra;
    // sub-mesh of the star, keeping vertex order within triangles
    let mut ids: Vec<usize> = patch.triangles.iter().flat_map(|&t| mesh.triangle(t)).collect();
    ids.sort_unstable();
    ids.dedup();
    let local = |v: usize| ids.binary_search(&v).unwrap();
    let verts: Vec<[f64; 2]> = ids.iter().map(|&v| mesh.vertex(v)).collect();
    let tris: Vec<[usize; 3]> = patch.triangles.iter().map(|&t| mesh.triangle(t).map(local)).collect();
    let sub = HpMesh::with_shape_bound(verts, tris, vec![big; patch.triangles.len()], f64::INFINITY)?;
    // interior stars: mean-zero functions, no boundary condition at all
    let mut dirichlet = vec![false; sub.n_edges()];
    for (i, &t) in patch.triangles.iter().enumerate().filter(|_| !patch.interior) {
        for (le, &ge) in mesh.tri_edges(t).iter().enumerate() {
            if mesh.is_boundary_edge(ge) {
                dirichlet[sub.tri_edges(i)[le]] = true;
            }
        }
    }
    let pinned: Vec<usize> = if patch.interior { vec![local(a)] } else { Vec::new() };
    let space = HpSpace::with_constraints(&sub, &dirichlet, &pinned);
    if space.ndof() == 0 {
        return Ok(0.0);
    }

    let mut ev = u.evaluator();
    let qbases: Vec<(OrthoBasis, Vec<f64>)> = patch
        .triangles
        .iter()
        .map(|&t| {
            let q = super::residual::star_projection(mesh, t, a, f);
            (OrthoBasis::new(mesh.geometry(t), mesh.degree(t).saturating_sub(1)), q)
        })
        .collect();
    let mut qbases = qbases;
    let fdeg = f.quadrature_degree();
    let b = space.assemble_load(
        |i| match data {
            ResidualData::Projected => mesh.degree(patch.triangles[i]),
            ResidualData::Exact => mesh.degree(patch.triangles[i]).max(fdeg + 1),
        },
        |i, x, y| {
            let t = patch.triangles[i];
            let psi = patch.hat(mesh, t, x, y);
            let gpsi = patch.hat_gradient(mesh, t);
            let du = ev.grad(t, x, y);
            let fv = match data {
                ResidualData::Projected => {
                    let (ob, c) = &mut qbases[i];
                    ob.combine(c, x, y)
                }
                ResidualData::Exact => f.eval(x, y),
            };
            (psi * fv - (gpsi[0] * du[0] + gpsi[1] * du[1]), [-psi * du[0], -psi * du[1]])
        },
    );
    let sys = HpSystem::new(space)?;
    let w = sys.solve(&b)?;
    let e: f64 = w.iter().zip(&b).map(|(x, y)| x * y).sum();
    Ok(e.max(0.0).sqrt())
}
