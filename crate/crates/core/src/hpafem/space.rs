//! Conforming variable-degree spaces with the minimum rule on edges, and
//! their Galerkin systems.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use super::mesh::HpMesh;
use super::source::Source;
use crate::basis::hierarchic::{HierarchicEval, Layout};
use crate::error::{Result, SatError};
use crate::rtflux::AffineTriangle;

/// Hierarchic basis of one triangle at its own degree.
pub struct ElementEval {
    pub geometry: AffineTriangle,
    flips: [bool; 3],
    glam: [[f64; 2]; 3],
    basis: HierarchicEval,
}

impl ElementEval {
    pub fn new(mesh: &HpMesh, t: usize, degree: usize) -> Self {
        let geometry = mesh.geometry(t);
        Self {
            flips: mesh.flips(t),
            glam: geometry.barycentric_gradients(),
            geometry,
            basis: HierarchicEval::new(degree),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.layout().dim()
    }

    pub fn eval(&mut self, x: f64, y: f64, vals: &mut [f64], grads: &mut [[f64; 2]]) {
        let lam = self.geometry.barycentric(x, y);
        self.basis.eval(lam, self.glam, self.flips, vals, grads);
    }
}

/// `H¹` conforming space on an [`HpMesh`]: vertex hats, edge modes up to
/// the smaller adjacent degree and interior bubbles up to `p_T`.
#[derive(Debug, Clone)]
pub struct HpSpace {
    mesh: HpMesh,
    edge_degree: Vec<usize>,
    vertex_dof: Vec<Option<usize>>,
    /// First dof of the modes `k = 2..=edge_degree` of each edge.
    edge_dof: Vec<Option<usize>>,
    bubble_dof: Vec<usize>,
    ndof: usize,
}

impl HpSpace {
    /// Homogeneous Dirichlet conditions on every boundary edge.
    pub fn new(mesh: &HpMesh) -> Self {
        let dirichlet: Vec<bool> = (0..mesh.n_edges()).map(|e| mesh.is_boundary_edge(e)).collect();
        Self::with_constraints(mesh, &dirichlet, &[])
    }

    /// Zero traces on the flagged edges; `pinned` vertices get no hat.
    pub fn with_constraints(mesh: &HpMesh, dirichlet_edges: &[bool], pinned: &[usize]) -> Self {
        let mut edge_degree = vec![usize::MAX; mesh.n_edges()];
        for t in 0..mesh.n_triangles() {
            for e in mesh.tri_edges(t) {
                edge_degree[e] = edge_degree[e].min(mesh.degree(t));
            }
        }
        let mut fixed_vertex = vec![false; mesh.n_vertices()];
        for (e, &d) in dirichlet_edges.iter().enumerate() {
            if d {
                let [a, b] = mesh.edge(e);
                fixed_vertex[a] = true;
                fixed_vertex[b] = true;
            }
        }
        for &v in pinned {
            fixed_vertex[v] = true;
        }
        let mut n = 0;
        let vertex_dof = fixed_vertex
            .iter()
            .map(|&f| {
                if f {
                    None
                } else {
                    n += 1;
                    Some(n - 1)
                }
            })
            .collect();
        let edge_dof = (0..mesh.n_edges())
            .map(|e| {
                if dirichlet_edges[e] || edge_degree[e] < 2 {
                    None
                } else {
                    n += edge_degree[e] - 1;
                    Some(n - (edge_degree[e] - 1))
                }
            })
            .collect();
        let bubble_dof = (0..mesh.n_triangles())
            .map(|t| {
                let p = mesh.degree(t);
                let nb = if p >= 3 { (p - 1) * (p - 2) / 2 } else { 0 };
                n += nb;
                n - nb
            })
            .collect();
        Self { mesh: mesh.clone(), edge_degree, vertex_dof, edge_dof, bubble_dof, ndof: n }
    }

    pub fn mesh(&self) -> &HpMesh {
        &self.mesh
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn edge_degree(&self, e: usize) -> usize {
        self.edge_degree[e]
    }

    /// Global dof of each local function of triangle `t` at degree `p_T`.
    pub fn local_dofs(&self, t: usize) -> Vec<Option<usize>> {
        let p = self.mesh.degree(t);
        let lay = Layout::new(p);
        let tri = self.mesh.triangle(t);
        let te = self.mesh.tri_edges(t);
        let mut out = vec![None; lay.dim()];
        for v in 0..3 {
            out[lay.vertex(v)] = self.vertex_dof[tri[v]];
        }
        for e in 0..3 {
            let ge = te[e];
            for k in 2..=p {
                if k <= self.edge_degree[ge] {
                    out[lay.edge(e, k)] = self.edge_dof[ge].map(|s| s + k - 2);
                }
            }
        }
        let first_bubble = 3 + 3 * p.saturating_sub(1);
        for (i, slot) in out.iter_mut().enumerate().skip(first_bubble) {
            *slot = Some(self.bubble_dof[t] + i - first_bubble);
        }
        out
    }

    pub fn element(&self, t: usize) -> ElementEval {
        ElementEval::new(&self.mesh, t, self.mesh.degree(t))
    }

    /// `b_i = Σ_T ∫_T (s φ_i + g·∇φ_i)` with `(s, g) = data(t, x, y)`,
    /// integrated exactly for data of degree `data_degree(t)`.
    pub fn assemble_load<D, F>(&self, data_degree: D, mut data: F) -> Vec<f64>
    where
        D: Fn(usize) -> usize,
        F: FnMut(usize, f64, f64) -> (f64, [f64; 2]),
    {
        let mut b = vec![0.0; self.ndof];
        for t in 0..self.mesh.n_triangles() {
            let p = self.mesh.degree(t);
            let dofs = self.local_dofs(t);
            let mut el = self.element(t);
            let n = el.dim();
            let (mut v, mut g) = (vec![0.0; n], vec![[0.0; 2]; n]);
            let (pts, ws) = el.geometry.rule(p + data_degree(t));
            for (pt, w) in pts.iter().zip(&ws) {
                el.eval(pt[0], pt[1], &mut v, &mut g);
                let (s, gv) = data(t, pt[0], pt[1]);
                for (i, d) in dofs.iter().enumerate() {
                    if let Some(i_g) = d {
                        b[*i_g] += w * (s * v[i] + gv[0] * g[i][0] + gv[1] * g[i][1]);
                    }
                }
            }
        }
        b
    }

    /// Load vector of `v ↦ ∫ f v`.
    pub fn source_load(&self, f: &Source) -> Vec<f64> {
        let d = f.quadrature_degree();
        self.assemble_load(|_| d, |_, x, y| (f.eval(x, y), [0.0; 2]))
    }

    /// Local coefficient vector of triangle `t` from global coefficients.
    pub fn element_coeffs(&self, t: usize, coeffs: &[f64]) -> Vec<f64> {
        self.local_dofs(t).iter().map(|d| d.map_or(0.0, |i| coeffs[i])).collect()
    }
}

/// Factored stiffness matrix of an [`HpSpace`].
pub struct HpSystem {
    space: HpSpace,
    k: SparseColMat<usize, f64>,
    scale: Vec<f64>,
    llt: Llt<usize, f64>,
}

impl HpSystem {
    pub fn new(space: HpSpace) -> Result<Self> {
        let n = space.ndof();
        let mut trip = Vec::new();
        let mesh = space.mesh();
        for t in 0..mesh.n_triangles() {
            let p = mesh.degree(t);
            let dofs = space.local_dofs(t);
            let mut el = space.element(t);
            let m = el.dim();
            let (mut v, mut g) = (vec![0.0; m], vec![[0.0; 2]; m]);
            let (pts, ws) = el.geometry.rule(2 * p - 2);
            let mut kl = vec![0.0; m * m];
            for (pt, w) in pts.iter().zip(&ws) {
                el.eval(pt[0], pt[1], &mut v, &mut g);
                for i in 0..m {
                    if dofs[i].is_none() {
                        continue;
                    }
                    for j in 0..m {
                        kl[i * m + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                }
            }
            for i in 0..m {
                let Some(gi) = dofs[i] else { continue };
                for j in 0..m {
                    let Some(gj) = dofs[j] else { continue };
                    trip.push(Triplet::new(gi, gj, kl[i * m + j]));
                }
            }
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| SatError::InvalidArgument(format!("stiffness assembly: {e:?}")))?;
        let mut diag = vec![0.0; n];
        {
            let r = k.as_ref();
            let (cp, ri, val) = (r.symbolic().col_ptr(), r.symbolic().row_idx(), r.val());
            for j in 0..n {
                for idx in cp[j]..cp[j + 1] {
                    if ri[idx] == j {
                        diag[j] = val[idx];
                    }
                }
            }
        }
        if let Some(j) = diag.iter().position(|&d| d <= 0.0) {
            return Err(SatError::Singular {
                context: format!("stiffness diagonal vanishes at dof {j}; boundary conditions leave a kernel"),
                residual: f64::NAN,
            });
        }
        let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let scaled_trip: Vec<_> = {
            let r = k.as_ref();
            let (cp, ri, val) = (r.symbolic().col_ptr(), r.symbolic().row_idx(), r.val());
            let mut out = Vec::with_capacity(val.len());
            for j in 0..n {
                for idx in cp[j]..cp[j + 1] {
                    let i = ri[idx];
                    out.push(Triplet::new(i, j, val[idx] * scale[i] * scale[j]));
                }
            }
            out
        };
        let ks = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &scaled_trip)
            .map_err(|e| SatError::InvalidArgument(format!("stiffness assembly: {e:?}")))?;
        let llt = ks.sp_cholesky(Side::Lower).map_err(|_| SatError::Singular {
            context: "stiffness matrix is not positive definite".into(),
            residual: f64::NAN,
        })?;
        Ok(Self { space, k, scale, llt })
    }

    pub fn space(&self) -> &HpSpace {
        &self.space
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let r = self.k.as_ref();
        let (cp, ri, val) = (r.symbolic().col_ptr(), r.symbolic().row_idx(), r.val());
        let mut y = vec![0.0; x.len()];
        for j in 0..x.len() {
            for idx in cp[j]..cp[j + 1] {
                y[ri[idx]] += val[idx] * x[j];
            }
        }
        y
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i] * self.scale[i]);
        let x = self.llt.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)] * self.scale[i]).collect()
    }

    /// Solves `K u = b` with one refinement step; the relative residual must
    /// end below `1e-10`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let bn = norm(b);
        if bn == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.raw_solve(b);
        let r: Vec<f64> = b.iter().zip(self.matvec(&x)).map(|(a, c)| a - c).collect();
        let dx = self.raw_solve(&r);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        let res = norm(&b.iter().zip(self.matvec(&x)).map(|(a, c)| a - c).collect::<Vec<_>>()) / bn;
        if !res.is_finite() || res > 1e-10 {
            return Err(SatError::Singular { context: "Galerkin system".into(), residual: res });
        }
        Ok(x)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Galerkin solution on an [`HpMesh`].
#[derive(Debug, Clone)]
pub struct HpSolution {
    pub space: HpSpace,
    pub coeffs: Vec<f64>,
    /// `‖∇u_T‖²`.
    pub energy: f64,
}

impl HpSolution {
    pub fn mesh(&self) -> &HpMesh {
        self.space.mesh()
    }

    /// Values and gradients of `u_T` at physical points of triangle `t`.
    pub fn eval_on(&self, t: usize, pts: &[[f64; 2]]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let c = self.space.element_coeffs(t, &self.coeffs);
        let mut el = self.space.element(t);
        let n = el.dim();
        let (mut v, mut g) = (vec![0.0; n], vec![[0.0; 2]; n]);
        let mut vals = Vec::with_capacity(pts.len());
        let mut grads = Vec::with_capacity(pts.len());
        for pt in pts {
            el.eval(pt[0], pt[1], &mut v, &mut g);
            let mut s = 0.0;
            let mut gg = [0.0; 2];
            for i in 0..n {
                s += c[i] * v[i];
                gg[0] += c[i] * g[i][0];
                gg[1] += c[i] * g[i][1];
            }
            vals.push(s);
            grads.push(gg);
        }
        (vals, grads)
    }

    /// `‖∇(self - other)‖` over the mesh; both must live on the same
    /// triangulation.
    pub fn energy_distance(&self, other: &HpSolution) -> f64 {
        let mesh = self.mesh();
        let mut s = 0.0;
        for t in 0..mesh.n_triangles() {
            let p = mesh.degree(t).max(other.mesh().degree(t));
            let (pts, ws) = mesh.geometry(t).rule(2 * p);
            let (_, ga) = self.eval_on(t, &pts);
            let (_, gb) = other.eval_on(t, &pts);
            for ((a, b), w) in ga.iter().zip(&gb).zip(&ws) {
                s += w * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
            }
        }
        s.sqrt()
    }
}

/// Pointwise evaluation of an [`HpSolution`] with per-triangle caches.
pub struct SolutionEval<'a> {
    sol: &'a HpSolution,
    cache: Vec<Option<(ElementEval, Vec<f64>)>>,
    v: Vec<f64>,
    g: Vec<[f64; 2]>,
}

impl SolutionEval<'_> {
    /// `(u, ∇u)` at a physical point of triangle `t`.
    pub fn value_grad(&mut self, t: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
        let sol = self.sol;
        let (el, c) = self.cache[t].get_or_insert_with(|| (sol.space.element(t), sol.space.element_coeffs(t, &sol.coeffs)));
        let n = el.dim();
        if self.v.len() < n {
            self.v.resize(n, 0.0);
            self.g.resize(n, [0.0; 2]);
        }
        el.eval(x, y, &mut self.v[..n], &mut self.g[..n]);
        let mut s = 0.0;
        let mut gg = [0.0; 2];
        for i in 0..n {
            s += c[i] * self.v[i];
            gg[0] += c[i] * self.g[i][0];
            gg[1] += c[i] * self.g[i][1];
        }
        (s, gg)
    }

    pub fn grad(&mut self, t: usize, x: f64, y: f64) -> [f64; 2] {
        self.value_grad(t, x, y).1
    }
}

impl HpSolution {
    /// The same function in the space of `mesh`, which must be the same
    /// triangulation with degrees no lower than the current ones. Needs no
    /// solve: the hierarchic modes do not depend on the degree.
    pub fn embed(&self, mesh: &HpMesh) -> Result<HpSolution> {
        let old = self.mesh();
        if mesh.triangles() != old.triangles() || mesh.vertices() != old.vertices() {
            return Err(SatError::Mesh("embedding needs the same triangulation".into()));
        }
        if let Some(t) = (0..old.n_triangles()).find(|&t| mesh.degree(t) < old.degree(t)) {
            return Err(SatError::Mesh(format!("degree of triangle {t} would decrease")));
        }
        let space = HpSpace::new(mesh);
        let mut coeffs = vec![0.0; space.ndof()];
        for t in 0..old.n_triangles() {
            let (po, pn) = (old.degree(t), mesh.degree(t));
            let (lo, ln) = (Layout::new(po), Layout::new(pn));
            let od = self.space.local_dofs(t);
            let nd = space.local_dofs(t);
            let first_old = 3 + 3 * po.saturating_sub(1);
            let first_new = 3 + 3 * pn.saturating_sub(1);
            for (i, d) in od.iter().enumerate() {
                let Some(g) = d else { continue };
                let j = if i < 3 {
                    i
                } else if i < first_old {
                    let e = (i - 3) / (po - 1);
                    let k = (i - 3) % (po - 1) + 2;
                    debug_assert_eq!(lo.edge(e, k), i);
                    ln.edge(e, k)
                } else {
                    first_new + (i - first_old)
                };
                if let Some(h) = nd[j] {
                    coeffs[h] = self.coeffs[*g];
                }
            }
        }
        Ok(HpSolution { space, coeffs, energy: self.energy })
    }

    pub fn evaluator(&self) -> SolutionEval<'_> {
        SolutionEval { sol: self, cache: (0..self.mesh().n_triangles()).map(|_| None).collect(), v: Vec::new(), g: Vec::new() }
    }
}

/// Galerkin solution of `-Δu = f`, `u = 0` on the boundary.
pub fn solve_hp(mesh: &HpMesh, f: &Source) -> Result<HpSolution> {
    let space = HpSpace::new(mesh);
    let b = space.source_load(f);
    if space.ndof() == 0 {
        return Ok(HpSolution { space, coeffs: Vec::new(), energy: 0.0 });
    }
    let sys = HpSystem::new(space)?;
    let u = sys.solve(&b)?;
    let energy = u.iter().zip(&b).map(|(a, c)| a * c).sum();
    Ok(HpSolution { space: sys.space, coeffs: u, energy })
}
