//! Star residuals on projected data and data oscillation.

use super::mesh::{HpMesh, StarPatch};
use super::source::Source;
use super::space::HpSolution;
use crate::basis::dubiner::{dim_p, DubinerEval};
use crate::basis::poly::legendre_normalized_all;
use crate::quadrature::{gauss_legendre, points_for_degree};
use crate::rtflux::AffineTriangle;

/// `L²(T)`-orthonormal basis of `P_d(T)`.
pub struct OrthoBasis {
    pub geometry: AffineTriangle,
    eval: DubinerEval,
    scale: f64,
    rg: Vec<[f64; 2]>,
}

impl OrthoBasis {
    pub fn new(geometry: AffineTriangle, degree: usize) -> Self {
        Self {
            geometry,
            eval: DubinerEval::new(degree),
            scale: 1.0 / geometry.jacobian_det().abs().sqrt(),
            rg: vec![[0.0; 2]; dim_p(degree)],
        }
    }

    pub fn dim(&self) -> usize {
        self.eval.dim()
    }

    pub fn values(&mut self, x: f64, y: f64, out: &mut [f64]) {
        let r = self.geometry.to_reference(x, y);
        self.eval.values(r[0], r[1], out);
        out.iter_mut().for_each(|v| *v *= self.scale);
    }

    pub fn values_grads(&mut self, x: f64, y: f64, out: &mut [f64], grads: &mut [[f64; 2]]) {
        let r = self.geometry.to_reference(x, y);
        self.eval.values_grads(r[0], r[1], out, &mut self.rg);
        for (g, rg) in grads.iter_mut().zip(&self.rg) {
            let pg = self.geometry.push_gradient(*rg);
            *g = [pg[0] * self.scale, pg[1] * self.scale];
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
    }

    /// `Σ c_i q_i(x, y)`.
    pub fn combine(&mut self, coeffs: &[f64], x: f64, y: f64) -> f64 {
        let mut v = vec![0.0; self.dim()];
        self.values(x, y, &mut v);
        v.iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    /// Coefficients of the `L²(T)` projection of `f`, exact when `f` has
    /// degree at most `f_degree`.
    pub fn project<F: FnMut(f64, f64) -> f64>(&mut self, f_degree: usize, mut f: F) -> Vec<f64> {
        let n = self.dim();
        let (pts, ws) = self.geometry.rule(self.eval.degree() + f_degree);
        let mut v = vec![0.0; n];
        let mut c = vec![0.0; n];
        for (pt, w) in pts.iter().zip(&ws) {
            self.values(pt[0], pt[1], &mut v);
            let fv = f(pt[0], pt[1]);
            for i in 0..n {
                c[i] += w * fv * v[i];
            }
        }
        c
    }
}

/// `∫_T ψ w / ∫_T ψ` with `ψ` the barycentric coordinate of local vertex `k`.
pub fn weighted_mean<F: Fn(f64, f64) -> f64>(geometry: &AffineTriangle, k: usize, w_degree: usize, w: F) -> f64 {
    let (pts, ws) = geometry.rule(w_degree + 1);
    let mut s = 0.0;
    for (pt, wt) in pts.iter().zip(&ws) {
        s += wt * geometry.barycentric(pt[0], pt[1])[k] * w(pt[0], pt[1]);
    }
    s / (geometry.area() / 3.0)
}

/// `(Q_{T[a]} f)|_T` in the orthonormal basis of `P_{max(p_T-1,0)}(T)`:
/// the `L²` projection for `p_T ≥ 2`, the `ψ_a`-weighted mean for `p_T = 1`.
pub fn star_projection(mesh: &HpMesh, t: usize, a: usize, f: &Source) -> Vec<f64> {
    let p = mesh.degree(t);
    let g = mesh.geometry(t);
    let fd = f.quadrature_degree();
    if p >= 2 {
        OrthoBasis::new(g, p - 1).project(fd, |x, y| f.eval(x, y))
    } else {
        let k = mesh.local_vertex(t, a).expect("vertex not in triangle");
        let m = weighted_mean(&g, k, fd, |x, y| f.eval(x, y));
        vec![m * g.area().sqrt()]
    }
}

/// Coefficients of `Δu_T|_T` in the orthonormal basis of `P_{p_T-1}(T)`,
/// from `∫Δu q = -∫∇u·∇q + ∫_{∂T} (∇u·n) q`.
pub fn element_laplacian(u: &HpSolution, t: usize) -> Vec<f64> {
    let mesh = u.mesh();
    let p = mesh.degree(t);
    if p < 2 {
        return vec![0.0];
    }
    let g = mesh.geometry(t);
    let mut ob = OrthoBasis::new(g, p - 1);
    let n = ob.dim();
    let (mut v, mut gr) = (vec![0.0; n], vec![[0.0; 2]; n]);
    let mut c = vec![0.0; n];
    let (pts, ws) = g.rule(2 * p - 3);
    let (_, gu) = u.eval_on(t, &pts);
    for ((pt, w), du) in pts.iter().zip(&ws).zip(&gu) {
        ob.values_grads(pt[0], pt[1], &mut v, &mut gr);
        for i in 0..n {
            c[i] -= w * (du[0] * gr[i][0] + du[1] * gr[i][1]);
        }
    }
    let gl = gauss_legendre(points_for_degree(2 * p - 2));
    let vs = g.verts;
    for (s, e) in [(0, 1), (1, 2), (2, 0)] {
        let (a, b) = (vs[s], vs[e]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let nrm = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
        let pts: Vec<[f64; 2]> = gl
            .nodes
            .iter()
            .map(|t| {
                let s = 0.5 * (1.0 + t[0]);
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            })
            .collect();
        let (_, gu) = u.eval_on(t, &pts);
        for ((pt, w), du) in pts.iter().zip(&gl.weights).zip(&gu) {
            ob.values(pt[0], pt[1], &mut v);
            let dn = du[0] * nrm[0] + du[1] * nrm[1];
            for i in 0..n {
                c[i] += 0.5 * len * w * dn * v[i];
            }
        }
    }
    c
}

/// Interior edge of a star with the data of its normal-derivative jump.
#[derive(Debug, Clone)]
pub struct EdgeJump {
    pub edge: usize,
    /// Endpoints ordered by global vertex index.
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Unit normal, the clockwise rotation of `end - start`.
    pub normal: [f64; 2],
    /// Triangle the normal points out of, and the one it points into.
    pub minus: usize,
    pub plus: usize,
    /// `(∇u⁺ - ∇u⁻)·n` in the `L²(e)`-orthonormal Legendre basis.
    pub coeffs: Vec<f64>,
}

impl EdgeJump {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        let h = 0.5 * (1.0 + s);
        [
            self.start[0] + h * (self.end[0] - self.start[0]),
            self.start[1] + h * (self.end[1] - self.start[1]),
        ]
    }

    pub fn eval(&self, s: f64) -> f64 {
        let mut mu = vec![0.0; self.coeffs.len()];
        legendre_normalized_all(s, &mut mu);
        let c = (2.0 / self.length()).sqrt();
        mu.iter().zip(&self.coeffs).map(|(m, k)| c * m * k).sum()
    }
}

/// The functional `r̆_a(v) = Σ_T ∫_T v ψ_a φ_T + Σ_e ∫_e v ψ_a φ_e`.
#[derive(Debug, Clone)]
pub struct LocalResidual {
    pub patch: StarPatch,
    /// `(Q_{T[a]} f)|_T` per star triangle, orthonormal `P_{max(p_T-1,0)}(T)`.
    pub qf: Vec<Vec<f64>>,
    /// `φ_T = Q_{T[a]} f + Δu_T`, same basis.
    pub phi_t: Vec<Vec<f64>>,
    /// Jumps on edges through `a` that are interior to the domain.
    pub jumps: Vec<EdgeJump>,
}

/// Star residual of `u_T` at vertex `a` with projected data.
pub fn local_residual(u: &HpSolution, f: &Source, a: usize) -> LocalResidual {
    let mesh = u.mesh();
    let patch = StarPatch::new(mesh, a);
    let mut qf = Vec::new();
    let mut phi_t = Vec::new();
    for &t in &patch.triangles {
        let q = star_projection(mesh, t, a, f);
        let lap = element_laplacian(u, t);
        phi_t.push(q.iter().zip(&lap).map(|(x, y)| x + y).collect());
        qf.push(q);
    }
    let mut jumps = Vec::new();
    for &e in &patch.inner_edges {
        if mesh.is_boundary_edge(e) {
            continue;
        }
        jumps.push(edge_jump(u, e, patch.p_max));
    }
    LocalResidual { patch, qf, phi_t, jumps }
}

/// Normal-derivative jump on an interior edge, in Legendre modes up to `degree`.
pub fn edge_jump(u: &HpSolution, e: usize, degree: usize) -> EdgeJump {
    let mesh = u.mesh();
    let [i, j] = mesh.edge(e);
    let (start, end) = (mesh.vertex(i.min(j)), mesh.vertex(i.max(j)));
    let len = (end[0] - start[0]).hypot(end[1] - start[1]);
    let normal = [(end[1] - start[1]) / len, -(end[0] - start[0]) / len];
    let tris = mesh.edge_triangles(e);
    // the normal points out of `minus`
    let centroid = |t: usize| {
        let v = mesh.geometry(t).verts;
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    };
    let c0 = centroid(tris[0]);
    let side = (c0[0] - start[0]) * normal[0] + (c0[1] - start[1]) * normal[1];
    let (minus, plus) = if side < 0.0 { (tris[0], tris[1]) } else { (tris[1], tris[0]) };
    let gl = gauss_legendre(points_for_degree(2 * degree + 2));
    let pts: Vec<[f64; 2]> = gl
        .nodes
        .iter()
        .map(|t| {
            let h = 0.5 * (1.0 + t[0]);
            [start[0] + h * (end[0] - start[0]), start[1] + h * (end[1] - start[1])]
        })
        .collect();
    let (_, gm) = u.eval_on(minus, &pts);
    let (_, gp) = u.eval_on(plus, &pts);
    let mut mu = vec![0.0; degree + 1];
    let mut coeffs = vec![0.0; degree + 1];
    let c = (2.0 / len).sqrt() * 0.5 * len;
    for (q, (t, w)) in gl.nodes.iter().zip(&gl.weights).enumerate() {
        let jmp = (gp[q][0] - gm[q][0]) * normal[0] + (gp[q][1] - gm[q][1]) * normal[1];
        legendre_normalized_all(t[0], &mut mu);
        for k in 0..=degree {
            coeffs[k] += w * c * jmp * mu[k];
        }
    }
    EdgeJump { edge: e, start, end, normal, minus, plus, coeffs }
}

impl LocalResidual {
    pub fn center(&self) -> usize {
        self.patch.center
    }

    /// `r̆_a(v)` for `v` given per star triangle, exact when `v` has degree at
    /// most `v_degree`.
    pub fn apply<V: FnMut(usize, f64, f64) -> f64>(&self, mesh: &HpMesh, v_degree: usize, mut v: V) -> f64 {
        let a = self.patch.center;
        let mut s = 0.0;
        for (i, &t) in self.patch.triangles.iter().enumerate() {
            let g = mesh.geometry(t);
            let d = mesh.degree(t).saturating_sub(1);
            let mut ob = OrthoBasis::new(g, d);
            let k = mesh.local_vertex(t, a).unwrap();
            let (pts, ws) = g.rule(d + 1 + v_degree);
            for (pt, w) in pts.iter().zip(&ws) {
                let phi = ob.combine(&self.phi_t[i], pt[0], pt[1]);
                s += w * phi * g.barycentric(pt[0], pt[1])[k] * v(t, pt[0], pt[1]);
            }
        }
        for j in &self.jumps {
            let deg = j.coeffs.len() + v_degree;
            let gl = gauss_legendre(points_for_degree(deg));
            let len = j.length();
            // ψ_a is linear along the edge: 1 at `a`, 0 at the other end
            let a_is_start = mesh.vertex(a) == j.start;
            for (t, w) in gl.nodes.iter().zip(&gl.weights) {
                let pt = j.point(t[0]);
                let psi = if a_is_start { 0.5 * (1.0 - t[0]) } else { 0.5 * (1.0 + t[0]) };
                s += 0.5 * len * w * j.eval(t[0]) * psi * v(j.minus, pt[0], pt[1]);
            }
        }
        s
    }

    /// `r̆_a(1)`, zero for interior vertices after a Galerkin solve.
    pub fn mean_test(&self, mesh: &HpMesh) -> f64 {
        self.apply(mesh, 0, |_, _, _| 1.0)
    }

    /// Largest coefficient magnitude over all `φ_T` and `φ_e`.
    pub fn max_datum(&self) -> f64 {
        self.phi_t
            .iter()
            .flatten()
            .chain(self.jumps.iter().flat_map(|j| j.coeffs.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `diam(T) · inf_{g ∈ P_{p_T-1}(T)} ‖f - g‖_T` for every triangle.
pub fn element_oscillation(mesh: &HpMesh, f: &Source) -> Vec<f64> {
    (0..mesh.n_triangles())
        .map(|t| {
            let p = mesh.degree(t);
            let g = mesh.geometry(t);
            let fd = f.quadrature_degree();
            if f.degree().is_some_and(|d| d + 1 <= p) {
                return 0.0;
            }
            let mut ob = OrthoBasis::new(g, p - 1);
            let c = ob.project(fd, |x, y| f.eval(x, y));
            let (pts, ws) = g.rule(2 * fd.max(p));
            let mut s = 0.0;
            for (pt, w) in pts.iter().zip(&ws) {
                let r = f.eval(pt[0], pt[1]) - ob.combine(&c, pt[0], pt[1]);
                s += w * r * r;
            }
            g.diameter() * s.sqrt()
        })
        .collect()
}

/// `osc(f, T)`: the `ℓ₂` sum of [`element_oscillation`].
pub fn oscillation(mesh: &HpMesh, f: &Source) -> f64 {
    element_oscillation(mesh, f).iter().map(|v| v * v).sum::<f64>().sqrt()
}
