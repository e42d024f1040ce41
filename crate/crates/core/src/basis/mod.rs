//! Polynomial spaces on the reference triangle `Ť = {x, y ≥ -1, x + y ≤ 0}`.
//!
//! Vertices are `V0 = (-1,-1)`, `V1 = (1,-1)`, `V2 = (-1,1)`. Edges:
//! `ě₁ = V0V1` (`y = -1`), `ě₂ = V0V2` (`x = -1`), `ě₃ = V1V2` (`x + y = 0`).
//! `ψ` is the barycentric coordinate of `V0`.

pub mod dubiner;
pub mod hierarchic;
pub mod poly;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SatError};
use crate::quadrature::{triangle_rule, QuadRule};
use dubiner::DubinerEval;
use hierarchic::{HierarchicEval, Layout};

pub use poly::legendre_normalized;

/// Barycentric gradients on the reference triangle.
pub const REF_BARY_GRAD: [[f64; 2]; 3] = [[-0.5, -0.5], [0.5, 0.0], [0.0, 0.5]];

/// Barycentric coordinates of a reference point.
pub fn ref_barycentric(x: f64, y: f64) -> [f64; 3] {
    [-(x + y) / 2.0, (1.0 + x) / 2.0, (1.0 + y) / 2.0]
}

/// Dirichlet flags on `ě₁, ě₂, ě₃`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeMask(pub [bool; 3]);

impl EdgeMask {
    pub const NONE: EdgeMask = EdgeMask([false; 3]);

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisFamily {
    /// Orthonormal Dubiner polynomials; only for unmasked spaces.
    Dubiner,
    /// Vertex/edge/bubble hierarchic functions, rescaled to unit energy.
    Hierarchic,
}

/// A polynomial space of degree `r` with homogeneous traces on masked edges.
#[derive(Debug, Clone)]
pub struct TriangleSpace {
    degree: usize,
    mask: EdgeMask,
    mean_zero: bool,
    family: BasisFamily,
    /// Kept hierarchic indices (empty for Dubiner).
    kept: Vec<usize>,
    /// Per-function scale factors applied after raw evaluation.
    scales: Vec<f64>,
    stiffness: Mat<f64>,
    constraint: Option<Vec<f64>>,
}

/// Build a space, choosing Dubiner when nothing is masked.
pub fn build_space(r: usize, mask: EdgeMask, mean_zero: bool) -> Result<TriangleSpace> {
    let family = if mask.any() {
        BasisFamily::Hierarchic
    } else {
        BasisFamily::Dubiner
    };
    build_space_with(r, mask, mean_zero, family)
}

pub fn build_space_with(
    r: usize,
    mask: EdgeMask,
    mean_zero: bool,
    family: BasisFamily,
) -> Result<TriangleSpace> {
    if r == 0 {
        return Err(SatError::InvalidArgument("degree must be at least 1".into()));
    }
    if mean_zero && mask.any() {
        return Err(SatError::InvalidArgument(
            "mean-zero spaces cannot carry Dirichlet edges".into(),
        ));
    }
    if family == BasisFamily::Dubiner && mask.any() {
        return Err(SatError::InvalidArgument(
            "the Dubiner family cannot impose edge traces".into(),
        ));
    }
    let layout = Layout::new(r);
    let kept: Vec<usize> = match family {
        BasisFamily::Dubiner => Vec::new(),
        BasisFamily::Hierarchic => {
            let mut drop = vec![false; layout.dim()];
            for (e, &(a, b)) in hierarchic::EDGES.iter().enumerate() {
                if mask.0[e] {
                    drop[layout.vertex(a)] = true;
                    drop[layout.vertex(b)] = true;
                    for k in 2..=r {
                        drop[layout.edge(e, k)] = true;
                    }
                }
            }
            (0..layout.dim()).filter(|&i| !drop[i]).collect()
        }
    };
    let dim = match family {
        BasisFamily::Dubiner => layout.dim(),
        BasisFamily::Hierarchic => kept.len(),
    };
    if dim == 0 {
        return Err(SatError::InvalidArgument(format!(
            "degree {r} with mask {:?} leaves no nonzero function",
            mask.0
        )));
    }
    let mut space = TriangleSpace {
        degree: r,
        mask,
        mean_zero,
        family,
        kept,
        scales: vec![1.0; dim],
        stiffness: Mat::zeros(0, 0),
        constraint: None,
    };
    let mut k = space.assemble_stiffness();
    if family == BasisFamily::Hierarchic {
        let s: Vec<f64> = (0..dim).map(|i| 1.0 / k[(i, i)].sqrt()).collect();
        k = Mat::from_fn(dim, dim, |i, j| k[(i, j)] * s[i] * s[j]);
        space.scales = s;
    }
    // exact symmetry
    for j in 0..dim {
        for i in 0..j {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = avg;
            k[(j, i)] = avg;
        }
    }
    space.stiffness = k;
    if mean_zero {
        space.constraint = Some(space.integrals());
    }
    Ok(space)
}

/// Evaluator bound to one space; owns scratch buffers.
pub struct SpaceEval<'a> {
    space: &'a TriangleSpace,
    dub: Option<DubinerEval>,
    hier: Option<HierarchicEval>,
    raw: Vec<f64>,
    raw_g: Vec<[f64; 2]>,
}

impl<'a> SpaceEval<'a> {
    /// Values and gradients at a reference point.
    pub fn eval(&mut self, x: f64, y: f64, vals: &mut [f64], grads: &mut [[f64; 2]]) {
        let sp = self.space;
        match sp.family {
            BasisFamily::Dubiner => {
                self.dub.as_mut().unwrap().values_grads(x, y, vals, grads);
            }
            BasisFamily::Hierarchic => {
                let h = self.hier.as_mut().unwrap();
                h.eval(
                    ref_barycentric(x, y),
                    REF_BARY_GRAD,
                    [false; 3],
                    &mut self.raw,
                    &mut self.raw_g,
                );
                for (k, &i) in sp.kept.iter().enumerate() {
                    let s = sp.scales[k];
                    vals[k] = s * self.raw[i];
                    grads[k] = [s * self.raw_g[i][0], s * self.raw_g[i][1]];
                }
            }
        }
    }
}

const CHUNK: usize = 256;

impl TriangleSpace {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn mask(&self) -> EdgeMask {
        self.mask
    }

    pub fn mean_zero(&self) -> bool {
        self.mean_zero
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    /// Factors by which the raw family functions were rescaled (all ones for
    /// the Dubiner family).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `K_ij = ∫ ∇b_i · ∇b_j`.
    pub fn stiffness(&self) -> &Mat<f64> {
        &self.stiffness
    }

    /// `c_i = ∫ b_i` when the space was built with `mean_zero`.
    pub fn constraint(&self) -> Option<&[f64]> {
        self.constraint.as_deref()
    }

    pub fn evaluator(&self) -> SpaceEval<'_> {
        let raw_dim = Layout::new(self.degree).dim();
        SpaceEval {
            space: self,
            dub: (self.family == BasisFamily::Dubiner).then(|| DubinerEval::new(self.degree)),
            hier: (self.family == BasisFamily::Hierarchic)
                .then(|| HierarchicEval::new(self.degree)),
            raw: vec![0.0; raw_dim],
            raw_g: vec![[0.0; 2]; raw_dim],
        }
    }

    /// Basis values at points, as a `points × dim` matrix.
    pub fn values_at(&self, pts: &[[f64; 2]]) -> Mat<f64> {
        let m = self.dim();
        let mut ev = self.evaluator();
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        let mut out = Mat::zeros(pts.len(), m);
        for (q, p) in pts.iter().enumerate() {
            ev.eval(p[0], p[1], &mut v, &mut g);
            for k in 0..m {
                out[(q, k)] = v[k];
            }
        }
        out
    }

    /// Basis gradients at points, as two `points × dim` matrices.
    pub fn gradients_at(&self, pts: &[[f64; 2]]) -> (Mat<f64>, Mat<f64>) {
        let m = self.dim();
        let mut ev = self.evaluator();
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        let mut gx = Mat::zeros(pts.len(), m);
        let mut gy = Mat::zeros(pts.len(), m);
        for (q, p) in pts.iter().enumerate() {
            ev.eval(p[0], p[1], &mut v, &mut g);
            for k in 0..m {
                gx[(q, k)] = g[k][0];
                gy[(q, k)] = g[k][1];
            }
        }
        (gx, gy)
    }

    /// Volume rule exact for products of two basis functions times a factor
    /// of degree `extra`.
    pub fn rule(&self, extra: usize) -> QuadRule {
        triangle_rule(2 * self.degree + extra)
    }

    /// Accumulates `Σ_q w_q a(x_q) b(x_q)ᵀ` where `a` are the basis values
    /// (or gradients) and `b` an arbitrary per-point row. Chunked to bound
    /// memory.
    ///
    /// `rows` must fill `dst_a` (`chunk × dim`, already weighted) and
    /// `dst_b` (`chunk × n`).
    fn stream<F>(&self, rule: &QuadRule, n: usize, out: &mut Mat<f64>, mut rows: F)
    where
        F: FnMut(&mut SpaceEval<'_>, &[[f64; 2]], &[f64], &mut Mat<f64>, &mut Mat<f64>),
    {
        let m = self.dim();
        let mut ev = self.evaluator();
        for (pts, ws) in rule.nodes.chunks(CHUNK).zip(rule.weights.chunks(CHUNK)) {
            let mut a = Mat::zeros(pts.len(), m);
            let mut b = Mat::zeros(pts.len(), n);
            rows(&mut ev, pts, ws, &mut a, &mut b);
            matmul(out.as_mut(), Accum::Add, a.transpose(), b.as_ref(), 1.0, Par::Seq);
        }
    }

    fn assemble_stiffness(&self) -> Mat<f64> {
        let m = self.dim();
        let rule = triangle_rule(2 * self.degree - 2);
        let mut k = Mat::zeros(m, m);
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        let mut ev = self.evaluator();
        for (pts, ws) in rule.nodes.chunks(CHUNK).zip(rule.weights.chunks(CHUNK)) {
            let n = pts.len();
            let mut a = Mat::zeros(2 * n, m);
            for (q, (p, w)) in pts.iter().zip(ws).enumerate() {
                ev.eval(p[0], p[1], &mut v, &mut g);
                let sw = w.sqrt();
                for i in 0..m {
                    a[(q, i)] = sw * g[i][0];
                    a[(n + q, i)] = sw * g[i][1];
                }
            }
            matmul(k.as_mut(), Accum::Add, a.transpose(), a.as_ref(), 1.0, Par::Seq);
        }
        k
    }

    /// `M_ij = ∫ b_i b_j`, assembled on demand.
    pub fn mass(&self) -> Mat<f64> {
        let m = self.dim();
        let rule = self.rule(0);
        let mut out = Mat::zeros(m, m);
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        self.stream(&rule, m, &mut out, |ev, pts, ws, a, b| {
            for (q, (p, w)) in pts.iter().zip(ws).enumerate() {
                ev.eval(p[0], p[1], &mut v, &mut g);
                let sw = w.sqrt();
                for i in 0..m {
                    a[(q, i)] = sw * v[i];
                    b[(q, i)] = sw * v[i];
                }
            }
        });
        out
    }

    /// `∫ b_i` for every basis function.
    pub fn integrals(&self) -> Vec<f64> {
        let col = self.volume_load(0, 1, |_, _, out| out[0] = 1.0);
        (0..self.dim()).map(|i| col[(i, 0)]).collect()
    }

    /// `G_ij = ∫ b_i f_j` for `n` source functions of degree at most
    /// `source_degree`. `f` writes the `n` source values at a point.
    pub fn volume_load<F>(&self, source_degree: usize, n: usize, mut f: F) -> Mat<f64>
    where
        F: FnMut(f64, f64, &mut [f64]),
    {
        let m = self.dim();
        let rule = triangle_rule(self.degree + source_degree);
        let mut out = Mat::zeros(m, n);
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        let mut fv = vec![0.0; n];
        self.stream(&rule, n, &mut out, |ev, pts, ws, a, b| {
            for (q, (p, w)) in pts.iter().zip(ws).enumerate() {
                ev.eval(p[0], p[1], &mut v, &mut g);
                f(p[0], p[1], &mut fv);
                for i in 0..m {
                    a[(q, i)] = w * v[i];
                }
                for j in 0..n {
                    b[(q, j)] = fv[j];
                }
            }
        });
        out
    }

    /// `G_ij = ∫_{ě} b_i f_j ds` along the straight edge from `start` to
    /// `end`; `f` receives the edge parameter `t ∈ [-1, 1]`.
    pub fn edge_load<F>(
        &self,
        start: [f64; 2],
        end: [f64; 2],
        source_degree: usize,
        n: usize,
        mut f: F,
    ) -> Mat<f64>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let m = self.dim();
        let rule = crate::quadrature::gauss_legendre(crate::quadrature::points_for_degree(
            self.degree + source_degree,
        ));
        let half = 0.5 * ((end[0] - start[0]).hypot(end[1] - start[1]));
        let mut out = Mat::zeros(m, n);
        let mut ev = self.evaluator();
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 2]; m];
        let mut fv = vec![0.0; n];
        for (node, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = node[0];
            let x = start[0] + 0.5 * (1.0 + t) * (end[0] - start[0]);
            let y = start[1] + 0.5 * (1.0 + t) * (end[1] - start[1]);
            ev.eval(x, y, &mut v, &mut g);
            f(t, &mut fv);
            for i in 0..m {
                let wv = w * half * v[i];
                for j in 0..n {
                    out[(i, j)] += wv * fv[j];
                }
            }
        }
        out
    }
}

/// Endpoints of the reference edges, each running from the lower-numbered
/// vertex to the higher one.
pub const REF_EDGES: [[[f64; 2]; 2]; 3] = [
    [[-1.0, -1.0], [1.0, -1.0]],
    [[-1.0, -1.0], [-1.0, 1.0]],
    [[1.0, -1.0], [-1.0, 1.0]],
];

/// Lengths of `ě₁, ě₂, ě₃`.
pub fn ref_edge_lengths() -> [f64; 3] {
    [2.0, 2.0, 2.0 * 2f64.sqrt()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;

    fn sym_eigs(k: &Mat<f64>) -> Vec<f64> {
        k.self_adjoint_eigenvalues(faer::Side::Lower).unwrap()
    }

    #[test]
    fn dimensions() {
        let none = build_space(3, EdgeMask::NONE, false).unwrap();
        assert_eq!(none.dim(), 10);
        let one = build_space(3, EdgeMask([false, true, false]), false).unwrap();
        assert_eq!(one.dim(), 10 - 4);
        let two = build_space(5, EdgeMask([true, true, false]), false).unwrap();
        assert_eq!(two.dim(), 21 - 11);
        let three = build_space(5, EdgeMask([true; 3]), false).unwrap();
        assert_eq!(three.dim(), 6);
    }

    #[test]
    fn degenerate_requests_are_rejected() {
        assert!(build_space(0, EdgeMask::NONE, false).is_err());
        // a linear function vanishing on two edges is zero
        assert!(build_space(1, EdgeMask([true, true, false]), false).is_err());
        assert!(build_space(2, EdgeMask([true; 3]), false).is_err());
        assert!(build_space(2, EdgeMask([true, false, false]), true).is_err());
    }

    #[test]
    fn unmasked_stiffness_has_one_dimensional_kernel() {
        for family in [BasisFamily::Dubiner, BasisFamily::Hierarchic] {
            let sp = build_space_with(6, EdgeMask::NONE, false, family).unwrap();
            let e = sym_eigs(sp.stiffness());
            assert!(e[0].abs() < 1e-12, "{family:?} {}", e[0]);
            assert!(e[1] > 1e-3, "{family:?} {}", e[1]);
        }
    }

    #[test]
    fn masked_stiffness_is_definite() {
        for mask in [[true, true, false], [false, true, false], [true, false, false]] {
            let sp = build_space(8, EdgeMask(mask), false).unwrap();
            let e = sym_eigs(sp.stiffness());
            assert!(e[0] > 1e-6);
        }
    }

    #[test]
    fn dubiner_space_is_mass_orthonormal() {
        let sp = build_space(7, EdgeMask::NONE, false).unwrap();
        let m = sp.mass();
        for i in 0..sp.dim() {
            for j in 0..sp.dim() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_functions_vanish_on_their_edges() {
        let q = gauss_legendre(12);
        for mask in [[true, true, false], [false, true, false], [true, true, true]] {
            let sp = build_space(9, EdgeMask(mask), false).unwrap();
            for (e, ends) in REF_EDGES.iter().enumerate() {
                if !mask[e] {
                    continue;
                }
                let pts: Vec<[f64; 2]> = q
                    .nodes
                    .iter()
                    .map(|n| {
                        let s = 0.5 * (1.0 + n[0]);
                        [
                            ends[0][0] + s * (ends[1][0] - ends[0][0]),
                            ends[0][1] + s * (ends[1][1] - ends[0][1]),
                        ]
                    })
                    .collect();
                let v = sp.values_at(&pts);
                for i in 0..v.nrows() {
                    for j in 0..v.ncols() {
                        assert!(v[(i, j)].abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn masked_gradients_match_finite_differences() {
        let sp = build_space(6, EdgeMask([true, true, false]), false).unwrap();
        let m = sp.dim();
        let mut ev = sp.evaluator();
        let (mut v, mut g) = (vec![0.0; m], vec![[0.0; 2]; m]);
        let (mut vp, mut vm, mut d) = (vec![0.0; m], vec![0.0; m], vec![[0.0; 2]; m]);
        let (x, y, h) = (-0.6, -0.1, 1e-6);
        ev.eval(x, y, &mut v, &mut g);
        ev.eval(x + h, y, &mut vp, &mut d);
        ev.eval(x - h, y, &mut vm, &mut d);
        for k in 0..m {
            assert!(((vp[k] - vm[k]) / (2.0 * h) - g[k][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn spaces_are_nested() {
        // project degree-4 functions onto degree 7 and check the residual
        let mask = EdgeMask([false, true, false]);
        let lo = build_space(4, mask, false).unwrap();
        let hi = build_space(7, mask, false).unwrap();
        let rule = hi.rule(0);
        let vlo = lo.values_at(&rule.nodes);
        let vhi = hi.values_at(&rule.nodes);
        let w = Mat::from_fn(rule.len(), 1, |i, _| rule.weights[i].sqrt());
        let a = Mat::from_fn(rule.len(), hi.dim(), |i, j| w[(i, 0)] * vhi[(i, j)]);
        let b = Mat::from_fn(rule.len(), lo.dim(), |i, j| w[(i, 0)] * vlo[(i, j)]);
        let qr = a.qr();
        use faer::linalg::solvers::SolveLstsq;
        let x = qr.solve_lstsq(&b);
        let res = &a * &x - &b;
        assert!(res.norm_l2() < 1e-11 * b.norm_l2());
    }

    #[test]
    fn mean_zero_exposes_integrals() {
        let sp = build_space(4, EdgeMask::NONE, true).unwrap();
        let c = sp.constraint().unwrap();
        // only the constant Dubiner function has nonzero mean
        assert!((c[0] - 2f64.sqrt()).abs() < 1e-13);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-13));
    }
}
