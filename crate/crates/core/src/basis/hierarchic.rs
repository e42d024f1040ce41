//! Boundary-adapted hierarchic basis written in barycentric coordinates.
//!
//! Layout for degree `r`:
//! - vertex functions `λ_v`, `v = 0, 1, 2`;
//! - edge functions on `(a, b) ∈ {(0,1), (0,2), (1,2)}`, `k = 2..=r`:
//!   `λ_a λ_b S^{(1,1)}_{k-2}(λ_b - λ_a, λ_a + λ_b)`;
//! - bubbles `λ_0 λ_1 λ_2 S^{(1,1)}_{i-1}(λ_1 - λ_0, λ_0 + λ_1) P^{(2i+1,1)}_{j-1}(2λ_2 - 1)`
//!   for `i, j ≥ 1`, `i + j ≤ r - 1`, ordered by `i + j` and then `i`.
//!
//! An edge may be flipped so that the parametrization follows a global
//! orientation, which is what makes neighbouring elements conform.

use super::poly::scaled_jacobi;

/// Local vertex pairs of the three edges.
pub const EDGES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Index arithmetic for the hierarchic layout of one degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub degree: usize,
}

impl Layout {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    pub fn dim(&self) -> usize {
        (self.degree + 1) * (self.degree + 2) / 2
    }

    pub fn vertex(&self, v: usize) -> usize {
        v
    }

    /// Edge function of polynomial degree `k ≥ 2` on local edge `e`.
    pub fn edge(&self, e: usize, k: usize) -> usize {
        debug_assert!(k >= 2 && k <= self.degree);
        3 + e * (self.degree - 1) + (k - 2)
    }

    /// Bubble with indices `i, j ≥ 1`; its polynomial degree is `i + j + 1`.
    pub fn bubble(&self, i: usize, j: usize) -> usize {
        let n = i + j;
        debug_assert!(i >= 1 && j >= 1 && n < self.degree);
        3 + 3 * (self.degree - 1) + (n - 2) * (n - 1) / 2 + (i - 1)
    }

    /// Bubbles of polynomial degree at most `p`, as `(i, j)` pairs.
    pub fn bubbles_up_to(&self, p: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for n in 2..p.min(self.degree) {
            for i in 1..n {
                out.push((i, n - i));
            }
        }
        out
    }
}

/// Scratch for repeated evaluation at one degree.
#[derive(Debug, Clone)]
pub struct HierarchicEval {
    layout: Layout,
    s: Vec<f64>,
    st: Vec<f64>,
    ss: Vec<f64>,
    p: Vec<f64>,
    pd: Vec<f64>,
    tmp: Vec<f64>,
}

impl HierarchicEval {
    pub fn new(degree: usize) -> Self {
        let n = degree.max(1);
        Self {
            layout: Layout::new(degree),
            s: vec![0.0; n],
            st: vec![0.0; n],
            ss: vec![0.0; n],
            p: vec![0.0; n],
            pd: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Values and gradients of all functions. `glam` holds the gradients of
    /// the barycentric coordinates; `flip[e]` reverses edge `e`.
    pub fn eval(
        &mut self,
        lam: [f64; 3],
        glam: [[f64; 2]; 3],
        flip: [bool; 3],
        out: &mut [f64],
        grads: &mut [[f64; 2]],
    ) {
        let r = self.layout.degree;
        for v in 0..3 {
            out[v] = lam[v];
            grads[v] = glam[v];
        }
        if r < 2 {
            return;
        }
        for (e, &(a0, b0)) in EDGES.iter().enumerate() {
            let (a, b) = if flip[e] { (b0, a0) } else { (a0, b0) };
            let t = lam[b] - lam[a];
            let s = lam[a] + lam[b];
            let n = r - 1;
            scaled_jacobi(
                1.0,
                1.0,
                t,
                s,
                &mut self.s[..n],
                &mut self.st[..n],
                &mut self.ss[..n],
            );
            let w = lam[a] * lam[b];
            let gw = add(scale(glam[a], lam[b]), scale(glam[b], lam[a]));
            let gt = sub(glam[b], glam[a]);
            let gs = add(glam[a], glam[b]);
            for k in 2..=r {
                let idx = self.layout.edge(e, k);
                let (sv, sdt, sds) = (self.s[k - 2], self.st[k - 2], self.ss[k - 2]);
                out[idx] = w * sv;
                grads[idx] = add(scale(gw, sv), scale(add(scale(gt, sdt), scale(gs, sds)), w));
            }
        }
        if r < 3 {
            return;
        }
        let bub = lam[0] * lam[1] * lam[2];
        let gbub = add(
            add(scale(glam[0], lam[1] * lam[2]), scale(glam[1], lam[0] * lam[2])),
            scale(glam[2], lam[0] * lam[1]),
        );
        let t = lam[1] - lam[0];
        let s = lam[0] + lam[1];
        let gt = sub(glam[1], glam[0]);
        let gs = add(glam[0], glam[1]);
        let n = r - 2;
        scaled_jacobi(1.0, 1.0, t, s, &mut self.s[..n], &mut self.st[..n], &mut self.ss[..n]);
        let z = 2.0 * lam[2] - 1.0;
        let gz = scale(glam[2], 2.0);
        for i in 1..=(r - 2) {
            let u = self.s[i - 1];
            let gu = add(scale(gt, self.st[i - 1]), scale(gs, self.ss[i - 1]));
            let len = r - 1 - i;
            scaled_jacobi(
                (2 * i + 1) as f64,
                1.0,
                z,
                1.0,
                &mut self.p[..len],
                &mut self.pd[..len],
                &mut self.tmp[..len],
            );
            for j in 1..=len {
                let idx = self.layout.bubble(i, j);
                let pv = self.p[j - 1];
                let uv = u * pv;
                out[idx] = bub * uv;
                let guv = add(scale(gu, pv), scale(gz, u * self.pd[j - 1]));
                grads[idx] = add(scale(gbub, uv), scale(guv, bub));
            }
        }
    }
}

#[inline]
fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn scale(a: [f64; 2], c: f64) -> [f64; 2] {
    [a[0] * c, a[1] * c]
}
