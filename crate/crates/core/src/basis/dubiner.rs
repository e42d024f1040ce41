//! Orthonormal Koornwinder–Dubiner polynomials on the reference triangle.
//!
//! `D_{ij} = c_{ij} Q_i P_j^{(2i+1,0)}(y)` with `Q_i = s^i P_i(t / s)`,
//! `t = (1 + 2x + y) / 2`, `s = (1 - y) / 2`. Functions are ordered by total
//! degree `n = i + j` and then by `i`, so `P_n` is always a prefix.

use super::poly::scaled_jacobi;

/// Number of polynomials of total degree at most `n` in two variables.
pub fn dim_p(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// Position of `D_{ij}` in the ordering.
pub fn index(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + i
}

/// Reusable scratch for repeated evaluation at one degree.
#[derive(Debug, Clone)]
pub struct DubinerEval {
    degree: usize,
    q: Vec<f64>,
    qt: Vec<f64>,
    qs: Vec<f64>,
    p: Vec<f64>,
    pd: Vec<f64>,
    tmp: Vec<f64>,
}

impl DubinerEval {
    pub fn new(degree: usize) -> Self {
        let n = degree + 1;
        Self {
            degree,
            q: vec![0.0; n],
            qt: vec![0.0; n],
            qs: vec![0.0; n],
            p: vec![0.0; n],
            pd: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        dim_p(self.degree)
    }

    /// Values at `(x, y)` in reference coordinates.
    pub fn values(&mut self, x: f64, y: f64, out: &mut [f64]) {
        self.eval(x, y, out, None);
    }

    /// Values and gradients at `(x, y)`.
    pub fn values_grads(&mut self, x: f64, y: f64, out: &mut [f64], grads: &mut [[f64; 2]]) {
        self.eval(x, y, out, Some(grads));
    }

    fn eval(&mut self, x: f64, y: f64, out: &mut [f64], mut grads: Option<&mut [[f64; 2]]>) {
        let r = self.degree;
        let t = 0.5 * (1.0 + 2.0 * x + y);
        let s = 0.5 * (1.0 - y);
        scaled_jacobi(0.0, 0.0, t, s, &mut self.q, &mut self.qt, &mut self.qs);
        for i in 0..=r {
            let len = r - i + 1;
            let a = (2 * i + 1) as f64;
            scaled_jacobi(
                a,
                0.0,
                y,
                1.0,
                &mut self.p[..len],
                &mut self.pd[..len],
                &mut self.tmp[..len],
            );
            // grad t = (1, 1/2), grad s = (0, -1/2)
            let qi = self.q[i];
            let qx = self.qt[i];
            let qy = 0.5 * self.qt[i] - 0.5 * self.qs[i];
            for j in 0..len {
                let c = ((2 * i + 1) as f64 * (i + j + 1) as f64 / 2.0).sqrt();
                let k = index(i, j);
                out[k] = c * qi * self.p[j];
                if let Some(g) = grads.as_deref_mut() {
                    g[k] = [c * qx * self.p[j], c * (qy * self.p[j] + qi * self.pd[j])];
                }
            }
        }
    }
}
