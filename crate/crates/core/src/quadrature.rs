//! Gaussian quadrature on [-1, 1] and on the reference triangle
//! `{x, y >= -1, x + y <= 0}`.
//!
//! Interval rules come from the eigenvalues of the Jacobi matrix of the weight
//! (Golub-Welsch), polished by Newton steps on the orthonormal recurrence; the
//! weights use the Christoffel formula. Triangle rules tensorize a Legendre
//! rule with a Jacobi(1, 0) rule through the collapsed (Duffy) map.

use faer::{Mat, Side};
use statrs::function::gamma::ln_gamma;

/// Nodes and positive weights of a quadrature rule.
///
/// For `dim == 1` the second coordinate of every node is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub dim: usize,
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub exact_degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// First coordinates of the nodes.
    pub fn xs(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n[0]).collect()
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x[0], x[1]))
            .sum()
    }
}

/// Recurrence coefficients of the orthonormal Jacobi polynomials for the
/// weight `(1-x)^alpha (1+x)^beta`: diagonal `a_k` (k < n) and off-diagonal
/// `b_k` (1 <= k <= n, `b[0]` unused), plus the total mass `mu0`.
fn jacobi_recurrence(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let ab = alpha + beta;
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n + 1];
    for (k, ak) in a.iter_mut().enumerate() {
        let kf = k as f64;
        *ak = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
    }
    for (k, bk) in b.iter_mut().enumerate().skip(1) {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab);
        let den = s * s * (s + 1.0) * (s - 1.0);
        *bk = if k == 1 && (ab + 1.0).abs() < 1e-14 {
            // (s - 1) and (k + ab) vanish together when alpha + beta = -1
            (4.0 * (1.0 + alpha) * (1.0 + beta) / (s * s * (s + 1.0))).sqrt()
        } else {
            (num / den).sqrt()
        };
    }
    (a, b, jacobi_mass(alpha, beta))
}

/// `∫ (1-x)^alpha (1+x)^beta dx = 2^{alpha+beta+1} B(alpha+1, beta+1)`.
fn jacobi_mass(alpha: f64, beta: f64) -> f64 {
    let small_int = |v: f64| v.fract() == 0.0 && (0.0..=40.0).contains(&v);
    if small_int(alpha) && small_int(beta) {
        // alpha! beta! / (alpha+beta+1)! as a running product
        let (lo, hi) = if alpha <= beta { (alpha as u32, beta as u32) } else { (beta as u32, alpha as u32) };
        let mut m = 2f64.powi(hi as i32 + 1) / (hi as f64 + 1.0);
        for k in 1..=lo {
            m *= 2.0 * k as f64 / (hi + 1 + k) as f64;
        }
        return m;
    }
    let ab = alpha + beta;
    ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0))
    .exp()
}

/// Evaluates `p_n` and `p_n'` of the orthonormal family and the Christoffel
/// sum `sum_{k<n} p_k^2` at `x`.
fn orthonormal_eval(x: f64, a: &[f64], b: &[f64], mu0: f64) -> (f64, f64, f64) {
    let n = a.len();
    let mut p_prev = 0.0;
    let mut dp_prev = 0.0;
    let mut p = 1.0 / mu0.sqrt();
    let mut dp = 0.0;
    let mut christoffel = 0.0;
    for k in 0..n {
        christoffel += p * p;
        let p_next = ((x - a[k]) * p - b[k] * p_prev) / b[k + 1];
        let dp_next = ((x - a[k]) * dp + p - b[k] * dp_prev) / b[k + 1];
        p_prev = p;
        dp_prev = dp;
        p = p_next;
        dp = dp_next;
    }
    (p, dp, christoffel)
}

/// n-point Gauss-Jacobi rule for the weight `(1-x)^alpha (1+x)^beta`.
///
/// Exact for `weight * q` with `deg q <= 2n - 1`. Panics if `n == 0` or if
/// `alpha, beta <= -1`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> QuadRule {
    assert!(n >= 1, "a Gauss rule needs at least one node");
    assert!(alpha > -1.0 && beta > -1.0, "Jacobi exponents must exceed -1");
    let (a, b, mu0) = jacobi_recurrence(n, alpha, beta);

    let jac = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            a[i]
        } else if i == j + 1 {
            b[i]
        } else if j == i + 1 {
            b[j]
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = if n == 1 {
        vec![a[0]]
    } else {
        jac.self_adjoint_eigenvalues(Side::Lower)
            .expect("tridiagonal eigenvalue iteration failed")
    };

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = orthonormal_eval(*x, &a, &b, mu0);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        let (_, _, chr) = orthonormal_eval(*x, &a, &b, mu0);
        weights.push(1.0 / chr);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| nodes[i].total_cmp(&nodes[j]));
    QuadRule {
        dim: 1,
        nodes: order.iter().map(|&i| [nodes[i], 0.0]).collect(),
        weights: order.iter().map(|&i| weights[i]).collect(),
        exact_degree: 2 * n - 1,
    }
}

/// n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> QuadRule {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Number of Gauss points needed to integrate degree `degree` exactly.
pub fn points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Collapsed-coordinate rule on the reference triangle exact for total degree
/// `order`; the Duffy Jacobian is folded into the weights.
pub fn triangle_rule(order: usize) -> QuadRule {
    let n = points_for_degree(order);
    let gl = gauss_legendre(n);
    let gj = gauss_jacobi(n, 1.0, 0.0);
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (eta, we) in gj.nodes.iter().zip(&gj.weights) {
        let eta = eta[0];
        for (xi, wx) in gl.nodes.iter().zip(&gl.weights) {
            let xi = xi[0];
            nodes.push([0.5 * (1.0 + xi) * (1.0 - eta) - 1.0, eta]);
            weights.push(0.5 * wx * we);
        }
    }
    QuadRule { dim: 2, nodes, weights, exact_degree: 2 * n - 1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral of x^i y^j over the reference triangle, by expanding
    /// `int_{-1}^{-y} x^i dx` and integrating the resulting powers of y.
    fn triangle_monomial(i: u32, j: u32) -> f64 {
        // int_{-1}^{1} y^j [(-y)^{i+1} - (-1)^{i+1}] / (i+1) dy
        let pow_int = |k: u32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        let s = if (i + 1) % 2 == 0 { 1.0 } else { -1.0 };
        (s * pow_int(i + 1 + j) - s * pow_int(j)) / (i as f64 + 1.0)
    }

    #[test]
    fn legendre_small_rules() {
        let r1 = gauss_legendre(1);
        assert_eq!(r1.nodes[0][0], 0.0);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_legendre(2);
        let s = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0][0] + s).abs() < 1e-15);
        assert!((r2.nodes[1][0] - s).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15 && (r2.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_16_odd_and_even_powers() {
        let r = gauss_legendre(16);
        assert!(r.integrate(|x, _| x.powi(31)).abs() < 1e-13);
        let v = r.integrate(|x, _| x.powi(30));
        assert!((v - 2.0 / 31.0).abs() < 1e-13 * (2.0 / 31.0));
        assert_eq!(r.exact_degree, 31);
        assert!(r.nodes.windows(2).all(|w| w[0][0] < w[1][0]));
        assert!(r.nodes.iter().all(|x| x[0] > -1.0 && x[0] < 1.0));
    }

    #[test]
    fn jacobi_reduces_to_legendre() {
        for n in [1, 3, 10, 40] {
            let a = gauss_jacobi(n, 0.0, 0.0);
            let b = gauss_legendre(n);
            for i in 0..n {
                assert!((a.nodes[i][0] - b.nodes[i][0]).abs() < 1e-15);
                assert!((a.weights[i] - b.weights[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn jacobi_one_point_centroid() {
        // moments of (1-x): m0 = 2, m1 = -2/3 -> node -1/3, weight 2
        let r = gauss_jacobi(1, 1.0, 0.0);
        assert!((r.nodes[0][0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_eight_point_weighted_power() {
        // int (1-x) x^14 = 2/15 (odd part vanishes)
        let r = gauss_jacobi(8, 1.0, 0.0);
        let v: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x[0].powi(14)).sum();
        assert!((v - 2.0 / 15.0).abs() < 1e-13 * (2.0 / 15.0));
    }

    #[test]
    fn triangle_area_and_first_moment() {
        let r = triangle_rule(0);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let r = triangle_rule(1);
        assert!((r.integrate(|x, _| x) + 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_order_40_monomials() {
        let r = triangle_rule(40);
        assert!(r.exact_degree >= 40);
        for i in 0..=40u32 {
            for j in 0..=(40 - i) {
                let exact = triangle_monomial(i, j);
                let got = r.integrate(|x, y| x.powi(i as i32) * y.powi(j as i32));
                let scale = r.integrate(|x, y| (x.powi(i as i32) * y.powi(j as i32)).abs());
                assert!(
                    (got - exact).abs() <= 1e-12 * scale.max(exact.abs()),
                    "x^{i} y^{j}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn triangle_nodes_inside_and_weights_positive() {
        for order in [0, 5, 17, 64] {
            let r = triangle_rule(order);
            for (p, w) in r.nodes.iter().zip(&r.weights) {
                assert!(*w > 0.0);
                assert!(p[0] >= -1.0 && p[1] >= -1.0 && p[0] + p[1] <= 1e-15);
            }
        }
    }

    #[test]
    fn jacobi_exactness_sweep() {
        for (n, al, be) in [(5, 1.0, 0.0), (12, 2.0, 1.0), (30, 0.5, 0.0), (100, 1.0, 0.0)] {
            let r = gauss_jacobi(n, al, be);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            // exact moments of (1-x)^al (1+x)^be against (1+x)^k via the Beta function
            for k in 0..=(2 * n - 1).min(40) {
                let kf = k as f64;
                let ln = (al + be + kf + 1.0) * std::f64::consts::LN_2 + ln_gamma(al + 1.0)
                    + ln_gamma(be + kf + 1.0)
                    - ln_gamma(al + be + kf + 2.0);
                let exact = ln.exp();
                let got: f64 =
                    r.nodes.iter().zip(&r.weights).map(|(x, w)| w * (1.0 + x[0]).powi(k as i32)).sum();
                assert!((got - exact).abs() <= 1e-12 * exact, "n={n} k={k}: {got} vs {exact}");
            }
        }
    }
}
