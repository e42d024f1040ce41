//! Saturation in one dimension.
//!
//! For `φ ∈ P_{p-1}(-1, 1)` let `u' = ∫_1^x (1 - z) φ(z) dz`. Then
//! `ρ_p = sup_φ |⟨u', ℓ_{p+1}⟩| / ‖u'‖`, with `ℓ_n` the `L²(-1, 1)`-normalized
//! Legendre polynomials, governs saturation of the star indicator with one
//! extra degree. Writing `φ = Σ c_i ℓ'_i` gives `(1 - x) φ = Σ d_i ℓ'_i` with
//! `d = T c`, and `ρ²_p` becomes a constrained quadratic minimization over
//! `d ⊥ v`, `v` spanning `ker Tᵀ`.
//!
//! Two recurrences for `v` are offered. [`Recurrence::Lagged`] (the default)
//! uses `v_i = α_{i-1}⁻¹ (v_{i-1} - β_{i-2} v_{i-2})`, giving the reference
//! values 0.5719, 0.9402, 0.9994 at p = 10, 100, 10000. [`Recurrence::Kernel`]
//! uses `β_{i-1}`, which is the one that actually annihilates `Tᵀ`; its values
//! agree with a direct evaluation of the supremum and are smaller.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::poly::{legendre_normalized_all, legendre_normalized_with_derivative};
use crate::densela::{solve_kkt, SymMatrix};
use crate::error::{Result, SatError};
use crate::quadrature::gauss_legendre;

/// Largest `p` accepted by the dense oracle.
pub const DENSE_MAX_P: usize = 2000;
/// Largest `p` accepted by the sampling oracle.
pub const SAMPLING_MAX_P: usize = 30;

/// Which three-term recurrence generates the constraint vector `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recurrence {
    /// `β_{i-2}` in the last term; the default.
    #[default]
    Lagged,
    /// `β_{i-1}` in the last term; `Tᵀ v = 0` exactly.
    Kernel,
}

impl std::str::FromStr for Recurrence {
    type Err = SatError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lagged" => Ok(Self::Lagged),
            "kernel" => Ok(Self::Kernel),
            _ => Err(SatError::InvalidArgument(format!("unknown recurrence '{s}'"))),
        }
    }
}

pub fn alpha(i: usize) -> f64 {
    let f = i as f64;
    f * (2.0 * f + 1.0).sqrt() / ((2.0 * f + 1.0) * (2.0 * f + 3.0).sqrt())
}

/// Defined for `i ≥ 1`.
pub fn beta(i: usize) -> f64 {
    let f = i as f64;
    (f + 1.0) * (2.0 * f + 1.0).sqrt() / ((2.0 * f + 1.0) * (2.0 * f - 1.0).sqrt())
}

/// All data of one `ρ²_p` evaluation.
#[derive(Debug, Clone)]
pub struct RhoInstance {
    pub p: usize,
    pub recurrence: Recurrence,
    /// `α_1..α_p`.
    pub alpha: Vec<f64>,
    /// `β_1..β_p`.
    pub beta: Vec<f64>,
    /// `v_1..v_{p+1}`.
    pub v: Vec<f64>,
    /// `√(2i+1)`, `i = 1..p`.
    pub g: Vec<f64>,
    /// Minimizer `e = (d_1..d_p)` with `d_{p+1} = 1`.
    pub e: Vec<f64>,
    pub lambda: f64,
    pub value: f64,
}

impl RhoInstance {
    pub fn w(&self) -> &[f64] {
        &self.v[..self.p]
    }
}

/// `v_1..v_{p+1}`.
pub fn constraint_vector(p: usize, rec: Recurrence) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(p + 1);
    v.push(1.0);
    if p >= 1 {
        v.push(1.0 / alpha(1));
    }
    for i in 3..=p + 1 {
        let b = match rec {
            Recurrence::Lagged => beta(i - 2),
            Recurrence::Kernel => beta(i - 1),
        };
        let next = (v[i - 2] - b * v[i - 3]) / alpha(i - 1);
        if !next.is_finite() {
            return Err(SatError::Overflow(format!("v_{i} of the ρ² recurrence")));
        }
        v.push(next);
    }
    Ok(v)
}

/// Neumaier-compensated dot product.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let t = x * y;
        let u = s + t;
        c += if s.abs() >= t.abs() { (s - u) + t } else { (t - u) + s };
        s = u;
    }
    s + c
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(SatError::InvalidArgument("p must be at least 1".into()));
    }
    Ok(())
}

/// `ρ²_p` in `O(p)` with the lagged recurrence.
pub fn rho_squared(p: usize) -> Result<f64> {
    Ok(rho_instance(p, Recurrence::Lagged)?.value)
}

/// `ρ²_p` in `O(p)` via Sherman–Morrison for `(I + g gᵀ)⁻¹`.
pub fn rho_instance(p: usize, rec: Recurrence) -> Result<RhoInstance> {
    check_p(p)?;
    let v = constraint_vector(p, rec)?;
    let g: Vec<f64> = (1..=p).map(|i| ((2 * i + 1) as f64).sqrt()).collect();
    let w = &v[..p];
    let gg = 1.0 + dot(&g, &g);
    let apply = |x: &[f64]| -> Vec<f64> {
        let s = dot(&g, x) / gg;
        x.iter().zip(&g).map(|(xi, gi)| xi - s * gi).collect()
    };
    let aw = apply(w);
    let ag = apply(&g);
    let s = ((2 * p + 3) as f64).sqrt();
    let lambda = (v[p] - s * dot(w, &ag)) / dot(w, &aw);
    let e: Vec<f64> = ag.iter().zip(&aw).map(|(b, a)| -(s * b + lambda * a)).collect();
    // the quotient's denominator at d = (e, 1), a sum of squares; the
    // shorter closed form 2p+4 + s gᵀe + λ v_{p+1} cancels badly
    let ge = dot(&g, &e) + s;
    let value = 1.0 / (dot(&e, &e) + 1.0 + ge * ge);
    Ok(RhoInstance {
        p,
        recurrence: rec,
        alpha: (1..=p).map(alpha).collect(),
        beta: (1..=p).map(beta).collect(),
        v,
        g,
        e,
        lambda,
        value,
    })
}

/// `ρ²_p` from the dense `(p+1)`-order saddle-point system.
pub fn rho_squared_dense(p: usize) -> Result<f64> {
    rho_squared_dense_with(p, Recurrence::Lagged)
}

pub fn rho_squared_dense_with(p: usize, rec: Recurrence) -> Result<f64> {
    check_p(p)?;
    if p > DENSE_MAX_P {
        return Err(SatError::MemoryGuard { requested: p, cap: DENSE_MAX_P });
    }
    let v = constraint_vector(p, rec)?;
    let g: Vec<f64> = (1..=p).map(|i| ((2 * i + 1) as f64).sqrt()).collect();
    let a = SymMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { 0.0 } + g[i] * g[j])?;
    let c = Mat::from_fn(p, 1, |i, _| v[i]);
    let s = ((2 * p + 3) as f64).sqrt();
    let f: Vec<f64> = g.iter().map(|gi| -s * gi).collect();
    let (e, _) = solve_kkt(&a, c.as_ref(), &f, &[-v[p]])?;
    let ge: f64 = g.iter().zip(&e).map(|(x, y)| x * y).sum();
    let ee: f64 = e.iter().map(|x| x * x).sum();
    Ok(1.0 / (ee + 1.0 + (ge + s) * (ge + s)))
}

/// `T ∈ R^{(p+1)×p}` with `(1 - x) Σ c_i ℓ'_i = Σ (T c)_i ℓ'_i`.
pub fn t_matrix(p: usize) -> Mat<f64> {
    Mat::from_fn(p + 1, p, |r, c| {
        let (i, col) = (r + 1, c + 1);
        if i == col {
            1.0
        } else if i == col + 1 {
            -alpha(col)
        } else if i + 1 == col {
            -beta(col)
        } else {
            0.0
        }
    })
}

/// `d = T c` in `O(p)`.
pub fn apply_t(c: &[f64]) -> Vec<f64> {
    let p = c.len();
    (1..=p + 1)
        .map(|i| {
            let mut d = 0.0;
            if i <= p {
                d += c[i - 1];
            }
            if i >= 2 {
                d -= alpha(i - 1) * c[i - 2];
            }
            if i < p {
                d -= beta(i + 1) * c[i];
            }
            d
        })
        .collect()
}

/// Inverse of [`apply_t`] on `ran T`, by back substitution from `d_{p+1}`.
pub fn solve_t(d: &[f64]) -> Vec<f64> {
    let p = d.len() - 1;
    let mut c = vec![0.0; p + 1];
    // c has a spare slot at index p for c_{p+1} = 0
    for i in (1..=p).rev() {
        let next = if i < p { c[i] } else { 0.0 };
        let next2 = if i + 1 < p { c[i + 1] } else { 0.0 };
        let b = if i + 1 < p { beta(i + 2) } else { 0.0 };
        // row i+1: d_{i+1} = c_{i+1} - α_i c_i - β_{i+2} c_{i+2}
        c[i - 1] = (next - b * next2 - d[i]) / alpha(i);
    }
    c.truncate(p);
    c
}

/// `d_{p+1}² / (Σ d_i² + (Σ √(2i+1) d_i)²)`: `ρ²`'s quotient in the `d` frame.
pub fn quotient_from_d(d: &[f64]) -> f64 {
    let n = d.len();
    let s: f64 = d.iter().map(|x| x * x).sum();
    let t: f64 = d.iter().enumerate().map(|(i, x)| ((2 * i + 3) as f64).sqrt() * x).sum();
    let den = s + t * t;
    if den == 0.0 {
        0.0
    } else {
        d[n - 1] * d[n - 1] / den
    }
}

/// `⟨u', ℓ_{p+1}⟩² / ‖u'‖²` evaluated by quadrature from `φ = Σ c_i ℓ'_i`
/// with no use of the `d` frame.
pub fn raw_quotient(c: &[f64]) -> f64 {
    let p = c.len();
    let outer = gauss_legendre(p + 3);
    let inner = gauss_legendre(p + 2);
    let mut vals = vec![0.0; p + 2];
    let mut ders = vec![0.0; p + 2];
    let phi = |z: f64, vals: &mut [f64], ders: &mut [f64]| {
        legendre_normalized_with_derivative(z, vals, ders);
        (1..=p).map(|i| c[i - 1] * ders[i]).sum::<f64>()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (x, wx) in outer.nodes.iter().zip(&outer.weights) {
        let x = x[0];
        // u'(x) = -∫_x^1 (1 - z) φ(z) dz
        let h = 0.5 * (1.0 - x);
        let mut up = 0.0;
        for (t, wt) in inner.nodes.iter().zip(&inner.weights) {
            let z = x + h * (t[0] + 1.0);
            up -= wt * h * (1.0 - z) * phi(z, &mut vals, &mut ders);
        }
        legendre_normalized_all(x, &mut vals);
        num += wx * up * vals[p + 1];
        den += wx * up * up;
    }
    if den == 0.0 {
        0.0
    } else {
        num * num / den
    }
}

/// `φ` coefficients (in `ℓ'_1..ℓ'_p`) of the extremizer from the fast path.
/// Only meaningful for [`Recurrence::Kernel`], where `(e, 1) ∈ ran T`.
pub fn extremal_phi(p: usize) -> Result<Vec<f64>> {
    let inst = rho_instance(p, Recurrence::Kernel)?;
    let mut d = inst.e.clone();
    d.push(1.0);
    Ok(solve_t(&d))
}

/// Lower bound for `ρ_p` (not squared) from random `φ`, polished by
/// gradient ascent on the quotient.
pub fn rho_by_sampling(p: usize, n_samples: usize, seed: u64) -> Result<f64> {
    check_p(p)?;
    if p > SAMPLING_MAX_P {
        return Err(SatError::InvalidArgument(format!("sampling needs p ≤ {SAMPLING_MAX_P}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::NEG_INFINITY, vec![0.0; p]);
    let mut c = vec![0.0; p];
    for _ in 0..n_samples.max(1) {
        c.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let q = quotient_from_d(&apply_t(&c));
        if q > best.0 {
            best = (q, c.clone());
        }
    }
    let (mut q, mut c) = best;
    let mut step = 1.0;
    for _ in 0..2000 {
        let grad = quotient_gradient(&c);
        let gn = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn < 1e-15 {
            break;
        }
        loop {
            let trial: Vec<f64> = c.iter().zip(&grad).map(|(x, g)| x + step * g / gn).collect();
            let qt = quotient_from_d(&apply_t(&trial));
            if qt > q {
                q = qt;
                // the quotient is scale invariant; keep c normalized
                let n = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
                c = trial.iter().map(|x| x / n).collect();
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
        if step < 1e-14 {
            break;
        }
    }
    Ok(q.sqrt())
}

fn quotient_gradient(c: &[f64]) -> Vec<f64> {
    let d = apply_t(c);
    let n = d.len();
    let t: f64 = d.iter().enumerate().map(|(i, x)| ((2 * i + 3) as f64).sqrt() * x).sum();
    let den: f64 = d.iter().map(|x| x * x).sum::<f64>() + t * t;
    let num = d[n - 1] * d[n - 1];
    // ∂/∂d of num/den, then Tᵀ
    let gd: Vec<f64> = (0..n)
        .map(|i| {
            let hd = d[i] + ((2 * i + 3) as f64).sqrt() * t;
            let dn = if i == n - 1 { 2.0 * d[i] } else { 0.0 };
            (dn * den - num * 2.0 * hd) / (den * den)
        })
        .collect();
    let p = c.len();
    (1..=p)
        .map(|j| {
            let mut s = gd[j - 1];
            s -= alpha(j) * gd[j];
            if j >= 2 {
                s -= beta(j) * gd[j - 2];
            }
            s
        })
        .collect()
}

/// `b_k = ∫_{-1}^x ℓ_{k-1}` for `k = 1..n`, written to `out[k-1]`.
fn integrated_legendre(x: f64, n: usize, scratch: &mut [f64], out: &mut [f64]) {
    legendre_normalized_all(x, &mut scratch[..n + 1]);
    let c = |m: usize| ((2 * m + 1) as f64 / 2.0).sqrt();
    for k in 1..=n {
        out[k - 1] = if k == 1 {
            c(0) * (x + 1.0)
        } else {
            let (lk, lk2) = (scratch[k] / c(k), scratch[k - 2] / c(k - 2));
            c(k - 1) * (lk - lk2) / (2 * k - 1) as f64
        };
    }
}

/// `‖r‖_{H⁻¹(T)} / ‖r‖_{(H¹₀(T) ∩ P_{p+1})'}` for `r = v ↦ ∫_T f v` on
/// `T = (-1, 1)`, `f` given by `L²`-normalized Legendre coefficients of
/// degree at most `p - 1`.
pub fn element_saturation_ratio(p: usize, f: &[f64]) -> Result<f64> {
    check_p(p)?;
    if f.len() > p {
        return Err(SatError::InvalidArgument(format!("f must have degree ≤ {}", p - 1)));
    }
    // the bubbles b_k, k ≥ 2, have orthonormal derivatives, so the energy of
    // the Galerkin solution is the sum of squared loads
    let n = 2 * p + 8;
    let q = gauss_legendre(n + p / 2 + 2);
    let mut scratch = vec![0.0; n + 2];
    let mut b = vec![0.0; n];
    let mut loads = vec![0.0; n + 1];
    for (x, w) in q.nodes.iter().zip(&q.weights) {
        legendre_normalized_all(x[0], &mut scratch[..p.max(1)]);
        let fx: f64 = f.iter().zip(&scratch).map(|(a, l)| a * l).sum();
        integrated_legendre(x[0], n, &mut scratch, &mut b);
        for k in 2..=n {
            loads[k] += w * fx * b[k - 1];
        }
    }
    let full: f64 = loads[2..=n].iter().map(|x| x * x).sum();
    let disc: f64 = loads[2..=p + 1].iter().map(|x| x * x).sum();
    if full == 0.0 {
        return Ok(1.0);
    }
    Ok((full / disc).sqrt())
}

/// `‖v ↦ v(1)‖` on `H¹_{0,{-1}}(-1, 1)` over its restriction to `P_n`; the
/// exact Riesz lift is `x + 1`.
pub fn point_functional_ratio(n: usize) -> Result<f64> {
    check_p(n)?;
    let mut scratch = vec![0.0; n + 2];
    let mut b = vec![0.0; n];
    integrated_legendre(1.0, n, &mut scratch, &mut b);
    let disc: f64 = b.iter().map(|x| x * x).sum();
    Ok((2.0 / disc).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recurrence_coefficients() {
        assert!((alpha(1) - 1.0 / 5f64.sqrt() / 3f64.sqrt()).abs() < 1e-15);
        assert!((beta(1) - 2.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kernel_recurrence_annihilates_t_transpose() {
        let p = 12;
        let v = constraint_vector(p, Recurrence::Kernel).unwrap();
        let t = t_matrix(p);
        for j in 0..p {
            let s: f64 = (0..=p).map(|i| t[(i, j)] * v[i]).sum();
            assert!(s.abs() < 1e-12 * v[p].abs());
        }
        let v = constraint_vector(p, Recurrence::Lagged).unwrap();
        let worst = (0..p)
            .map(|j| (0..=p).map(|i| t[(i, j)] * v[i]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
    }

    #[test]
    fn apply_and_solve_t_roundtrip() {
        let c: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = apply_t(&c);
        let t = t_matrix(9);
        for i in 0..10 {
            let s: f64 = (0..9).map(|j| t[(i, j)] * c[j]).sum();
            assert!((s - d[i]).abs() < 1e-14);
        }
        let back = solve_t(&d);
        for (a, b) in back.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn p1_closed_form() {
        // φ = 1: u' = -(1-x)²/2, ⟨u', ℓ_2⟩² = 2/45, ‖u'‖² = 8/5
        assert!((rho_squared(1).unwrap() - 1.0 / 36.0).abs() < 1e-14);
        assert!((raw_quotient(&[1.0]) - 1.0 / 36.0).abs() < 1e-14);
    }

    #[test]
    fn zero_element_residual_has_unit_ratio() {
        assert_eq!(element_saturation_ratio(3, &[0.0, 0.0]).unwrap(), 1.0);
        assert!(element_saturation_ratio(3, &[0.0; 4]).is_err());
    }

    #[test]
    fn dense_guard() {
        assert!(matches!(rho_squared_dense(DENSE_MAX_P + 1), Err(SatError::MemoryGuard { .. })));
    }
}
