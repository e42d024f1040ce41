//! Univariate orthogonal polynomials and their homogeneous ("scaled") forms.

/// `L2(-1, 1)`-normalized Legendre polynomial `l_n(x)` by the three-term
/// recurrence.
pub fn legendre_normalized(n: usize, x: f64) -> f64 {
    let mut out = vec![0.0; n + 1];
    legendre_normalized_all(x, &mut out);
    out[n]
}

/// Fills `out[k] = l_k(x)` for `k < out.len()`.
pub fn legendre_normalized_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    // plain Legendre, then scale
    let mut p_prev = 0.0;
    let mut p = 1.0;
    for (k, o) in out.iter_mut().enumerate() {
        *o = p * ((2 * k + 1) as f64 / 2.0).sqrt();
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
    }
}

/// Fills values and first derivatives of `l_k`, `k < vals.len()`.
pub fn legendre_normalized_with_derivative(x: f64, vals: &mut [f64], ders: &mut [f64]) {
    let n = vals.len();
    let mut p_prev = 0.0;
    let mut dp_prev = 0.0;
    let mut p = 1.0;
    let mut dp = 0.0;
    for k in 0..n {
        let c = ((2 * k + 1) as f64 / 2.0).sqrt();
        vals[k] = p * c;
        ders[k] = dp * c;
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dnext = ((2.0 * kf + 1.0) * (p + x * dp) - kf * dp_prev) / (kf + 1.0);
        p_prev = p;
        p = next;
        dp_prev = dp;
        dp = dnext;
    }
}

/// Values and partial derivatives of the homogeneous Jacobi polynomials
/// `S_k(t, s) = s^k P_k^{(a,b)}(t / s)` for `k < vals.len()`.
///
/// With `s = 1` these are the ordinary Jacobi polynomials. The recurrence
/// never divides by `s`, so `s = 0` is fine.
pub fn scaled_jacobi(
    a: f64,
    b: f64,
    t: f64,
    s: f64,
    vals: &mut [f64],
    d_t: &mut [f64],
    d_s: &mut [f64],
) {
    let n = vals.len();
    if n == 0 {
        return;
    }
    vals[0] = 1.0;
    d_t[0] = 0.0;
    d_s[0] = 0.0;
    if n == 1 {
        return;
    }
    vals[1] = 0.5 * ((a - b) * s + (a + b + 2.0) * t);
    d_t[1] = 0.5 * (a + b + 2.0);
    d_s[1] = 0.5 * (a - b);
    let ab = a + b;
    for k in 2..n {
        let kf = k as f64;
        let c1 = 2.0 * kf * (kf + ab) * (2.0 * kf + ab - 2.0);
        let c2 = (2.0 * kf + ab - 1.0) * (2.0 * kf + ab) * (2.0 * kf + ab - 2.0);
        let c3 = (2.0 * kf + ab - 1.0) * (a * a - b * b);
        let c4 = 2.0 * (kf + a - 1.0) * (kf + b - 1.0) * (2.0 * kf + ab);
        let lin = c2 * t + c3 * s;
        vals[k] = (lin * vals[k - 1] - c4 * s * s * vals[k - 2]) / c1;
        d_t[k] = (c2 * vals[k - 1] + lin * d_t[k - 1] - c4 * s * s * d_t[k - 2]) / c1;
        d_s[k] = (c3 * vals[k - 1] + lin * d_s[k - 1]
            - c4 * (2.0 * s * vals[k - 2] + s * s * d_s[k - 2]))
            / c1;
    }
}

/// Ordinary Jacobi polynomials `P_k^{(a,b)}(x)` and derivatives.
pub fn jacobi_with_derivative(a: f64, b: f64, x: f64, vals: &mut [f64], ders: &mut [f64]) {
    let mut ds = vec![0.0; vals.len()];
    scaled_jacobi(a, b, x, 1.0, vals, ders, &mut ds);
}
