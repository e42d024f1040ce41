//! Dense symmetric linear algebra: SPD solves, the largest eigenpair of a
//! symmetric-definite pencil and symmetric indefinite saddle-point solves.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Result, SatError};

/// Square matrix verified symmetric to `1e-12 ‖A‖` and then symmetrized.
#[derive(Debug, Clone)]
pub struct SymMatrix(Mat<f64>);

impl SymMatrix {
    pub fn new(a: Mat<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(SatError::InvalidArgument(format!(
                "symmetric matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let scale = a.norm_max();
        let mut skew: f64 = 0.0;
        for j in 0..n {
            for i in 0..j {
                skew = skew.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if skew > 1e-12 * scale {
            return Err(SatError::InvalidArgument(format!(
                "matrix is not symmetric: skew {skew:e} against norm {scale:e}"
            )));
        }
        let mut a = a;
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        Ok(Self(a))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Mat::from_fn(n, n, f))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn into_inner(self) -> Mat<f64> {
        self.0
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.order();
        let mut s = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += self.0[(i, j)] * x[i];
            }
            s += col * x[j];
        }
        s
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Cholesky factor of an SPD matrix, reusable across right-hand sides.
pub struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
    a: Mat<f64>,
}

impl SpdFactor {
    pub fn new(a: &SymMatrix, context: &str) -> Result<Self> {
        let llt = a.0.llt(Side::Lower).map_err(|_| SatError::NotPd {
            context: context.to_string(),
        })?;
        Ok(Self { llt, a: a.0.clone() })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Solves `A X = B` with one step of iterative refinement; fails if the
    /// relative residual exceeds `1e-10`.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut x = self.llt.solve(b);
        let r = b - &self.a * &x;
        x += self.llt.solve(&r);
        let bn = b.norm_l2();
        let res = (b - &self.a * &x).norm_l2();
        if !res.is_finite() || res > 1e-10 * bn.max(f64::MIN_POSITIVE) && res > 0.0 {
            return Err(SatError::NotPd {
                context: format!("Cholesky solve residual {res:e} against {bn:e}"),
            });
        }
        Ok(x)
    }

    /// Lower Cholesky factor `L` with `A = L Lᵀ`.
    pub fn l(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: &SymMatrix, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    SpdFactor::new(a, "solve_spd")?.solve(b)
}

/// Largest `λ` with `N v = λ D v`, `D` positive definite; `v` is normalized
/// so that `vᵀ D v = 1`.
pub fn eig_gsym_max(n: &SymMatrix, d: &SymMatrix) -> Result<(f64, Vec<f64>)> {
    let m = n.order();
    if d.order() != m {
        return Err(SatError::InvalidArgument("pencil orders differ".into()));
    }
    let fac = SpdFactor::new(d, "denominator form of the pencil")?;
    let l = fac.l();
    // C = L⁻¹ N L⁻ᵀ
    let mut x = n.0.clone();
    solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = SymMatrix::new(Mat::from_fn(m, m, |i, j| 0.5 * (c[(i, j)] + c[(j, i)])))?;
    let evd = c.0.self_adjoint_eigen(Side::Lower).map_err(|_| SatError::Singular {
        context: "symmetric eigensolver did not converge".into(),
        residual: f64::NAN,
    })?;
    let lam = evd.S()[m - 1];
    let mut v = Mat::from_fn(m, 1, |i, _| evd.U()[(i, m - 1)]);
    solve_upper_triangular_in_place(l.transpose(), v.as_mut(), Par::Seq);
    let mut v: Vec<f64> = (0..m).map(|i| v[(i, 0)]).collect();
    let norm = d.quad_form(&v).sqrt();
    v.iter_mut().for_each(|e| *e /= norm);
    // deterministic sign: largest-magnitude entry positive
    let big = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v.get(big).is_some_and(|&e| e < 0.0) {
        v.iter_mut().for_each(|e| *e = -*e);
    }
    Ok((lam, v))
}

/// Solves the saddle-point system `A x + C μ = f`, `Cᵀ x = g` by a
/// symmetric indefinite factorization of the full KKT matrix.
pub fn solve_kkt(
    a: &SymMatrix,
    c: MatRef<'_, f64>,
    f: &[f64],
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = a.order();
    let k = c.ncols();
    if c.nrows() != m || f.len() != m || g.len() != k {
        return Err(SatError::InvalidArgument("KKT block dimensions disagree".into()));
    }
    let kkt = Mat::from_fn(m + k, m + k, |i, j| match (i < m, j < m) {
        (true, true) => a.0[(i, j)],
        (true, false) => c[(i, j - m)],
        (false, true) => c[(j, i - m)],
        (false, false) => 0.0,
    });
    let rhs = Mat::from_fn(m + k, 1, |i, _| if i < m { f[i] } else { g[i - m] });
    let scale = rhs.norm_l2();
    if scale == 0.0 {
        return Ok((vec![0.0; m], vec![0.0; k]));
    }
    let lblt = kkt.lblt(Side::Lower);
    let mut x = lblt.solve(&rhs);
    for _ in 0..2 {
        let r = &rhs - &kkt * &x;
        x += lblt.solve(&r);
    }
    let res = (&rhs - &kkt * &x).norm_l2() / scale;
    let finite = (0..m + k).all(|i| x[(i, 0)].is_finite());
    if !finite || res > 1e-9 {
        return Err(SatError::Singular {
            context: format!("KKT system of order {}", m + k),
            residual: if finite { res } else { f64::INFINITY },
        });
    }
    Ok(((0..m).map(|i| x[(i, 0)]).collect(), (m..m + k).map(|i| x[(i, 0)]).collect()))
}

/// Orthonormal basis (as columns, `n × (n-1)`) of the complement of `v`,
/// taken from a Householder reflector that maps `e_0` onto `±v / |v|`.
pub fn orthonormal_complement(v: &[f64]) -> Mat<f64> {
    let n = v.len();
    let norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
    let mut u: Vec<f64> = v.iter().map(|e| e / norm).collect();
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign;
    let uu: f64 = u.iter().map(|e| e * e).sum();
    Mat::from_fn(n, n - 1, |i, j| {
        let col = j + 1;
        let id = if i == col { 1.0 } else { 0.0 };
        id - 2.0 * u[i] * u[col] / uu
    })
}
