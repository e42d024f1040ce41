use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satlab_core::basis::poly::{legendre_normalized_all, legendre_normalized_with_derivative};
use satlab_core::oned::*;
use satlab_core::quadrature::gauss_legendre;

const RHO_TOL: f64 = 5e-5;

/// sup over P_{p-1} of ⟨u', ℓ_{p+1}⟩² / ‖u'‖² from a Gram matrix of the
/// lifts, built pointwise with nested quadrature.
fn sup_by_gram(p: usize) -> f64 {
    let outer = gauss_legendre(p + 4);
    let inner = gauss_legendre(p + 3);
    let nq = outer.nodes.len();
    let mut vals = vec![0.0; p + 2];
    let mut ders = vec![0.0; p + 2];
    let mut u = Mat::<f64>::zeros(p, nq);
    let mut a = Mat::<f64>::zeros(p, 1);
    for (q, (x, wx)) in outer.nodes.iter().zip(&outer.weights).enumerate() {
        let x = x[0];
        let h = 0.5 * (1.0 - x);
        for (t, wt) in inner.nodes.iter().zip(&inner.weights) {
            let z = x + h * (t[0] + 1.0);
            legendre_normalized_with_derivative(z, &mut vals, &mut ders);
            for i in 0..p {
                u[(i, q)] -= wt * h * (1.0 - z) * ders[i + 1];
            }
        }
        legendre_normalized_all(x, &mut vals);
        for i in 0..p {
            a[(i, 0)] += wx * u[(i, q)] * vals[p + 1];
        }
    }
    let m = Mat::<f64>::from_fn(p, p, |i, j| {
        (0..nq).map(|q| outer.weights[q] * u[(i, q)] * u[(j, q)]).sum()
    });
    let y = m.partial_piv_lu().solve(&a);
    (0..p).map(|i| a[(i, 0)] * y[(i, 0)]).sum()
}

#[test]
fn reference_values_of_rho_squared() {
    for (p, want) in [(10, 0.5719), (100, 0.9402), (10000, 0.9994)] {
        let got = rho_squared(p).unwrap();
        assert!((got - want).abs() <= RHO_TOL, "p={p}: {got}");
    }
}

#[test]
fn large_degree_is_fast() {
    let t = Instant::now();
    let v = rho_squared(10000).unwrap();
    assert!(v > 0.0 && v < 1.0);
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn fast_path_matches_dense_oracle() {
    for rec in [Recurrence::Lagged, Recurrence::Kernel] {
        for p in 1..=200 {
            let fast = rho_instance(p, rec).unwrap().value;
            let dense = rho_squared_dense_with(p, rec).unwrap();
            assert!((fast - dense).abs() <= 1e-10, "{rec:?} p={p}: {fast} vs {dense}");
        }
    }
}

#[test]
fn kernel_recurrence_matches_direct_supremum() {
    for p in 1..=20 {
        let fast = rho_instance(p, Recurrence::Kernel).unwrap().value;
        let direct = sup_by_gram(p);
        assert!((fast - direct).abs() < 1e-10, "p={p}: {fast} vs {direct}");
    }
    // frozen from the direct supremum
    let k10 = rho_instance(10, Recurrence::Kernel).unwrap().value;
    assert!((k10 - 0.4972057857).abs() < 1e-9);
}

#[test]
fn lagged_values_dominate_kernel_values() {
    for p in 1..=200 {
        let a = rho_instance(p, Recurrence::Lagged).unwrap().value;
        let b = rho_instance(p, Recurrence::Kernel).unwrap().value;
        assert!(a >= b - 1e-14);
    }
}

#[test]
fn strictly_increasing_below_one() {
    for rec in [Recurrence::Lagged, Recurrence::Kernel] {
        let mut prev = 0.0;
        for p in 1..=200 {
            let v = rho_instance(p, rec).unwrap().value;
            assert!(v > prev && v < 1.0, "{rec:?} p={p}");
            prev = v;
        }
    }
}

#[test]
fn sampling_lower_bounds_the_supremum() {
    for p in 1..=30 {
        let s = rho_by_sampling(p, 2000, p as u64).unwrap();
        let kernel = rho_instance(p, Recurrence::Kernel).unwrap().value.sqrt();
        let lagged = rho_squared(p).unwrap().sqrt();
        assert!(s <= kernel + 1e-9, "p={p}: {s} > {kernel}");
        assert!(s <= lagged + 1e-9);
    }
}

#[test]
fn sampling_reaches_the_supremum_at_degree_ten() {
    let s = rho_by_sampling(10, 1_000_000, 42).unwrap();
    let kernel = rho_instance(10, Recurrence::Kernel).unwrap().value.sqrt();
    assert!((s - kernel).abs() < 1e-3, "{s} vs {kernel}");
}

#[test]
fn extremizer_reproduces_rho() {
    for p in [1, 2, 5, 10, 20] {
        let c = extremal_phi(p).unwrap();
        let q = raw_quotient(&c);
        let want = rho_instance(p, Recurrence::Kernel).unwrap().value;
        assert!((q.sqrt() - want.sqrt()).abs() < 1e-8, "p={p}");
    }
}

#[test]
fn d_frame_reconstructs_the_weighted_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = 15;
    let c: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d = apply_t(&c);
    let mut vals = vec![0.0; p + 2];
    let mut ders = vec![0.0; p + 2];
    for k in 0..50 {
        let x = -1.0 + 2.0 * k as f64 / 49.0;
        legendre_normalized_with_derivative(x, &mut vals, &mut ders);
        let phi: f64 = (1..=p).map(|i| c[i - 1] * ders[i]).sum();
        let recon: f64 = (1..=p + 1).map(|i| d[i - 1] * ders[i]).sum();
        assert!(((1.0 - x) * phi - recon).abs() < 1e-11, "x={x}");
    }
}

/// ‖w'‖ for -w'' = f, w(±1) = 0: w' = c - F, F = ∫_{-1}^x f, c = mean of F.
fn exact_energy(f: &[f64]) -> f64 {
    let q = gauss_legendre(f.len() + 4);
    let inner = gauss_legendre(f.len() + 2);
    let mut vals = vec![0.0; f.len().max(1)];
    let big_f = |x: f64, vals: &mut [f64]| {
        let h = 0.5 * (x + 1.0);
        inner
            .nodes
            .iter()
            .zip(&inner.weights)
            .map(|(t, w)| {
                legendre_normalized_all(-1.0 + h * (t[0] + 1.0), vals);
                w * h * f.iter().zip(vals.iter()).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
    };
    let fs: Vec<f64> = q.nodes.iter().map(|x| big_f(x[0], &mut vals)).collect();
    let mean = fs.iter().zip(&q.weights).map(|(a, w)| a * w).sum::<f64>() / 2.0;
    fs.iter().zip(&q.weights).map(|(a, w)| w * (a - mean).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn element_indicator_is_fully_saturated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (p, reps) in [(3, 5), (10, 50)] {
        for _ in 0..reps {
            let f: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = element_saturation_ratio(p, &f).unwrap();
            assert!((r - 1.0).abs() <= 1e-9, "p={p}: {r}");
            assert!(exact_energy(&f) > 0.0);
        }
    }
}

#[test]
fn element_ratio_uses_the_exact_dual_norm() {
    // with f of degree p - 1, P_{p+1} captures the whole dual norm, while
    // P_p does not; compare the exact energy against a coarser ratio
    let f = [0.3, -0.2, 0.5, 0.1];
    let e = exact_energy(&f);
    let r_coarse = element_saturation_ratio(5, &f).unwrap();
    assert!((r_coarse - 1.0).abs() < 1e-12);
    assert!(e > 0.1);
}

#[test]
fn point_functional_needs_no_extra_degree() {
    for n in 1..=20 {
        assert!((point_functional_ratio(n).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn rho_squared_in_unit_interval(p in 1usize..5000) {
        let v = rho_squared(p).unwrap();
        prop_assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn t_inverse_roundtrip(c in proptest::collection::vec(-1.0f64..1.0, 1..40)) {
        let back = solve_t(&apply_t(&c));
        for (a, b) in back.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
