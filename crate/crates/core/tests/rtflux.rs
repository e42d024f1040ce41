use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satlab_core::basis::dubiner::{dim_p, DubinerEval};
use satlab_core::basis::ref_edge_lengths;
use satlab_core::reftri::{galerkin_energy, ProblemId};
use satlab_core::rtflux::{min_flux, min_flux_p1, min_flux_p2, min_flux_p3, EdgeData, RTSpace};
use satlab_core::quadrature::triangle_rule;

const RELIABLE_TOL: f64 = 1e-8;

#[test]
fn dimension_and_onto_divergence() {
    for p in 0..=8 {
        let rt = RTSpace::reference(p).unwrap();
        assert_eq!(rt.dim(), (p + 1) * (p + 3));
        assert_eq!(rt.divergence_rank(), dim_p(p));
        assert!(rt.condition().is_finite());
    }
}

#[test]
fn curls_of_higher_polynomials_lie_in_rt_and_are_solenoidal() {
    for p in 1..=6 {
        let rt = RTSpace::reference(p).unwrap();
        let nw = dim_p(p + 1);
        let mut dub = DubinerEval::new(p + 1);
        let (mut v, mut g) = (vec![0.0; nw], vec![[0.0; 2]; nw]);
        let mut coeffs = Vec::new();
        for j in 1..nw {
            let c = rt.dofs_of(p, |x, y| {
                dub.values_grads(x, y, &mut v, &mut g);
                [g[j][1], -g[j][0]]
            });
            // reconstruction matches the curl pointwise and is divergence free
            let mut ev = rt.evaluator();
            let q = triangle_rule(2 * p + 2);
            let (mut err, mut div2) = (0.0, 0.0);
            for (n, w) in q.nodes.iter().zip(&q.weights) {
                let (f, d) = ev.field(&c, n[0], n[1]);
                dub.values_grads(n[0], n[1], &mut v, &mut g);
                err += w * ((f[0] - g[j][1]).powi(2) + (f[1] + g[j][0]).powi(2));
                div2 += w * d * d;
            }
            assert!(err.sqrt() < 1e-10, "p={p} j={j}: {err:e}");
            assert!(div2.sqrt() < 1e-12 * (1.0 + j as f64), "p={p} j={j}: {div2:e}");
            // zero total flux through the boundary
            let l = ref_edge_lengths();
            let total: f64 = (0..3).map(|e| c[rt.edge_dof(e, 0)] * l[e].sqrt()).sum();
            assert!(total.abs() < 1e-10);
            coeffs.push(c);
        }
        let m = faer::Mat::from_fn(rt.dim(), coeffs.len(), |i, j| coeffs[j][i]);
        let sv = m.singular_values().unwrap();
        let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
        assert_eq!(rank, nw - 1);
    }
}

#[test]
fn zero_sources_give_zero_flux() {
    assert_eq!(min_flux_p1(3, &vec![0.0; dim_p(2)]).unwrap().norm, 0.0);
    assert_eq!(min_flux_p2(3, &[0.0; 4]).unwrap().norm, 0.0);
    let z: EdgeData = [vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]];
    assert_eq!(min_flux_p3(3, &z).unwrap().norm, 0.0);
}

#[test]
fn p1_constant_source_bounds_overkill_energy() {
    // φ = 1 is √2 times the unit Dubiner constant
    let phi = [2f64.sqrt()];
    let sol = min_flux_p1(1, &phi).unwrap();
    let e = galerkin_energy(ProblemId::P1, 1, 40).unwrap();
    assert!(sol.div_residual < 1e-10);
    assert!(sol.norm * sol.norm >= e.quad_form(&phi) - RELIABLE_TOL);
}

#[test]
fn p2_random_sources_bound_overkill_energy() {
    let p = 4;
    let e = galerkin_energy(ProblemId::P2, p, 40).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let phi: Vec<f64> = (0..=p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = min_flux_p2(p, &phi).unwrap();
        let lower = e.quad_form(&phi);
        assert!(sol.norm * sol.norm >= lower - RELIABLE_TOL);
        assert!(sol.norm / lower.sqrt() <= 10.0);
        assert!(sol.trace_residual < 1e-10);
    }
}

#[test]
fn p3_two_edge_datum() {
    let c = 0.7;
    let l = ref_edge_lengths();
    // coefficients of a constant in the orthonormal edge basis carry √|e|
    let phi: EdgeData = [
        vec![c * l[0].sqrt(), 0.0, 0.0],
        vec![-c * l[0] / l[1] * l[1].sqrt(), 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ];
    let sol = min_flux_p3(2, &phi).unwrap();
    assert!(sol.norm.is_finite() && sol.norm > 0.0);
    assert!(sol.trace_residual < 1e-10);
}

#[test]
fn all_problems_bound_overkill_energies() {
    let p = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for problem in ProblemId::ALL {
        let e = galerkin_energy(problem, p, 40).unwrap();
        for _ in 0..5 {
            let phi: Vec<f64> = (0..problem.source_dim(p)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sol = min_flux(problem, p, &phi).unwrap();
            assert!(sol.norm * sol.norm >= e.quad_form(&phi) - RELIABLE_TOL, "{problem}");
        }
    }
}
