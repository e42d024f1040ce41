use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satlab_core::hpafem::*;

fn sine_source() -> Source {
    Source::from_fn("sine", 20, |x, y| 8.0 * (2.0 * x).sin() * (3.0 * y + 0.5).cos())
}

#[test]
fn doerfler_examples() {
    assert_eq!(doerfler_mark(&[3.0, 2.0, 1.0], 0.6f64.sqrt()).unwrap(), vec![0]);
    assert_eq!(doerfler_mark(&[1.0; 4], 0.5f64.sqrt()).unwrap(), vec![0, 1]);
    assert_eq!(doerfler_mark(&[0.5, 0.0, 2.0, 1.0], 1.0).unwrap(), vec![2, 3, 0]);
    assert_eq!(doerfler_mark(&[1.0, 3.0, 3.0], 0.5).unwrap(), vec![1]);
    assert!(doerfler_mark(&[1.0], 0.0).is_err());
    assert!(doerfler_mark(&[1.0], 1.5).is_err());
}

#[test]
fn q_rules() {
    assert_eq!("ceil:1".parse::<QRule>().unwrap().increment(4), 4);
    assert_eq!("ceil:0.5".parse::<QRule>().unwrap().increment(3), 2);
    assert_eq!("ceil:0.5".parse::<QRule>().unwrap().increment(4), 2);
    assert_eq!("const:4".parse::<QRule>().unwrap().increment(12), 4);
    for bad in ["ceil", "ceil:-1", "const:x", "lin:2"] {
        assert!(bad.parse::<QRule>().is_err(), "{bad}");
    }
    assert_eq!(QRule::Linear(0.5).to_string().parse::<QRule>().unwrap(), QRule::Linear(0.5));
}

#[test]
fn enrichment_examples() {
    let mesh = HpMesh::crossed_square(4).unwrap();
    let up = enrich(&mesh, &[4], QRule::Linear(1.0)).unwrap();
    assert_eq!(up.degrees(), &[8, 8, 8, 8]);

    let mesh = HpMesh::crossed_square(12).unwrap();
    let up = enrich(&mesh, &[0], QRule::Constant(4)).unwrap();
    // vertex 0 touches triangles 0 and 3
    assert_eq!(up.degrees(), &[16, 12, 12, 16]);

    let up = enrich(&mesh, &[], QRule::Constant(4)).unwrap();
    assert_eq!(up.degrees(), mesh.degrees());
    assert!(enrich(&mesh, &[5], QRule::Constant(1)).is_err());
}

#[test]
fn enrichment_uses_pre_enrichment_degrees() {
    let mesh = HpMesh::unit_square(2, 2).unwrap();
    let mut deg = mesh.degrees().to_vec();
    deg[0] = 5;
    let mesh = mesh.with_degrees(deg).unwrap();
    let a = mesh.triangles()[0][0];
    let b = (0..mesh.n_vertices()).find(|&v| v != a && !StarPatch::new(&mesh, v).triangles.contains(&0)).unwrap();
    let up = enrich(&mesh, &[b, a], QRule::Constant(1)).unwrap();
    for &t in &StarPatch::new(&mesh, b).triangles {
        assert_eq!(up.degree(t), 3);
    }
    for &t in &StarPatch::new(&mesh, a).triangles {
        assert!(up.degree(t) >= 6);
    }
}

#[test]
fn zero_source_gives_zero_solution() {
    let mesh = HpMesh::unit_square(2, 3).unwrap();
    let u = solve_hp(&mesh, &Source::constant(0.0)).unwrap();
    assert!(u.coeffs.iter().all(|c| c.abs() < 1e-14));
    assert_eq!(u.energy, 0.0);
    assert!(estimate(&u, &Source::constant(0.0)).unwrap().iter().all(|e| e.eta == 0.0));
}

#[test]
fn energy_grows_with_degree() {
    let f = sine_source();
    let mut prev = 0.0;
    for p in 1..=8 {
        let u = solve_hp(&HpMesh::unit_square(1, p).unwrap(), &f).unwrap();
        assert!(u.energy >= prev - 1e-14, "p={p}");
        prev = u.energy;
    }
}

#[test]
fn oscillation_examples() {
    let x = Source::parse("poly:x").unwrap();
    assert_eq!(oscillation(&HpMesh::unit_square(2, 1).unwrap(), &Source::constant(3.0)), 0.0);
    assert!(oscillation(&HpMesh::unit_square(2, 1).unwrap(), &x) > 1e-3);
    assert_eq!(oscillation(&HpMesh::unit_square(2, 2).unwrap(), &x), 0.0);
    let s = sine_source();
    let o2 = oscillation(&HpMesh::unit_square(2, 2).unwrap(), &s);
    let o6 = oscillation(&HpMesh::unit_square(2, 6).unwrap(), &s);
    assert!(o6 < 1e-2 * o2);
}

#[test]
fn hats_form_a_partition_of_unity() {
    let mesh = HpMesh::unit_square(3, 1).unwrap();
    let patches: Vec<StarPatch> = (0..mesh.n_vertices()).map(|a| StarPatch::new(&mesh, a)).collect();
    let mut count = vec![0; mesh.n_triangles()];
    for p in &patches {
        for &t in &p.triangles {
            count[t] += 1;
        }
    }
    assert!(count.iter().all(|&c| c == 3));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let t = rng.gen_range(0..mesh.n_triangles());
        let (mut l0, mut l1): (f64, f64) = (rng.gen(), rng.gen());
        if l0 + l1 > 1.0 {
            (l0, l1) = (1.0 - l0, 1.0 - l1);
        }
        let v = mesh.triangles()[t].map(|i| mesh.vertices()[i]);
        let x = l0 * v[0][0] + l1 * v[1][0] + (1.0 - l0 - l1) * v[2][0];
        let y = l0 * v[0][1] + l1 * v[1][1] + (1.0 - l0 - l1) * v[2][1];
        let s: f64 = patches.iter().filter(|p| p.triangles.contains(&t)).map(|p| p.hat(&mesh, t, x, y)).sum();
        assert!((s - 1.0).abs() < 1e-13);
    }
}

#[test]
fn embedding_preserves_the_function() {
    let mesh = HpMesh::unit_square(2, 1).unwrap().with_degrees(vec![2, 3, 2, 4, 3, 2, 2, 3]).unwrap();
    let u = solve_hp(&mesh, &sine_source()).unwrap();
    let raised = mesh.with_degrees(mesh.degrees().iter().map(|p| p + 2).collect()).unwrap();
    let v = u.embed(&raised).unwrap();
    assert!(u.energy_distance(&v) < 1e-14);
    assert_eq!(v.mesh().degrees(), raised.degrees());
    let lowered = mesh.with_degrees(vec![1; 8]).unwrap();
    assert!(u.embed(&lowered).is_err());
}

#[test]
fn projected_and_exact_residuals_agree_for_low_degree_data() {
    let f = Source::parse("poly:1+x-2*y").unwrap();
    let u = solve_hp(&HpMesh::unit_square(2, 2).unwrap(), &f).unwrap();
    for a in [0, 4] {
        let pr = patch_dual_norm(&u, &f, a, ResidualData::Projected, 6).unwrap();
        let ex = patch_dual_norm(&u, &f, a, ResidualData::Exact, 6).unwrap();
        assert!((pr - ex).abs() < 1e-12 * ex.max(1.0), "a={a}: {pr} vs {ex}");
    }
}

#[test]
fn local_dual_norms_bound_the_error() {
    let f = sine_source();
    for p in [1, 2, 3] {
        let mesh = HpMesh::unit_square(2, p).unwrap();
        let u = solve_hp(&mesh, &f).unwrap();
        let reference = solve_hp(&mesh.with_degrees(vec![p + 12; mesh.n_triangles()]).unwrap(), &f).unwrap();
        let err2 = reference.energy_distance(&u).powi(2);
        let sum: f64 = (0..mesh.n_vertices())
            .map(|a| patch_dual_norm(&u, &f, a, ResidualData::Exact, 8).unwrap().powi(2))
            .sum();
        assert!(err2 <= 3.0 * sum * 1.05, "p={p}: {err2} vs {sum}");
    }
}

#[test]
fn adaptive_loop_contracts_on_the_unit_square() {
    let cfg = AfemConfig { iterations: 7, ..Default::default() };
    let rep = afem_loop(&HpMesh::unit_square(2, 1).unwrap(), &Source::constant(1.0), &cfg).unwrap();
    assert_eq!(rep.steps.len(), 7);
    assert!(!rep.non_contraction);
    for s in &rep.steps[..6] {
        assert!(s.contraction.unwrap() < 1.0);
        assert!(s.pythagoras_defect.unwrap() < 1e-8);
        assert!(s.oscillation_condition);
    }
    assert!(rep.steps.windows(2).all(|w| w[1].ndof > w[0].ndof));
    assert!(rep.steps.iter().all(|s| s.oscillation == 0.0 && s.global_raises == 0));
}

#[test]
fn oscillation_condition_triggers_global_raises() {
    let f = Source::from_fn("wave", 24, |x, y| 10.0 * (5.0 * x).sin() * (4.0 * y).cos());
    let cfg = AfemConfig { iterations: 3, lambda_osc: 0.2, ..Default::default() };
    let rep = afem_loop(&HpMesh::unit_square(2, 1).unwrap(), &f, &cfg).unwrap();
    assert!(rep.steps[0].global_raises > 0);
    for s in &rep.steps {
        assert!(s.oscillation_condition);
        assert!(s.oscillation <= 0.2 * s.estimator);
    }
    for s in &rep.steps[..2] {
        assert!(s.pythagoras_defect.unwrap() < 1e-8);
    }
}

proptest! {
    #[test]
    fn doerfler_set_is_minimal(etas in proptest::collection::vec(0.0f64..10.0, 1..30), theta in 0.05f64..1.0) {
        let m = doerfler_mark(&etas, theta).unwrap();
        let total: f64 = etas.iter().map(|e| e * e).sum();
        let got: f64 = m.iter().map(|&i| etas[i] * etas[i]).sum();
        prop_assert!(got >= theta * theta * total * (1.0 - 1e-12));
        if let Some((&last, rest)) = m.split_last() {
            let without: f64 = rest.iter().map(|&i| etas[i] * etas[i]).sum();
            prop_assert!(without < theta * theta * total);
            // no unmarked value exceeds a marked one
            let min_marked = etas[last];
            for (i, e) in etas.iter().enumerate() {
                if !m.contains(&i) {
                    prop_assert!(*e <= min_marked);
                }
            }
        }
    }
}
