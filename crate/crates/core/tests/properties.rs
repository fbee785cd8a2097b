use std::sync::Arc;

use gradflow_core::diagnostics::eoc;
use gradflow_core::stepper::lagrange_weights;
use gradflow_core::*;
use proptest::prelude::*;

fn space_for(dim: usize, n: usize, k: usize, bc: BoundaryKind) -> Arc<DgSpace> {
    let mesh = if dim == 1 {
        Mesh::interval(-1.5, 2.0, n, bc).unwrap()
    } else {
        Mesh::rectangle((-1.5, 2.0), (0.0, 3.0), n, n + 1, bc).unwrap()
    };
    DgSpace::new(mesh, k)
}

fn bc_strategy() -> impl Strategy<Value = BoundaryKind> {
    prop_oneof![Just(BoundaryKind::Periodic), Just(BoundaryKind::Natural)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn g_is_symmetric(dim in 1usize..=2, n in 2usize..6, k in 0usize..=3, a in -2.0f64..2.0, bc in bc_strategy()) {
        let space = space_for(dim, n, k, bc);
        let g = assemble_g(&space, a);
        let scale = 1.0f64.max(g.max_abs());
        prop_assert!(g.max_asymmetry() <= 1e-12 * scale, "asymmetry {}", g.max_asymmetry());
    }

    #[test]
    fn projection_is_l2_contractive(seed in any::<u64>(), dim in 1usize..=2, k in 0usize..=3) {
        use rand::{Rng, SeedableRng};
        let space = space_for(dim, 3, k, BoundaryKind::Periodic);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..space.n_quad()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let f = QuadField::from_values(&space, values).unwrap();
        let pf = space.project_quad(&f);
        prop_assert!(space.norm_l2(&pf) <= f.norm_l2() * (1.0 + 1e-13));
    }

    #[test]
    fn parseval_identity(coeffs in prop::collection::vec(-3.0f64..3.0, 16 * 6), k in 0usize..=3) {
        let space = space_for(2, 2, k, BoundaryKind::Natural);
        let u = DgField::from_coeffs(&space, coeffs[..space.n_dofs()].to_vec()).unwrap();
        let diff = (space.norm_l2(&u) - u.coeff_norm()).abs();
        prop_assert!(diff <= 1e-10 * (1.0 + u.coeff_norm()), "{diff}");
    }

    #[test]
    fn projection_round_trip_on_polynomials(coeffs in prop::collection::vec(-3.0f64..3.0, 4 * 16), k in 0usize..=3) {
        let space = space_for(1, 4, k, BoundaryKind::Periodic);
        let u = DgField::from_coeffs(&space, coeffs[..space.n_dofs()].to_vec()).unwrap();
        let back = space.project_quad(&space.eval_at_quad(&u));
        prop_assert!(back.max_abs_diff(&u) <= 1e-12);
    }

    #[test]
    fn lh_is_linear(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let space = space_for(2, 3, 2, BoundaryKind::Periodic);
        let g = assemble_g(&space, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut random = || DgField::from_coeffs(&space, (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (u, v) = (random(), random());
        let mut comb = u.clone();
        comb.scale(alpha);
        comb.axpy(beta, &v);
        let lhs = apply_lh(&g, &comb);
        let mut rhs = apply_lh(&g, &u);
        rhs.scale(alpha);
        rhs.axpy(beta, &apply_lh(&g, &v));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * (1.0 + g.max_abs()));
    }

    #[test]
    fn h_identity(w in -3.0f64..3.0, eps in 0.0f64..0.5, g in 0.0f64..1.5) {
        let pot = Potential::swift_hohenberg(eps, g);
        let lhs = pot.h(w).unwrap() * pot.aux(w).unwrap();
        prop_assert!((lhs - pot.dphi(w)).abs() <= 1e-12 * (1.0 + pot.dphi(w).abs()));
    }

    #[test]
    fn h_is_derivative_of_twice_aux(w in -3.0f64..3.0, eps in 0.0f64..0.5, g in 0.0f64..1.5) {
        let pot = Potential::swift_hohenberg(eps, g);
        let d = 1e-5;
        let fd = (pot.aux(w + d).unwrap() - pot.aux(w - d).unwrap()) / d;
        let h = pot.h(w).unwrap();
        prop_assert!((fd - h).abs() <= 1e-6 * h.abs().max(1e-3), "fd {fd} h {h}");
    }

    #[test]
    fn eoc_is_scale_invariant(e1 in 1e-8f64..1.0, ratio in 1.1f64..64.0, scale in 1e-6f64..1e6) {
        let e2 = e1 / ratio;
        prop_assert!((eoc(e1, e2, 2.0) - eoc(scale * e1, scale * e2, 2.0)).abs() < 1e-10);
    }

    #[test]
    fn stability_matrix_is_exactly_symmetric(a in prop::collection::vec(-1.0f64..1.0, 9), b in prop::collection::vec(0.0f64..1.0, 3)) {
        let sum: f64 = b.iter().sum::<f64>() + 1e-3;
        let b: Vec<f64> = b.iter().map(|x| (x + 1e-3 / 3.0) / sum).collect();
        let b_last = 1.0 - b[0] - b[1];
        let b = vec![b[0], b[1], b_last];
        let rows: Vec<Vec<f64>> = a.chunks(3).map(|r| r.to_vec()).collect();
        let t = ButcherTableau::new("random", rows, b, None).unwrap();
        let m = t.stability_matrix();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(m[i][j].to_bits(), m[j][i].to_bits());
            }
        }
    }

    #[test]
    fn extrapolation_reproduces_cubics(c0 in -1.0f64..1.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0, t in 1.0f64..2.0) {
        let nodes = [0.0, 0.25, 0.75, 1.0];
        let p = |x: f64| c0 + x * (c1 + x * (c2 + x * c3));
        let w = lagrange_weights(&nodes, t);
        let val: f64 = nodes.iter().zip(&w).map(|(&x, wk)| wk * p(x)).sum();
        prop_assert!((val - p(t)).abs() <= 1e-10);
    }
}

#[test]
fn projection_contractive_on_thousand_random_fields() {
    use rand::{Rng, SeedableRng};
    let space = space_for(2, 3, 2, BoundaryKind::Periodic);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let values: Vec<f64> = (0..space.n_quad()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = QuadField::from_values(&space, values).unwrap();
        assert!(space.norm_l2(&space.project_quad(&f)) <= f.norm_l2() * (1.0 + 1e-13));
    }
}

#[test]
fn projection_error_converges_at_order_k_plus_one() {
    let f = |x: &[f64]| (0.5 * x[0]).sin() * (0.5 * x[1]).sin();
    let tpi = 2.0 * std::f64::consts::PI;
    let errors: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let space = DgSpace::new(Mesh::rectangle((-tpi, tpi), (-tpi, tpi), n, n, BoundaryKind::Periodic).unwrap(), 1);
            space.error_l2(&space.project(f), f)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }
}

#[test]
fn wrap_face_jump_decays() {
    let tpi = 2.0 * std::f64::consts::PI;
    let k = 1;
    let jumps: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let space = DgSpace::new(Mesh::interval(-tpi, tpi, n, BoundaryKind::Periodic).unwrap(), k);
            let u = space.project(|x| (0.5 * x[0]).sin());
            let mesh = space.mesh();
            let wrap = (0..mesh.faces().len())
                .find(|&f| mesh.faces()[f].kind == gradflow_core::mesh::FaceKind::PeriodicWrap)
                .unwrap();
            space.trace_avg_jump(&u, wrap).unwrap().jump[0].abs()
        })
        .collect();
    for w in jumps.windows(2) {
        assert!(eoc(w[0], w[1], 2.0) > k as f64 + 0.7, "{jumps:?}");
    }
}

#[test]
fn continuous_fields_see_only_volume_terms() {
    // A global linear function is continuous and has constant normal derivative,
    // so face terms cancel: G(u, u) = int |grad u|^2 - a u^2.
    let space = DgSpace::new(Mesh::rectangle((0.0, 1.0), (0.0, 2.0), 3, 4, BoundaryKind::Natural).unwrap(), 1);
    let u = space.project(|x| 2.0 * x[0] - x[1]);
    let g = assemble_g(&space, 0.5);
    let gu = apply_lh(&g, &u);
    let lhs = gu.dot(&u);
    let u_sq = u.coeff_norm().powi(2);
    let expected = (4.0 + 1.0) * 2.0 - 0.5 * u_sq;
    assert!((lhs - expected).abs() < 1e-10, "{lhs} vs {expected}");
}

#[test]
fn rayleigh_quotient_tends_to_eigenvalue() {
    let tpi = 2.0 * std::f64::consts::PI;
    let mut prev = f64::INFINITY;
    for n in [8, 16, 32] {
        let space = DgSpace::new(Mesh::rectangle((-tpi, tpi), (-tpi, tpi), n, n, BoundaryKind::Periodic).unwrap(), 2);
        let u = space.project(|x| (0.5 * x[0]).sin() * (0.5 * x[1]).sin());
        let g = assemble_g(&space, 1.0);
        let rq = apply_lh(&g, &u).dot(&u) / u.dot(&u);
        let err = (rq + 0.5).abs();
        assert!(err < prev, "n={n} rq={rq}");
        prev = err;
    }
    assert!(prev < 1e-4);
}

#[test]
fn g_of_constants_is_minus_a_times_area() {
    let tpi = 2.0 * std::f64::consts::PI;
    let space = DgSpace::new(Mesh::rectangle((-tpi, tpi), (-tpi, tpi), 4, 4, BoundaryKind::Periodic).unwrap(), 2);
    let one = space.project(|_| 1.0);
    let g = assemble_g(&space, 1.0);
    let lh1 = apply_lh(&g, &one);
    let area = 16.0 * std::f64::consts::PI.powi(2);
    assert!((lh1.dot(&one) + area).abs() < 1e-10);
    let minus_one = space.project(|_| -1.0);
    assert!(lh1.max_abs_diff(&minus_one) < 1e-12);
}

#[test]
fn manufactured_solution_solves_forced_equation() {
    use rand::{Rng, SeedableRng};
    // u_t + Lap^2 u + 2 Lap u + (1 - eps) u - g u^2 + u^3 - f = 0 with a = 1.
    for (name, eps, g) in [("sine-half", 0.025, 0.0), ("sine-quarter", 0.025, 0.0), ("sine-half", 0.1, 1.0)] {
        let pot = Potential::swift_hohenberg(eps, g);
        let ms = ManufacturedSolution::named(name, 2, pot).unwrap();
        let kappa = ms.wavenumber;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let t = rng.gen_range(0.0..2.0);
            let u = ms.exact(&x, t);
            // Lap u = -2 kappa^2 u, Lap^2 u = 4 kappa^4 u for the separable sine mode.
            let rate = (2.0 * kappa * kappa - 1.0).powi(2);
            let u_t = -rate * u;
            let lap = -2.0 * kappa * kappa * u;
            let bilap = 4.0 * kappa.powi(4) * u;
            let res = u_t + bilap + 2.0 * lap + (1.0 - eps) * u - g * u * u + u * u * u - ms.source(&x, t);
            assert!(res.abs() < 1e-10, "{name}: residual {res}");
        }
    }
}
