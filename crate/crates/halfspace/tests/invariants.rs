use halfspace::collision_operator::{build_bgk_operator, NuProfile};
use halfspace::halfspace_solver::{BoundaryKind, ModelProblem, SolverOptions, SourceTerm};
use halfspace::kernel_spectral::signature;
use halfspace::linalg::{lstsq, matrix_sign};
use halfspace::model_catalog::{build_space, equilibrium, ModelSpec};
use halfspace::quadrature::gauss_hermite;
use halfspace::{GridSpec, Mat, Vector};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

fn double_factorial_odd(k: u32) -> f64 {
    (1..=k).filter(|j| j % 2 == 1).map(f64::from).product()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn hermite_rule_is_exact_below_degree_2n(n in 1usize..24, half in 0u32..24) {
        let k = 2 * half;
        prop_assume!((k as usize) < 2 * n);
        let r = gauss_hermite(n).unwrap();
        let sum: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
        // ∫ x^{2m} e^{-x²} = (2m-1)!! √π / 2^m
        let exact = double_factorial_odd(k.saturating_sub(1)) * std::f64::consts::PI.sqrt() / 2f64.powi(half as i32);
        prop_assert!((sum - exact).abs() <= 1e-11 * exact, "n={} k={} {} vs {}", n, k, sum, exact);
    }

    #[test]
    fn signature_counts_the_kernel(d in 1usize..=2, u in -3.0f64..3.0) {
        let m = ModelSpec::monatomic(d);
        let space = build_space(&m, &GridSpec::new(d, 8)).unwrap();
        let eq = equilibrium(&m, &space).unwrap();
        let op = build_bgk_operator(&m, &space, &eq, &NuProfile::hard_sphere_like(), u).unwrap();
        let s = signature(&op).unwrap().signature;
        prop_assert_eq!(s.total(), d + 2);
    }

    #[test]
    fn positive_count_grows_with_speed(u in -2.5f64..2.5, du in 0.01f64..1.0) {
        let m = ModelSpec::monatomic(1);
        let space = build_space(&m, &GridSpec::new(1, 12)).unwrap();
        let eq = equilibrium(&m, &space).unwrap();
        let at = |u: f64| {
            let op = build_bgk_operator(&m, &space, &eq, &NuProfile::hard_sphere_like(), u).unwrap();
            signature(&op).unwrap().signature
        };
        let (a, b) = (at(u), at(u + du));
        prop_assert!(a.k_plus <= b.k_plus && a.k_minus >= b.k_minus);
    }

    #[test]
    fn sign_function_is_an_involution(seed in prop::collection::vec(-1.0f64..1.0, 36), shift in 0.1f64..2.0) {
        let a = Mat::from_column_slice(6, 6, &seed);
        let m = &a * a.transpose() + Mat::identity(6, 6) * shift - Mat::identity(6, 6) * 1.5;
        prop_assume!(m.clone().symmetric_eigenvalues().iter().all(|l| l.abs() > 1e-3));
        let s = matrix_sign(&m).unwrap();
        let id = Mat::identity(6, 6);
        prop_assert!((&s * &s - &id).norm() < 1e-9);
        prop_assert!((&m * &s - &s * &m).norm() < 1e-9 * (1.0 + m.norm()));
    }

    #[test]
    fn least_squares_solves_consistent_systems(seed in prop::collection::vec(-1.0f64..1.0, 32), x in prop::collection::vec(-2.0f64..2.0, 4)) {
        let a = Mat::from_column_slice(8, 4, &seed);
        prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-2);
        let x = Vector::from_column_slice(&x);
        let got = lstsq(&a, &(&a * &x), 1e-12).unwrap();
        prop_assert!((got - x).norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn penalized_solve_is_linear(t in -2.0f64..2.0, u in 0.1f64..1.2, coef in 0.0f64..1.0) {
        let m = ModelSpec::monatomic(1);
        let bc = BoundaryKind::Accommodate { coefficient: coef };
        let p = ModelProblem::new(&m, &GridSpec::new(1, 10).with_center(u), u, bc, &SolverOptions::default()).unwrap();
        let ctx = &p.ctx;
        let np = ctx.boundary.plus_count();
        let d1 = ctx.boundary.lift(&Vector::from_fn(np, |i, _| (i as f64 + 0.3).sin()));
        let d2 = ctx.boundary.lift(&Vector::from_fn(np, |i, _| (1.7 * i as f64).cos()));
        let zero = SourceTerm::zero();
        let s1 = ctx.solve_penalized(&d1, &zero).unwrap();
        let s2 = ctx.solve_penalized(&d2, &zero).unwrap();
        let s12 = ctx.solve_penalized(&(&d1 * t + &d2), &zero).unwrap();
        for x in [0.0, 0.5, 3.0] {
            let e = (s12.at(x) - (s1.at(x) * t + s2.at(x))).norm();
            prop_assert!(e < 1e-10 * (1.0 + t.abs()), "x={} err={}", x, e);
        }
    }

    #[test]
    fn admissible_traces_dissipate(u in 0.1f64..1.2, coef in 0.0f64..1.0) {
        // any g with R̃g = 0 satisfies (Bg|g) ≤ 0
        let m = ModelSpec::monatomic(1);
        let bc = BoundaryKind::Accommodate { coefficient: coef };
        let p = ModelProblem::new(&m, &GridSpec::new(1, 10).with_center(u), u, bc, &SolverOptions::default()).unwrap();
        let bop = &p.ctx.boundary;
        let b = &p.ctx.op.transport;
        let refl = bop.partner.as_ref().unwrap();
        let mut g = Vector::from_fn(b.len(), |k, _| (0.9 * k as f64 + u).sin());
        for &j in &bop.plus {
            g[j] = bop.coefficient * g[refl[j]];
        }
        prop_assert!(bop.apply(&g).amax() < 1e-14);
        prop_assert!(b.component_mul(&g).dot(&g) <= 1e-14);
    }
}
