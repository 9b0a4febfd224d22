use ckn_lab::fields::Expr;
use ckn_lab::inequalities::check_hpw;
use ckn_lab::phase::{amp_phase_split, phase_derivative_direct, Setting};
use ckn_lab::quadrature::{gauss_jacobi, integrate_sn};
use ckn_lab::search::SweepGrid;
use ckn_lab::sphere_ops::spherical_gradient;
use ckn_lab::{eval_jet1, eval_jet2, Budget, CknParams, Domain, FieldSpec, Point};
use proptest::prelude::*;

fn expr_strategy() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(|c| format!("{c:?}")),
        (1usize..=3).prop_map(|k| format!("(coord {k})")),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(|v| format!("(add {})", v.join(" "))),
            prop::collection::vec(inner.clone(), 1..4).prop_map(|v| format!("(mul {})", v.join(" "))),
            (inner.clone(), 0u32..4).prop_map(|(e, k)| format!("(pow {e} {k})")),
            inner.clone().prop_map(|e| format!("(sin {e})")),
            inner.clone().prop_map(|e| format!("(cos {e})")),
            inner.prop_map(|e| format!("(exp (mul 0.1 {e}))")),
        ]
    })
}

fn unit(v: Vec<f64>) -> Option<Point> {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (r > 0.1).then(|| Point::new(v.iter().map(|x| x / r).collect()).unwrap())
}

fn sphere_bump(c: [f64; 4]) -> FieldSpec {
    FieldSpec::from_json(&format!(
        r#"{{"family": "polar_complex",
            "amplitude": {{"family": "custom", "expr": "(add 1.5 (mul {:?} (coord 0)) (mul {:?} (coord 1) (coord 2)))"}},
            "phase": {{"family": "custom", "expr": "(add (mul {:?} (coord 2)) (mul {:?} (pow (coord 0) 2)))"}},
            "domain": {{"sphere_ambient": 3}}}}"#,
        c[0], c[1], c[2], c[3]
    ))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expressions_print_and_reparse(src in expr_strategy()) {
        let e: Expr = src.parse().unwrap();
        let again: Expr = e.to_string().parse().unwrap();
        prop_assert_eq!(&e, &again);
        let x = [0.3, -0.2, 0.7];
        let a = FieldSpec::custom(Domain::Euclidean(3), &src).unwrap().values(&x);
        let b = FieldSpec::custom(Domain::Euclidean(3), &e.to_string()).unwrap().values(&x);
        prop_assert_eq!(a.ok(), b.ok());
    }

    #[test]
    fn field_specs_survive_json(k in prop::collection::vec(-3.0f64..3.0, 1..5), b in 0.05f64..4.0) {
        let f = FieldSpec::chirped_gaussian(k, b).unwrap();
        prop_assert_eq!(FieldSpec::from_json(&f.to_json()).unwrap(), f);
    }

    #[test]
    fn hessians_are_symmetric_and_match_gradients(src in expr_strategy(), x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let f = FieldSpec::custom(Domain::Euclidean(3), &src).unwrap();
        let p = Point::new(x).unwrap();
        if let (Ok(j1), Ok(j2)) = (eval_jet1(&f, &p), eval_jet2(&f, &p)) {
            prop_assert_eq!(&j1.value, &j2.value);
            prop_assert_eq!(&j1.grad, &j2.grad);
            for i in 0..3 {
                for k in 0..3 {
                    prop_assert_eq!(j2.hess[0].get(i, k).to_bits(), j2.hess[0].get(k, i).to_bits());
                }
            }
        }
    }

    #[test]
    fn ckn_window_matches_its_definition(n in 1usize..9, p in 1.5f64..8.0, q in -0.5f64..2.5) {
        let admissible = 0.0 < q && q < 2.0 && p > 2.0 && n > 2 && n <= 6 && (n as f64) < 2.0 * (p - q) / (p - 2.0);
        prop_assert_eq!(CknParams::new(n, p, q).is_ok(), admissible);
    }

    #[test]
    fn spherical_gradients_are_tangent(c in [-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0, -2.0f64..2.0],
                                       v in prop::collection::vec(-1.0f64..1.0, 3)) {
        if let Some(x) = unit(v) {
            let f = sphere_bump(c);
            for t in spherical_gradient(&f, &x).unwrap() {
                prop_assert!(t.normal_part().abs() < 1e-13);
            }
        }
    }

    #[test]
    fn amplitude_split_matches_direct_phase(c in [-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0, -2.0f64..2.0],
                                            v in prop::collection::vec(-1.0f64..1.0, 3)) {
        if let Some(x) = unit(v) {
            let f = sphere_bump(c);
            let amp = f.values(x.coords()).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            let direct = phase_derivative_direct(&f, &x, Setting::Sphere).unwrap();
            let split = amp_phase_split(&f, &x, Setting::Sphere).unwrap();
            prop_assert!((split.amp_times_phase - amp * direct.magnitude.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_rules_are_normalized(k in 1usize..40, a in -0.9f64..3.0, b in -0.9f64..3.0) {
        let (x, w) = gauss_jacobi(k, a, b);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|w| *w > 0.0));
        prop_assert!(x.windows(2).all(|p| p[0] < p[1]) && x[0] > -1.0 && x[k - 1] < 1.0);
    }

    #[test]
    fn sweep_grids_enumerate_every_tuple(n in prop::collection::vec(1usize..7, 0..4),
                                         p in prop::collection::vec(2.0f64..5.0, 0..4),
                                         q in prop::collection::vec(0.0f64..2.0, 0..4)) {
        let grid = SweepGrid { n: n.clone(), p: p.clone(), q: q.clone() };
        let t = grid.tuples();
        prop_assert_eq!(t.len(), n.len() * p.len() * q.len());
        if let Some(first) = t.first() {
            prop_assert_eq!(*first, (n[0], p[0], q[0]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sphere_second_moments_sum_to_one(n in 1usize..5, k in 2usize..12) {
        let b = Budget { angular_nodes: k, refine_levels: 0, ..Budget::default() };
        let total = integrate_sn(|x: &[f64]| x.iter().map(|v| v * v).sum::<f64>(), n, &b).unwrap();
        prop_assert!((total.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn hpw_reports_are_dilation_invariant(b in 0.2f64..3.0, k in -2.0f64..2.0) {
        let budget = Budget::new(48, 10);
        let r1 = check_hpw(3, &FieldSpec::chirped_gaussian(vec![k, 0.0, 0.0], b).unwrap(), &budget).unwrap();
        let s = 1.7f64;
        let r2 = check_hpw(3, &FieldSpec::chirped_gaussian(vec![k * s, 0.0, 0.0], b * s * s).unwrap(), &budget).unwrap();
        prop_assert!((r1.ratio_improved() - r2.ratio_improved()).abs() < 1e-8);
        prop_assert!((r1.slack - (r1.lhs - r1.rhs_improved)).abs() <= 1e-12 * r1.lhs);
        prop_assert_eq!(r1.holds, r1.slack >= -r1.tolerance);
        prop_assert!(r1.holds);
    }
}
