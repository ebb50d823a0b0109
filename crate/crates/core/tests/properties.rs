use nalgebra::DMatrix;
use proptest::prelude::*;

use singtraj::expr::parse_expression;
use singtraj::genericity::{perturb_system, PerturbationConfig};
use singtraj::goh::pfaffian;
use singtraj::lie::{lie_bracket, VectorField};
use singtraj::system::SystemSpec;

const N: usize = 3;

// Expression source text over x1..x3 that is defined everywhere.
fn source() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (1..=N).prop_map(|i| format!("x{i}")),
        (-3.0f64..3.0).prop_map(|c| format!("({c:.3})")),
        Just("t".to_string()),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), 2u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("atan({a})")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

fn field() -> impl Strategy<Value = VectorField> {
    prop::collection::vec(source(), N)
        .prop_map(|s| VectorField::new(s.iter().map(|e| parse_expression(e, N).unwrap()).collect()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parser_never_panics(s in "\\PC{0,40}") {
        let _ = parse_expression(&s, N);
    }

    #[test]
    fn printed_form_parses_back(s in source(), x in point(), t in -1.0f64..1.0) {
        let e = parse_expression(&s, N).unwrap();
        let back = parse_expression(&e.to_string(), N).unwrap();
        prop_assert!(close(e.eval(t, &x).unwrap(), back.eval(t, &x).unwrap(), 1e-12));
    }

    #[test]
    fn mixed_partials_commute(s in source(), x in point(), i in 0..N, j in 0..N) {
        let e = parse_expression(&s, N).unwrap();
        let a = e.diff(i).diff(j).eval(0.3, &x).unwrap();
        let b = e.diff(j).diff(i).eval(0.3, &x).unwrap();
        prop_assert!(close(a, b, 1e-9), "{} vs {}", a, b);
    }

    #[test]
    fn derivative_matches_central_difference(s in source(), x in point(), i in 0..N) {
        let e = parse_expression(&s, N).unwrap();
        let h = 1e-5;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (e.eval(0.0, &xp).unwrap() - e.eval(0.0, &xm).unwrap()) / (2.0 * h);
        let d = e.diff(i).eval(0.0, &x).unwrap();
        prop_assert!(close(d, fd, 1e-4), "{} vs {}", d, fd);
    }

    #[test]
    fn bracket_is_antisymmetric(f in field(), g in field(), x in point()) {
        let a = lie_bracket(&f, &g).unwrap().eval(0.0, &x).unwrap();
        let b = lie_bracket(&g, &f).unwrap().eval(0.0, &x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!(close(*u, -*v, 1e-10));
        }
    }

    #[test]
    fn jacobi_identity(f in field(), g in field(), h in field(), x in point()) {
        let cyc = |a: &VectorField, b: &VectorField, c: &VectorField| {
            lie_bracket(a, &lie_bracket(b, c).unwrap()).unwrap().eval(0.0, &x).unwrap()
        };
        let s1 = cyc(&f, &g, &h);
        let s2 = cyc(&g, &h, &f);
        let s3 = cyc(&h, &f, &g);
        let scale = s1.iter().chain(&s2).chain(&s3).fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..N {
            prop_assert!((s1[k] + s2[k] + s3[k]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn pfaffian_squares_to_determinant(half in 1usize..5, entries in prop::collection::vec(-2.0f64..2.0, 28)) {
        let n = 2 * half;
        let mut a = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                a[(i, j)] = entries[k];
                a[(j, i)] = -entries[k];
                k += 1;
            }
        }
        let pf = pfaffian(&a).unwrap();
        let det = a.determinant();
        prop_assert!((pf * pf - det).abs() <= 1e-9 * (1.0 + det.abs()));
    }

    #[test]
    fn perturbation_is_deterministic(seed in 0u64..1000, index in 0usize..20) {
        let spec = martinet();
        let cfg = PerturbationConfig { seed, ..PerturbationConfig::default() };
        prop_assert_eq!(perturb_system(&spec, &cfg, index).to_json(), perturb_system(&spec, &cfg, index).to_json());
    }
}

fn martinet() -> SystemSpec {
    SystemSpec::from_json_str(
        r#"{"dimension": 3, "controls": 2, "driftless": true,
            "fields": [["1","0","0"],["0","1","x1^2/2"]],
            "domain": {"lower": [-1,-1,-1], "upper": [1,1,1]}}"#,
    )
    .unwrap()
}

#[test]
fn perturbed_martinet_bracket_moves() {
    let spec = martinet();
    let cfg = PerturbationConfig { eps: 0.05, degree: 2, seed: 7, ..PerturbationConfig::default() };
    let p = perturb_system(&spec, &cfg, 0);
    let base = lie_bracket(&spec.controls[0], &spec.controls[1]).unwrap();
    let moved = lie_bracket(&p.controls[0], &p.controls[1]).unwrap();
    for x in [[0.1, -0.2, 0.3], [0.5, 0.5, -0.4], [-0.7, 0.2, 0.0]] {
        let a = base.eval(0.0, &x).unwrap();
        let b = moved.eval(0.0, &x).unwrap();
        assert_eq!(a, vec![0.0, 0.0, x[0]]);
        assert!(a.iter().zip(&b).any(|(u, v)| (u - v).abs() > 1e-6));
    }
}
