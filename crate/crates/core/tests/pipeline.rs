use std::path::Path;

use singtraj::genericity::{survey_singulars, PerturbationConfig};
use singtraj::hjb::{solve_hjb_2d, HjbConfig};
use singtraj::ocp::{value_at, ValueStatus};
use singtraj::system::SystemSpec;

fn bundled(name: &str) -> SystemSpec {
    SystemSpec::from_path(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)).unwrap()
}

const BUNDLED: [&str; 6] = [
    "drift2d.json",
    "martinet.json",
    "martinet_metric.json",
    "linear_kalman.json",
    "affine_m2n4.json",
    "driftless_m3n4.json",
];

#[test]
fn bundled_specs_round_trip() {
    for name in BUNDLED {
        let s = bundled(name);
        let again = SystemSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(again.to_json(), s.to_json(), "{name}");
    }
}

#[test]
fn spec_errors_carry_pointers() {
    let e = SystemSpec::from_json_str(
        r#"{"dimension": 2, "controls": 1, "driftless": false,
            "drift": ["1", "x3"], "fields": [["0","1"]],
            "domain": {"lower": [0,0], "upper": [1,1]}}"#,
    )
    .unwrap_err();
    assert!(e.to_string().contains("/drift/1"), "{e}");
}

fn lq(g: &str) -> SystemSpec {
    SystemSpec::from_json_str(&format!(
        r#"{{"dimension": 2, "controls": 2, "driftless": true,
            "fields": [["1","0"],["0","1"]],
            "cost": {{"g": "{g}"}},
            "domain": {{"lower": [-1,-1], "upper": [1,1]}}}}"#
    ))
    .unwrap()
}

#[test]
fn hjb_values_are_non_negative_and_shift_with_constant_cost() {
    let cfg = HjbConfig::square([-0.1, -0.1], [0.9, 0.9], 61, 1.0, [0.0, 0.0], 0.03);
    let base = solve_hjb_2d(&lq("0"), &cfg).unwrap();
    assert!(base.min_value() >= 0.0);
    let shifted = solve_hjb_2d(&lq("0.4"), &cfg).unwrap();
    for p in [[0.2, 0.3], [0.6, 0.1], [0.4, 0.4]] {
        let d = shifted.value_at(p).unwrap() - base.value_at(p).unwrap();
        // Running cost carries ½ g.
        assert!((d - 0.2).abs() < 1e-3, "{d}");
    }
}

#[test]
fn hjb_grid_files() {
    let mut cfg = HjbConfig::square([-0.5, -0.5], [0.5, 0.5], 11, 0.1, [0.0, 0.0], 0.05);
    cfg.snapshots = 2;
    let g = solve_hjb_2d(&lq("0"), &cfg).unwrap();
    assert_eq!(g.snapshots.len(), 2);
    assert!((g.snapshots[0].t - 0.05).abs() < 1e-12);
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let csv = dir.join("hjb-grid.csv");
    g.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,y,value\n"));
    assert_eq!(text.lines().count(), 1 + 121);
    assert_eq!(g.metadata()["cfl_used"].as_f64().unwrap(), g.cfl_used);
}

// Near the endpoint of the singular line the value behaves like y⁴/(x − T):
// steep growth in |y| for a fixed small x − T. Below y ≈ 0.08 the grid's
// numerical diffusion dominates, so the slope is read on [0.08, 0.2].
// There |∇S| ~ 4y³/(x − T) passes the default momentum clamp.
#[test]
fn hjb_singular_locus_signature() {
    let mut cfg = HjbConfig::square([-0.002, 0.0], [0.02, 0.4], 201, 1.0, [0.0, 0.0], 1e-5);
    cfg.eps = [1e-5, 1e-3];
    cfg.frame = [1.0, 0.0];
    cfg.clamp = 1e4;
    let g = solve_hjb_2d(&bundled("drift2d.json"), &cfg).unwrap();
    let v = |y: f64| g.value_at([1.001, y]).unwrap();
    assert!(v(0.02) < 0.02);
    let slope = (v(0.2) / v(0.08)).ln() / 2.5f64.ln();
    assert!((3.0..=5.0).contains(&slope), "log-log slope {slope}");
}

#[test]
fn unreachable_target_is_reported() {
    let s = SystemSpec::from_json_str(
        r#"{"dimension": 2, "controls": 1, "driftless": true,
            "fields": [["1","0"]],
            "domain": {"lower": [-1,-1], "upper": [1,1]}}"#,
    )
    .unwrap();
    let v = value_at(&s, &[0.0, 0.0], 1.0, &[0.0, 1.0], 4, 0, None).unwrap();
    assert_eq!(v.status, ValueStatus::Unreachable);
    assert!(v.value.is_none());
}

#[test]
fn survey_is_deterministic_and_counts_add_up() {
    let cfg = PerturbationConfig { systems: 3, samples: 2, ..PerturbationConfig::default() };
    let spec = bundled("driftless_m3n4.json");
    let a = survey_singulars(&spec, &cfg).unwrap();
    let b = survey_singulars(&spec, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = &a.counts;
    assert_eq!(
        c.classified + c.trivial + c.blow_ups + c.recovery_failures + c.gate_failures + c.projection_failures,
        c.samples
    );
}

#[test]
fn unperturbed_martinet_is_a_goh_negative_control() {
    let cfg = PerturbationConfig { eps: 0.0, systems: 1, samples: 3, ..PerturbationConfig::default() };
    let r = survey_singulars(&bundled("martinet.json"), &cfg).unwrap();
    assert!(r.counts.classified > 0);
    assert_eq!(r.counts.goh, r.counts.classified);
    assert_eq!(r.counts.goh_nonvacuous, 0);
}

#[test]
fn hjb_edge_data_follows_the_drift() {
    let s = SystemSpec::from_json_str(
        r#"{"dimension": 2, "controls": 1, "driftless": false,
            "drift": ["1", "0"], "fields": [["0","1"]],
            "domain": {"lower": [-1,-1], "upper": [2,1]}}"#,
    )
    .unwrap();
    let cfg = HjbConfig::square([-0.5, -0.5], [1.5, 0.5], 81, 1.0, [0.0, 0.0], 0.03);
    let g = solve_hjb_2d(&s, &cfg).unwrap();
    // The lower x edge sits at -0.5 and its data moves right at unit speed,
    // so the front is near 0.5; upwind smearing adds a margin.
    assert!(!g.outside_contamination([0.3, 0.0]));
    assert!(g.outside_contamination([1.2, 0.0]));
    assert!(!g.outside_contamination([1.2, 0.49]));
    let lq = solve_hjb_2d(&lq("0"), &HjbConfig::square([-0.1, -0.1], [0.9, 0.9], 61, 1.0, [0.0, 0.0], 0.03)).unwrap();
    assert!(lq.outside_contamination([0.6, 0.3]));
    assert!(lq.contaminated_fraction() < 0.1);
}
