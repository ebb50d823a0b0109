use serde_json::Value;
use singtraj_demo::{abnormal, bracket, value};

const MARTINET: &str = include_str!("../../../specs/martinet.json");
const DRIFT2D: &str = include_str!("../../../specs/drift2d.json");

#[test]
fn martinet_bracket() {
    let v: Value = serde_json::from_str(&bracket(3, "1; 0; 0", "0; 1; x1^2/2").unwrap()).unwrap();
    let comps: Vec<String> = v["bracket"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
    let third = singtraj::expr::parse_expression(&comps[2], 3).unwrap();
    assert_eq!(&comps[..2], ["0", "0"]);
    assert_eq!(third.eval(0.0, &[0.7, 0.1, 0.2]).unwrap(), 0.7);
    assert!(bracket(3, "1; 0", "0; 1; 0").is_err());
}

#[test]
fn martinet_abnormal_line() {
    let v: Value = serde_json::from_str(&abnormal(MARTINET, "0,0,0", "0,0,1", 1.0).unwrap()).unwrap();
    assert_eq!(v["singular"], true);
    assert_eq!(v["corank"], 1);
    assert_eq!(v["goh"], true);
    assert_eq!(v["states"].as_array().unwrap().len(), 201);
}

#[test]
fn drift2d_value() {
    let v: Value = serde_json::from_str(&value(DRIFT2D, "0,0", "1.01,0.3", 1.0, 8, 0).unwrap()).unwrap();
    let val = v["value"].as_f64().unwrap();
    assert!((val - 0.2026).abs() < 1e-3, "{val}");
}
