//! Browser bindings: three operations on a spec pasted into the page, each
//! returning a JSON string for the page script to render.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use singtraj::expr::parse_expression;
use singtraj::lie::{lie_bracket, VectorField};
use singtraj::ocp::value_at;
use singtraj::singular::{analyze, AnalysisOptions, Subject};
use singtraj::system::SystemSpec;

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{what}: {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(format!("{what}: expected {n} numbers, got {}", v.len()));
    }
    Ok(v)
}

fn field(text: &str, n: usize) -> Result<VectorField, String> {
    let comps = text
        .split(';')
        .map(|c| parse_expression(c.trim(), n).map_err(|e| format!("{c:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if comps.len() != n {
        return Err(format!("expected {n} components separated by ';', got {}", comps.len()));
    }
    Ok(VectorField::new(comps))
}

/// `[f, g]` with components separated by `;`.
pub fn bracket(n: usize, f: &str, g: &str) -> Result<String, String> {
    let b = lie_bracket(&field(f, n)?, &field(g, n)?).map_err(|e| e.to_string())?;
    let comps: Vec<String> = b.components().iter().map(|e| e.to_string()).collect();
    Ok(json!({ "bracket": comps }).to_string())
}

fn states_json(states: &[Vec<f64>]) -> Value {
    json!(states)
}

/// Singularity report for the abnormal extremal from `(x0, λ0)`.
pub fn abnormal(spec_json: &str, x0: &str, lambda0: &str, horizon: f64) -> Result<String, String> {
    let spec = SystemSpec::from_json_str(spec_json).map_err(|e| e.to_string())?;
    let subject = Subject::Abnormal {
        x0: numbers(x0, spec.n, "x0")?,
        lambda0: numbers(lambda0, spec.n, "lambda0")?,
    };
    let opts = AnalysisOptions { horizon, ..AnalysisOptions::default() };
    let rep = analyze(&spec, &subject, &opts).map_err(|e| e.to_string())?;
    let order = rep.order.as_ref();
    Ok(json!({
        "singular": rep.singular,
        "corank": rep.corank,
        "minimal_order": order.map(|o| o.minimal_order),
        "goh": order.map(|o| o.goh),
        "goh_vacuous": order.map(|o| o.goh_vacuous),
        "case": order.map(|o| o.case),
        "strict": rep.strictness.strict,
        "strict_residual": rep.strictness.residual,
        "abnormal_check": rep.abnormal_check,
        "states": rep.extremal.as_ref().map(|e| states_json(&e.states)),
    })
    .to_string())
}

/// Value estimate by normal shooting from seeded guesses.
pub fn value(spec_json: &str, x0: &str, target: &str, horizon: f64, starts: usize, seed: u64) -> Result<String, String> {
    let spec = SystemSpec::from_json_str(spec_json).map_err(|e| e.to_string())?;
    let x0 = numbers(x0, spec.n, "x0")?;
    let target = numbers(target, spec.n, "target")?;
    let v = value_at(&spec, &x0, horizon, &target, starts, seed, None).map_err(|e| e.to_string())?;
    Ok(json!({
        "status": v.status,
        "value": v.value,
        "lambda0": v.lambda0,
        "converged": v.converged,
        "starts": starts,
        "states": v.shooting.extremal.as_ref().map(|e| states_json(&e.states)),
    })
    .to_string())
}

#[wasm_bindgen(js_name = bracket)]
pub fn bracket_js(n: usize, f: &str, g: &str) -> Result<String, JsError> {
    bracket(n, f, g).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = abnormal)]
pub fn abnormal_js(spec_json: &str, x0: &str, lambda0: &str, horizon: f64) -> Result<String, JsError> {
    abnormal(spec_json, x0, lambda0, horizon).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = value)]
pub fn value_js(spec_json: &str, x0: &str, target: &str, horizon: f64, starts: usize, seed: u64) -> Result<String, JsError> {
    value(spec_json, x0, target, horizon, starts, seed).map_err(|e| JsError::new(&e))
}
