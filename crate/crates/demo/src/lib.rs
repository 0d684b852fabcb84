//! Browser bindings for the static demo page in `www/`.

use serde::Serialize;
use trendfilter::rng::{gaussian_vector, stream_rng};
use trendfilter::{
    effective_penalty, fit_constrained, fit_penalized, knot_profile, lambda_star, sample_signal,
    tuning_rules, tv1d_exact, variation, Builtin, DiffOrder, Signal, SignalSpec, SolverOptions,
    TuningRule,
};
use wasm_bindgen::prelude::*;

type JsResult<T> = Result<T, JsError>;

fn js(e: trendfilter::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn builtin(name: &str) -> JsResult<Builtin> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| JsError::new(&format!("unknown signal {name:?}")))
}

fn order(r: usize) -> JsResult<DiffOrder> {
    DiffOrder::new(r).map_err(js)
}

/// Values of a named test signal at `n` points.
#[wasm_bindgen]
pub fn truth(name: &str, n: usize) -> JsResult<Vec<f64>> {
    let spec = SignalSpec::builtin(builtin(name)?);
    Ok(sample_signal(&spec, n).map_err(js)?.into_inner())
}

/// `theta + sigma * Z` with `Z` drawn from `seed`.
#[wasm_bindgen]
pub fn noisy(theta: &[f64], sigma: f64, seed: u32) -> Vec<f64> {
    let mut rng = stream_rng(&[seed as u64], 0);
    let z = gaussian_vector(&mut rng, theta.len());
    theta.iter().zip(z).map(|(t, z)| t + sigma * z).collect()
}

/// Penalized fit at level `lambda`, scaled by `sigma * n^(r-1)`.
#[wasm_bindgen]
pub fn fit_lambda(y: &[f64], r: usize, lambda: f64, sigma: f64) -> JsResult<Vec<f64>> {
    let r = order(r)?;
    let y = Signal::new(y.to_vec()).map_err(js)?;
    let mu = effective_penalty(y.len(), r, sigma, lambda);
    if r.get() == 1 {
        return Ok(tv1d_exact(&y, mu).map_err(js)?.into_inner());
    }
    let res = fit_penalized(&y, r, mu, &SolverOptions::default()).map_err(js)?;
    Ok(res.fitted.into_inner())
}

/// Constrained fit with variation budget `v`.
#[wasm_bindgen]
pub fn fit_budget(y: &[f64], r: usize, v: f64) -> JsResult<Vec<f64>> {
    let y = Signal::new(y.to_vec()).map_err(js)?;
    let res = fit_constrained(&y, order(r)?, v, &SolverOptions::default()).map_err(js)?;
    Ok(res.fitted.into_inner())
}

#[wasm_bindgen]
pub fn budget_of(theta: &[f64], r: usize) -> JsResult<f64> {
    let theta = Signal::new(theta.to_vec()).map_err(js)?;
    variation(&theta, order(r)?).map_err(js)
}

#[derive(Serialize)]
struct Analysis {
    knots: Vec<usize>,
    signs: Vec<i8>,
    segment_lengths: Vec<usize>,
    variation: f64,
    rules: Vec<(&'static str, f64)>,
}

/// Knots, signs and the tuning-rule levels of `theta`, as JSON.
#[wasm_bindgen]
pub fn analyze(theta: &[f64], r: usize, gamma: f64) -> JsResult<String> {
    let ro = order(r)?;
    let profile = knot_profile(theta, ro, 1e-8).map_err(js)?;
    let names: &[(&str, TuningRule)] = if r == 1 {
        &[("lach", TuningRule::Lach), ("cdal", TuningRule::Cdal)]
    } else {
        &[("lachr", TuningRule::Lachr), ("cdalr", TuningRule::Cdalr)]
    };
    let mut rules = Vec::new();
    for &(name, rule) in names {
        if profile.k() > 0 {
            rules.push((name, tuning_rules(&profile, gamma, rule).map_err(js)?));
        }
    }
    let signal = Signal::new(theta.to_vec()).map_err(js)?;
    let out = Analysis {
        variation: variation(&signal, ro).map_err(js)?,
        knots: profile.knot_indices,
        signs: profile.signs,
        segment_lengths: profile.segment_lengths,
        rules,
    };
    serde_json::to_string(&out).map_err(|e| JsError::new(&e.to_string()))
}

/// Monte-Carlo `lambda*` for `theta`, as JSON.
#[wasm_bindgen]
pub fn lambda_star_json(theta: &[f64], r: usize, reps: usize, seed: u32) -> JsResult<String> {
    let theta = Signal::new(theta.to_vec()).map_err(js)?;
    let ls = lambda_star(&theta, order(r)?, reps, seed as u64).map_err(js)?;
    serde_json::to_string(&ls).map_err(|e| JsError::new(&e.to_string()))
}
