//! WebAssembly bindings for the static demo page. Every entry point returns
//! a JSON string; the plain functions underneath are usable (and tested)
//! natively.

use serde::Serialize;
use serde_json::{json, Value};
use toric_learn::gibbs::{fidelity_susceptibility, sample_measurements, McParams};
use toric_learn::learner::{FieldKind, FieldSpec};
use toric_learn::metrics::{fit_er_polynomial, sample_p_curve, single_qubit_error, ErPolynomial};
use toric_learn::phase::{generate_lambda, DisorderModel};
use toric_learn::{Lattice, Seed};
use wasm_bindgen::prelude::*;

/// Sampler budget small enough for an interactive page.
fn demo_mc(n_samples: usize) -> McParams {
    McParams {
        burn_in: 100,
        n_samples: n_samples.max(100),
        n_batches: 10,
        ..McParams::default()
    }
}

/// `uniform`, `negative`, `dilution:q` or `sign_flip:p`.
pub fn parse_model(s: &str) -> Result<DisorderModel, String> {
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let param = || -> Result<f64, String> {
        arg.ok_or(format!("{name} needs a parameter, e.g. {name}:0.5"))?
            .trim()
            .parse()
            .map_err(|e| format!("{s}: {e}"))
    };
    let m = match name.trim() {
        "uniform" => DisorderModel::Uniform,
        "negative" => DisorderModel::Negative,
        "dilution" => DisorderModel::BondDilution(param()?),
        "sign_flip" => DisorderModel::SignFlip(param()?),
        other => return Err(format!("unknown disorder model {other:?}")),
    };
    m.validate().map_err(|e| e.to_string())?;
    Ok(m)
}

#[derive(Serialize)]
struct CvPoint {
    beta: f64,
    cv_per_site: f64,
    err: f64,
}

pub fn cv_scan(k: usize, model: &str, beta_min: f64, beta_max: f64, n_beta: usize, n_samples: usize, seed: u64)
    -> Result<Value, String>
{
    if n_beta < 2 || !(beta_min >= 0.0 && beta_min < beta_max) {
        return Err("need n_beta ≥ 2 and 0 ≤ beta_min < beta_max".into());
    }
    let lattice = Lattice::new(k).map_err(|e| e.to_string())?;
    let model = parse_model(model)?;
    let lambda = generate_lambda(&lattice, model, Seed(seed)).map_err(|e| e.to_string())?;
    let mc = demo_mc(n_samples);
    let sites = (k * k) as f64;
    let points = (0..n_beta)
        .map(|j| {
            let beta = beta_min + (beta_max - beta_min) * j as f64 / (n_beta - 1) as f64;
            let s = fidelity_susceptibility(&lattice, &lambda, beta, &mc, Seed(seed).child(j as u64))
                .map_err(|e| e.to_string())?;
            Ok(CvPoint {
                beta,
                cv_per_site: s.heat_capacity / sites,
                err: s.heat_capacity_err / sites,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "k": k, "model": model.label(), "points": points }))
}

pub fn er_curve(k: usize, e_max: f64, n_points: usize, n_trials: usize, seed: u64) -> Result<Value, String> {
    if n_points < 10 || !(e_max > 0.0 && e_max < 0.5) {
        return Err("need at least 10 points and 0 < e_max < 0.5".into());
    }
    let lattice = Lattice::new(k).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..n_points).map(|j| e_max * j as f64 / (n_points - 1) as f64).collect();
    let curve = sample_p_curve(&lattice, &grid, n_trials, Seed(seed)).map_err(|e| e.to_string())?;
    let fit = fit_er_polynomial(&curve, Some(k)).map_err(|e| e.to_string())?;
    let published = ErPolynomial::published();
    let inverse: Vec<Value> = (0..=35)
        .map(|j| {
            let p = j as f64 / 100.0;
            json!({ "p": p, "fitted": fit.eval(p), "published": published.eval(p) })
        })
        .collect();
    Ok(json!({
        "curve": curve,
        "coefficients": fit.coefficients,
        "published": published.coefficients,
        "inverse": inverse,
    }))
}

/// Random star fields, their sampled ground-state measurements, and the
/// closed-form estimate `b ≈ arccosh √(⟨A_s A_s'⟩ / ⟨A_s⟩⟨A_s'⟩)` that is
/// exact when every other field vanishes.
pub fn explore(k: usize, scale: f64, n_samples: usize, seed: u64) -> Result<Value, String> {
    let lattice = Lattice::new(k).map_err(|e| e.to_string())?;
    let fields = FieldSpec { kind: FieldKind::Star, scale }
        .draw(&lattice, Seed(seed))
        .map_err(|e| e.to_string())?;
    let ms = sample_measurements(&lattice, &fields, &demo_mc(n_samples), Seed(seed).child(1))
        .map_err(|e| e.to_string())?;
    let estimate = (0..lattice.n_edges())
        .map(|i| {
            let [a, b, c] = ms.star_triple(&lattice, i).map_err(|e| e.to_string())?;
            let r = c / (a * b);
            let mag = if r.is_finite() && r > 1.0 { r.sqrt().acosh() } else { 0.0 };
            Ok(mag * ms.star.spin[i].signum())
        })
        .collect::<Result<Vec<f64>, String>>()?;
    let err = single_qubit_error(&ms, &ErPolynomial::published());
    Ok(json!({
        "k": k,
        "bz": fields.bz,
        "estimate": estimate,
        "stars": ms.star.stabilizer,
        "sz": ms.star.spin,
        "phase_error": err.phase,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = cvScan)]
pub fn cv_scan_js(
    k: usize,
    model: &str,
    beta_min: f64,
    beta_max: f64,
    n_beta: usize,
    n_samples: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_js(cv_scan(k, model, beta_min, beta_max, n_beta, n_samples, seed))
}

#[wasm_bindgen(js_name = erCurve)]
pub fn er_curve_js(k: usize, e_max: f64, n_points: usize, n_trials: usize, seed: u64) -> Result<String, JsError> {
    to_js(er_curve(k, e_max, n_points, n_trials, seed))
}

#[wasm_bindgen(js_name = explore)]
pub fn explore_js(k: usize, scale: f64, n_samples: usize, seed: u64) -> Result<String, JsError> {
    to_js(explore(k, scale, n_samples, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn models_parse() {
        assert_eq!(parse_model("uniform").unwrap(), DisorderModel::Uniform);
        assert_eq!(parse_model("dilution:0.6").unwrap(), DisorderModel::BondDilution(0.6));
        assert!(parse_model("sign_flip").is_err());
        assert!(parse_model("sign_flip:1.5").is_err());
        assert!(parse_model("ferro").is_err());
    }

    #[test]
    fn scan_has_one_point_per_beta() {
        let v = cv_scan(4, "uniform", 0.1, 0.5, 3, 200, 1).unwrap();
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| p["cv_per_site"].as_f64().unwrap() >= 0.0));
        assert!(cv_scan(4, "uniform", 0.5, 0.1, 3, 200, 1).is_err());
    }

    #[test]
    fn curve_fit_tracks_the_published_inverse() {
        let v = er_curve(6, 0.2, 11, 400, 3).unwrap();
        assert_eq!(v["curve"].as_array().unwrap().len(), 11);
        let at = &v["inverse"][10];
        let (fit, publ) = (at["fitted"].as_f64().unwrap(), at["published"].as_f64().unwrap());
        assert!((fit - publ).abs() < 0.01, "{fit} vs {publ}");
    }

    #[test]
    fn isolated_field_is_recovered_in_closed_form() {
        let v = explore(4, 0.0, 200, 2).unwrap();
        assert!(v["estimate"].as_array().unwrap().iter().all(|e| e.as_f64().unwrap() == 0.0));
        assert_eq!(v["phase_error"].as_f64().unwrap(), 0.0);
        let v = explore(4, 0.3, 2000, 2).unwrap();
        let est: Vec<f64> = v["estimate"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect();
        let bz: Vec<f64> = v["bz"].as_array().unwrap().iter().map(|e| e.as_f64().unwrap()).collect();
        let rmse = (est.iter().zip(&bz).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / bz.len() as f64).sqrt();
        assert!(rmse < 0.15, "{rmse}");
    }
}
