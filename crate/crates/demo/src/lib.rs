//! Browser bindings: a zero-run ROC explorer, the DP ROC bound and the
//! Hoeffding half-width. Every function returns JSON text.

use causal_mia::estimators::{dp_roc_bound, hoeffding_halfwidth, EstimatorKind};
use causal_mia::experiment::{run_repetition, RegimeKind, ScenarioParams};
use causal_mia::{RocCurve, TrainerConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Curves are thinned to at most this many points before serialization.
const MAX_POINTS: usize = 400;

fn curve_json(roc: &RocCurve) -> Value {
    let step = roc.points.len().div_ceil(MAX_POINTS).max(1);
    let mut pts: Vec<[f64; 2]> = roc.points.iter().step_by(step).map(|p| [p.fpr, p.tpr]).collect();
    if let Some(last) = roc.points.last() {
        if pts.last() != Some(&[last.fpr, last.tpr]) {
            pts.push([last.fpr, last.tpr]);
        }
    }
    json!({ "auc": roc.auc(), "youden_sup": roc.youden_sup(), "points": pts })
}

/// Trains one ridge model on `n` members of a `dim`-dimensional problem and
/// scores them against `n` shifted non-members. Returns the one-run ROC,
/// the raw zero-run ROC and the oracle-IPW corrected zero-run ROC.
pub fn explore(dim: usize, n: usize, shift_norm: f64, ridge_lambda: f64, seed: u64) -> Result<Value, String> {
    if !(1..=2000).contains(&dim) || !(2..=3000).contains(&n) {
        return Err("need 1 <= dim <= 2000 and 2 <= n <= 3000".into());
    }
    let params = ScenarioParams {
        dim,
        teacher_norm: Some((dim as f64).sqrt()),
        shift_norm,
        trainer: TrainerConfig::ridge(ridge_lambda),
        n_members: n,
        n_nonmembers: n,
        ..ScenarioParams::ridge()
    };
    let regimes = [RegimeKind::OneRun, RegimeKind::ZeroRunRaw, RegimeKind::ZeroRunOracle];
    let out = run_repetition(&params, &regimes, &[EstimatorKind::Classical, EstimatorKind::Ipw], seed).map_err(|e| e.to_string())?;
    let pick = |r: RegimeKind, e: EstimatorKind| -> Result<Value, String> {
        let cell = out.cells.iter().find(|c| c.regime == r && c.estimator == e).ok_or("cell not computed")?;
        let (report, roc) = cell.outcome.as_ref().map_err(|m| m.clone())?;
        let mut v = curve_json(roc);
        v["ate"] = json!(report.ate);
        Ok(v)
    };
    Ok(json!({
        "onerun": pick(RegimeKind::OneRun, EstimatorKind::Classical)?,
        "raw": pick(RegimeKind::ZeroRunRaw, EstimatorKind::Classical)?,
        "corrected": pick(RegimeKind::ZeroRunOracle, EstimatorKind::Ipw)?,
    }))
}

pub fn bound(epsilon: f64, delta: f64) -> Result<Value, String> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) || !(0.0..=1.0).contains(&delta) {
        return Err("need epsilon >= 0 and 0 <= delta <= 1".into());
    }
    let b = dp_roc_bound(epsilon, delta);
    let pts: Vec<[f64; 2]> = b.points.iter().step_by(10).map(|(x, y)| [*x, *y]).collect();
    Ok(json!({ "epsilon": epsilon, "delta": delta, "points": pts }))
}

pub fn halfwidth(n1: usize, n0: usize, t: f64) -> Result<Value, String> {
    if n1 == 0 || n0 == 0 || t.is_nan() || t <= 0.0 {
        return Err("need n1, n0 >= 1 and t > 0".into());
    }
    let confidence = (1.0 - 4.0 * (-t).exp()).max(0.0);
    Ok(json!({ "halfwidth": hoeffding_halfwidth(n1, n0, t), "confidence": confidence }))
}

#[wasm_bindgen]
pub fn zero_run_explorer(dim: u32, n: u32, shift_norm: f64, ridge_lambda: f64, seed: u32) -> Result<String, JsError> {
    explore(dim as usize, n as usize, shift_norm, ridge_lambda, seed as u64).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn dp_bound(epsilon: f64, delta: f64) -> Result<String, JsError> {
    bound(epsilon, delta).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hoeffding(n1: u32, n0: u32, t: f64) -> Result<String, JsError> {
    halfwidth(n1 as usize, n0 as usize, t).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}
