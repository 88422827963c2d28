//! Propensity scores `π(x) = P(A = 1 | X = x)`: oracle, constant and
//! logistic models, cross-fitting, overlap clipping and the `Δ_π̂`
//! consistency diagnostic.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::EvidenceSet;
use crate::rng::splitmix64;
use crate::synthgen::Dataset;

pub const DEFAULT_ETA: f64 = 0.01;

/// Every record fitted beyond probability `1 − 1e-6` on its own side.
const SATURATED_LOGIT: f64 = 13.8;
/// Standardized slopes above this magnitude signal (quasi-)separation.
const SEPARATION_LIMIT: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityKind {
    Oracle,
    Logistic,
    Constant,
}

/// `x ↦ π̂(x)`, clamped to `[floor, ceiling]`.
///
/// Oracle and logistic models are affine in log-odds: `weights[0]` is the
/// intercept and `weights[1..]` the slope over the feature vector. A constant
/// model stores its value in `weights[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub kind: PropensityKind,
    pub weights: Vec<f64>,
    pub ceiling: f64,
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub separation_warning: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl PropensityModel {
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("constant propensity {p} outside [0, 1]")));
        }
        Ok(Self {
            kind: PropensityKind::Constant,
            weights: vec![p],
            ceiling: 1.0,
            floor: 0.0,
            provenance: format!("constant {p}"),
            separation_warning: false,
        })
    }

    pub fn affine(kind: PropensityKind, weights: Vec<f64>, provenance: impl Into<String>) -> Self {
        Self {
            kind,
            weights,
            ceiling: 1.0,
            floor: 0.0,
            provenance: provenance.into(),
            separation_warning: false,
        }
    }

    /// Unclamped log-odds. Constant models return `logit(p)`.
    pub fn log_odds(&self, features: &[f64]) -> Result<f64> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "feature", index: 0 });
        }
        match self.kind {
            PropensityKind::Constant => {
                let p = self.weights[0];
                Ok((p / (1.0 - p)).ln())
            }
            _ => {
                let slope = &self.weights[1..];
                if slope.len() != features.len() {
                    return Err(Error::DimensionMismatch { expected: slope.len(), found: features.len() });
                }
                Ok(self.weights[0] + slope.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
            }
        }
    }

    pub fn evaluate_features(&self, features: &[f64]) -> Result<f64> {
        let raw = match self.kind {
            PropensityKind::Constant => {
                if features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "feature", index: 0 });
                }
                self.weights[0]
            }
            _ => sigmoid(self.log_odds(features)?),
        };
        Ok(raw.clamp(self.floor, self.ceiling))
    }

    /// Odds `π̂/(1 − π̂)`, the IPW weight of a non-member.
    pub fn odds(&self, features: &[f64]) -> Result<f64> {
        let p = self.evaluate_features(features)?;
        Ok(p / (1.0 - p))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Anything that assigns a propensity to every record of an evidence set.
pub trait PropensitySource {
    fn propensities(&self, ev: &EvidenceSet) -> Result<Vec<f64>>;
}

impl PropensitySource for PropensityModel {
    fn propensities(&self, ev: &EvidenceSet) -> Result<Vec<f64>> {
        ev.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                self.evaluate_features(&r.x.features).map_err(|e| match e {
                    Error::NonFinite { what, .. } => Error::NonFinite { what, index: i },
                    other => other,
                })
            })
            .collect()
    }
}

impl PropensitySource for [f64] {
    fn propensities(&self, ev: &EvidenceSet) -> Result<Vec<f64>> {
        if self.len() != ev.records.len() {
            return Err(Error::DimensionMismatch { expected: ev.records.len(), found: self.len() });
        }
        Ok(self.to_vec())
    }
}

impl PropensitySource for Vec<f64> {
    fn propensities(&self, ev: &EvidenceSet) -> Result<Vec<f64>> {
        self.as_slice().propensities(ev)
    }
}

/// Caps evaluations at `1 − η` and floors them at `min(η, 1 − η)`.
pub fn clip(model: &PropensityModel, eta: f64) -> PropensityModel {
    let mut out = model.clone();
    out.ceiling = 1.0 - eta;
    out.floor = eta.min(1.0 - eta);
    out
}

pub fn clip_value(p: f64, eta: f64) -> f64 {
    p.clamp(eta.min(1.0 - eta), 1.0 - eta)
}

/// Monte Carlo `E[|π/(1−π) − π̂/(1−π̂)| | A = 0]` over a non-member sample.
pub fn delta_pi(hat: &PropensityModel, oracle: &PropensityModel, nonmembers: &Dataset) -> Result<f64> {
    if nonmembers.is_empty() {
        return Err(Error::invalid("delta_pi needs a non-empty sample"));
    }
    let mut total = 0.0;
    for p in &nonmembers.points {
        total += (oracle.odds(&p.features)? - hat.odds(&p.features)?).abs();
    }
    Ok(total / nonmembers.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Ridge strength on the standardized slopes, in units of the summed
    /// cross-entropy (1.0 matches a unit inverse-regularization `C`).
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, l2: 1.0, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LogisticFit {
    /// Intercept first.
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn objective(design: &DMatrix<f64>, y: &[f64], coef: &DVector<f64>, l2: f64) -> f64 {
    let n = y.len() as f64;
    let eta = design * coef;
    let nll: f64 = eta.iter().zip(y).map(|(e, t)| softplus(*e) - t * e).sum();
    let pen: f64 = coef.iter().skip(1).map(|c| c * c).sum::<f64>();
    (nll + 0.5 * l2 * pen) / n
}

/// Damped Newton on the mean penalized cross-entropy. `design` carries the
/// intercept column first; the intercept is not penalized.
pub(crate) fn newton_logistic(design: &DMatrix<f64>, y: &[f64], l2: f64, max_iter: usize, tol: f64) -> LogisticFit {
    let (n, p) = design.shape();
    let nf = n as f64;
    let mut coef = DVector::<f64>::zeros(p);
    let mut current = objective(design, y, &coef, l2);
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let eta = design * &coef;
        let prob: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let resid = DVector::from_iterator(n, prob.iter().zip(y).map(|(p, t)| p - t));
        let mut grad = design.tr_mul(&resid);
        for j in 1..p {
            grad[j] += l2 * coef[j];
        }
        grad /= nf;
        if grad.norm() <= tol {
            converged = true;
            break;
        }

        let mut weighted = design.clone();
        for (i, pr) in prob.iter().enumerate() {
            let s = (pr * (1.0 - pr)).sqrt();
            weighted.row_mut(i).scale_mut(s);
        }
        // `transpose() *` takes the blocked gemm path; `tr_mul` does not.
        let mut hess = weighted.transpose() * &weighted;
        for j in 1..p {
            hess[(j, j)] += l2;
        }
        hess /= nf;

        let direction = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => {
                let jitter = 1e-8 * (1.0 + hess.diagonal().amax());
                let mut h = hess;
                for j in 0..p {
                    h[(j, j)] += jitter;
                }
                match h.cholesky() {
                    Some(ch) => -ch.solve(&grad),
                    None => -grad.clone(),
                }
            }
        };

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &coef + &direction * step;
            let value = objective(design, y, &trial, l2);
            if value.is_finite() && value <= current {
                coef = trial;
                current = value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Newton direction failed to descend; fall back to a gradient step.
            let mut step = 1.0;
            for _ in 0..60 {
                let trial = &coef - &grad * step;
                let value = objective(design, y, &trial, l2);
                if value.is_finite() && value < current {
                    coef = trial;
                    current = value;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }

    LogisticFit { coef: coef.iter().copied().collect(), iterations, converged }
}

/// Logistic regression of membership on the feature vector, fit by damped
/// Newton iterations on standardized features. The returned weights are in
/// the original feature scale.
pub fn fit_logistic(member_x: &[Vec<f64>], nonmember_x: &[Vec<f64>], cfg: &LogisticConfig) -> Result<PropensityModel> {
    if member_x.is_empty() || nonmember_x.is_empty() {
        return Err(Error::invalid("logistic fit needs both members and non-members"));
    }
    let dim = member_x[0].len();
    let rows: Vec<&Vec<f64>> = member_x.iter().chain(nonmember_x).collect();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "feature", index: i });
        }
    }
    let n = rows.len();
    let nf = n as f64;
    let mut mean = vec![0.0; dim];
    for r in &rows {
        mean.iter_mut().zip(r.iter()).for_each(|(m, x)| *m += x / nf);
    }
    let mut sd = vec![0.0; dim];
    for r in &rows {
        sd.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (x, m))| *s += (x - m) * (x - m) / nf);
    }
    sd.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });

    let design = DMatrix::from_fn(n, dim + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (rows[i][j - 1] - mean[j - 1]) / sd[j - 1]
        }
    });
    let y: Vec<f64> = (0..n).map(|i| if i < member_x.len() { 1.0 } else { 0.0 }).collect();
    let fit = newton_logistic(&design, &y, cfg.l2, cfg.max_iter, cfg.tol);

    let eta = &design * DVector::from_column_slice(&fit.coef);
    let saturated = eta.iter().zip(&y).all(|(e, y)| if *y > 0.5 { *e > SATURATED_LOGIT } else { *e < -SATURATED_LOGIT });
    let separated = saturated || fit.coef[1..].iter().any(|c| c.abs() > SEPARATION_LIMIT);
    if separated {
        warn!("logistic propensity fit looks separated; clip before weighting");
    }
    if !fit.converged {
        warn!("logistic propensity fit stopped after {} iterations without converging", fit.iterations);
    }

    let mut weights = Vec::with_capacity(dim + 1);
    let mut intercept = fit.coef[0];
    for j in 0..dim {
        intercept -= fit.coef[j + 1] * mean[j] / sd[j];
    }
    weights.push(intercept);
    weights.extend((0..dim).map(|j| fit.coef[j + 1] / sd[j]));

    let mut model = PropensityModel::affine(
        PropensityKind::Logistic,
        weights,
        format!(
            "logistic l2={} n1={} n0={} iterations={} converged={} seed={}",
            cfg.l2,
            member_x.len(),
            nonmember_x.len(),
            fit.iterations,
            fit.converged,
            cfg.seed
        ),
    );
    model.separation_warning = separated;
    Ok(model)
}

/// Partition of evidence records into `k` folds of near-equal size.
///
/// Records are ranked by a seeded hash of their content, so the plan (and
/// the order in which training rows are fed to the fit) does not depend on
/// where a record sits in the evidence set.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
    order: Vec<usize>,
}

fn record_key(seed: u64, ev: &EvidenceSet, i: usize) -> u64 {
    let r = &ev.records[i];
    let mut h = splitmix64(seed ^ u64::from(r.a));
    h = splitmix64(h ^ r.x.label.to_bits());
    for v in &r.x.features {
        h = splitmix64(h ^ v.to_bits());
    }
    h
}

impl FoldPlan {
    pub fn for_evidence(ev: &EvidenceSet, k: usize, seed: u64) -> Result<Self> {
        let n = ev.records.len();
        if k < 2 {
            return Err(Error::invalid("cross-fitting needs k >= 2"));
        }
        if k > n {
            return Err(Error::invalid(format!("k = {k} exceeds {n} records")));
        }
        if k == n {
            warn!("fold plan with k = n is leave-one-out; expect {n} fits");
        }
        let keys: Vec<u64> = (0..n).map(|i| record_key(seed, ev, i)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| keys[i].cmp(&keys[j]).then_with(|| ev.records[i].y.total_cmp(&ev.records[j].y)).then(i.cmp(&j)));
        let mut assignment = vec![0; n];
        for (rank, &i) in order.iter().enumerate() {
            assignment[i] = rank % k;
        }
        Ok(Self { k, assignment, seed, order })
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Per-record out-of-fold propensities plus the fold models.
#[derive(Clone, Debug)]
pub struct CrossFit {
    pub propensities: Vec<f64>,
    pub fold_models: Vec<PropensityModel>,
    /// Coefficient average of the fold models, for diagnostics and as a
    /// single balancing score.
    pub averaged: PropensityModel,
}

impl CrossFit {
    pub fn clipped(&self, eta: f64) -> CrossFit {
        CrossFit {
            propensities: self.propensities.iter().map(|p| clip_value(*p, eta)).collect(),
            fold_models: self.fold_models.iter().map(|m| clip(m, eta)).collect(),
            averaged: clip(&self.averaged, eta),
        }
    }
}

impl PropensitySource for CrossFit {
    fn propensities(&self, ev: &EvidenceSet) -> Result<Vec<f64>> {
        self.propensities.propensities(ev)
    }
}

/// Fits one logistic model per fold on the records outside it and scores
/// the records inside it with that model.
pub fn cross_fit(ev: &EvidenceSet, plan: &FoldPlan, cfg: &LogisticConfig) -> Result<CrossFit> {
    if plan.assignment.len() != ev.records.len() {
        return Err(Error::DimensionMismatch { expected: ev.records.len(), found: plan.assignment.len() });
    }
    let mut propensities = vec![f64::NAN; ev.records.len()];
    let mut fold_models = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let mut members = Vec::new();
        let mut nonmembers = Vec::new();
        for &i in &plan.order {
            if plan.assignment[i] == fold {
                continue;
            }
            let r = &ev.records[i];
            if r.a {
                members.push(r.x.features.clone());
            } else {
                nonmembers.push(r.x.features.clone());
            }
        }
        if members.is_empty() || nonmembers.is_empty() {
            return Err(Error::SingleClassFold { fold });
        }
        let mut model = fit_logistic(&members, &nonmembers, cfg)?;
        model.provenance = format!("fold {fold}/{}: {}", plan.k, model.provenance);
        for (i, r) in ev.records.iter().enumerate() {
            if plan.assignment[i] == fold {
                propensities[i] = model.evaluate_features(&r.x.features)?;
            }
        }
        fold_models.push(model);
    }
    let dim = fold_models[0].weights.len();
    let mut avg = vec![0.0; dim];
    for m in &fold_models {
        avg.iter_mut().zip(&m.weights).for_each(|(a, w)| *a += w / plan.k as f64);
    }
    let mut averaged = PropensityModel::affine(
        PropensityKind::Logistic,
        avg,
        format!("average of {} cross-fit folds, seed={}", plan.k, plan.seed),
    );
    averaged.separation_warning = fold_models.iter().any(|m| m.separation_warning);
    Ok(CrossFit { propensities, fold_models, averaged })
}
