//! Outcome regressions `μ̂₀(x) = E[Y(0) | x]` and `μ̂₀,t(x) = P(Y(0) ≥ t | x)`,
//! and the G-formula / AIPW estimators built on them.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::ipw::nonmember_odds;
use crate::estimators::roc::{RocCurve, RocPoint};
use crate::propensity::{newton_logistic, PropensityModel, PropensitySource};
use crate::protocols::EvidenceSet;
use crate::synthgen::LabeledPoint;

pub const GRID_POINTS: usize = 101;

type MeanFn = dyn Fn(&LabeledPoint) -> f64 + Send + Sync;
type ExceedFn = dyn Fn(&LabeledPoint, f64) -> f64 + Send + Sync;

/// Control-arm outcome model over a fixed ascending threshold grid.
#[derive(Clone)]
pub struct OutcomeModel {
    mean_fn: Arc<MeanFn>,
    exceed_fn: Arc<ExceedFn>,
    grid: Vec<f64>,
}

impl std::fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OutcomeModel").field("grid_len", &self.grid.len()).finish()
    }
}

/// `GRID_POINTS` thresholds spanning the pooled score range.
pub fn score_grid(ev: &EvidenceSet) -> Vec<f64> {
    let lo = ev.records.iter().map(|r| r.y).fold(f64::INFINITY, f64::min);
    let hi = ev.records.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![lo];
    }
    (0..GRID_POINTS).map(|k| lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Least non-increasing fit (pool adjacent violators).
pub fn antitonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("two blocks present");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

impl OutcomeModel {
    pub fn new(
        mean_fn: impl Fn(&LabeledPoint) -> f64 + Send + Sync + 'static,
        exceed_fn: impl Fn(&LabeledPoint, f64) -> f64 + Send + Sync + 'static,
        grid: Vec<f64>,
    ) -> Result<Self> {
        if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("threshold grid must be finite and strictly increasing"));
        }
        Ok(Self { mean_fn: Arc::new(mean_fn), exceed_fn: Arc::new(exceed_fn), grid })
    }

    /// `μ̂₀ ≡ c`, `μ̂₀,t = 1{c ≥ t}`.
    pub fn constant(c: f64, grid: Vec<f64>) -> Result<Self> {
        Self::new(move |_| c, move |_, t| if c >= t { 1.0 } else { 0.0 }, grid)
    }

    /// Covariate-free model from the non-member scores of `ev`.
    pub fn empirical(ev: &EvidenceSet) -> Result<Self> {
        ev.require_both_groups()?;
        let mut non = ev.nonmember_scores();
        non.sort_by(f64::total_cmp);
        let m = non.iter().sum::<f64>() / non.len() as f64;
        let n = non.len() as f64;
        Self::new(
            move |_| m,
            move |_, t| (non.len() - non.partition_point(|v| *v < t)) as f64 / n,
            score_grid(ev),
        )
    }

    /// Regression of non-member scores on the propensity log-odds
    /// `s = logit π̂(x)`, a balancing score: `Y(0) ⊥ A | s`.
    ///
    /// The mean is quadratic in `s` (least squares) and each threshold
    /// probability is a logistic regression on `(s, s²)`.
    pub fn balancing_score(ev: &EvidenceSet, pi: &PropensityModel) -> Result<Self> {
        ev.require_both_groups()?;
        let grid = score_grid(ev);
        let mut s = Vec::with_capacity(ev.n0);
        let mut y = Vec::with_capacity(ev.n0);
        for r in ev.records.iter().filter(|r| !r.a) {
            s.push(pi.log_odds(&r.x.features)?);
            y.push(r.y);
        }
        let n = s.len() as f64;
        let loc = s.iter().sum::<f64>() / n;
        let scale = (s.iter().map(|v| (v - loc) * (v - loc)).sum::<f64>() / n).sqrt().max(1e-12);
        let feats = move |v: f64| {
            let z = (v - loc) / scale;
            [z, z * z]
        };
        let design = DMatrix::from_fn(s.len(), 3, |i, j| if j == 0 { 1.0 } else { feats(s[i])[j - 1] });

        let yv = DVector::from_column_slice(&y);
        let normal = design.tr_mul(&design);
        let mean_coef = normal
            .clone()
            .cholesky()
            .map(|c| c.solve(&design.tr_mul(&yv)))
            .unwrap_or_else(|| DVector::from_vec(vec![yv.mean(), 0.0, 0.0]));

        let mut table = Vec::with_capacity(grid.len());
        for &t in &grid {
            let labels: Vec<f64> = y.iter().map(|v| if *v >= t { 1.0 } else { 0.0 }).collect();
            let ones = labels.iter().sum::<f64>();
            let coef = if ones == 0.0 {
                Coef::Constant(0.0)
            } else if ones == n {
                Coef::Constant(1.0)
            } else {
                let fit = newton_logistic(&design, &labels, 1.0, 50, 1e-10);
                Coef::Logistic([fit.coef[0], fit.coef[1], fit.coef[2]])
            };
            table.push(coef);
        }

        let pi_mean = pi.clone();
        let pi_exceed = pi.clone();
        let grid_lookup = grid.clone();
        Self::new(
            move |x| {
                let Ok(v) = pi_mean.log_odds(&x.features) else { return f64::NAN };
                let f = feats(v);
                mean_coef[0] + mean_coef[1] * f[0] + mean_coef[2] * f[1]
            },
            move |x, t| {
                let Ok(v) = pi_exceed.log_odds(&x.features) else { return f64::NAN };
                let f = feats(v);
                match table[nearest(&grid_lookup, t)] {
                    Coef::Constant(c) => c,
                    Coef::Logistic(c) => sigmoid(c[0] + c[1] * f[0] + c[2] * f[1]),
                }
            },
            grid,
        )
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mean(&self, x: &LabeledPoint) -> f64 {
        (self.mean_fn)(x)
    }

    /// Raw `μ̂₀,t(x)` at the grid point nearest `t`.
    pub fn exceed_at(&self, x: &LabeledPoint, t: f64) -> f64 {
        (self.exceed_fn)(x, self.grid[nearest(&self.grid, t)])
    }

    /// `μ̂₀,t(x)` over the grid, clamped to `[0, 1]` and repaired to be
    /// non-increasing in `t`.
    pub fn exceed_profile(&self, x: &LabeledPoint) -> Vec<f64> {
        let raw: Vec<f64> = self.grid.iter().map(|&t| (self.exceed_fn)(x, t).clamp(0.0, 1.0)).collect();
        antitonic(&raw)
    }
}

#[derive(Clone, Copy)]
enum Coef {
    Constant(f64),
    Logistic([f64; 3]),
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn nearest(grid: &[f64], t: f64) -> usize {
    let i = grid.partition_point(|g| *g < t);
    if i == 0 {
        0
    } else if i == grid.len() {
        grid.len() - 1
    } else if (grid[i] - t) < (t - grid[i - 1]) {
        i
    } else {
        i - 1
    }
}

/// `(1/n₁) Σ_{A=1} (Y − μ̂₀(X))`.
pub fn g_formula_ate(ev: &EvidenceSet, om: &OutcomeModel) -> Result<f64> {
    ev.require_both_groups()?;
    let mut total = 0.0;
    for (i, r) in ev.records.iter().enumerate().filter(|(_, r)| r.a) {
        let m = om.mean(&r.x);
        if !m.is_finite() {
            return Err(Error::NonFinite { what: "outcome prediction", index: i });
        }
        total += r.y - m;
    }
    Ok(total / ev.n1 as f64)
}

/// G-formula minus `(1/n₁) Σ_{A=0} π̂/(1−π̂) (Y − μ̂₀(X))`.
pub fn aipw_ate<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P, om: &OutcomeModel) -> Result<f64> {
    let g = g_formula_ate(ev, om)?;
    let w = nonmember_odds(ev, pi)?;
    let mut correction = 0.0;
    for ((i, r), w) in ev.records.iter().enumerate().filter(|(_, r)| !r.a).zip(w) {
        let m = om.mean(&r.x);
        if !m.is_finite() {
            return Err(Error::NonFinite { what: "outcome prediction", index: i });
        }
        correction += w * (r.y - m);
    }
    Ok(g - correction / ev.n1 as f64)
}

/// ROC whose FPR arm is `(1/n₁) Σ_{A=1} μ̂₀,t(X)` on the model grid.
pub fn g_formula_fpr_curve(ev: &EvidenceSet, om: &OutcomeModel) -> Result<RocCurve> {
    outcome_curve(ev, om, None::<&[f64]>)
}

/// As [`g_formula_fpr_curve`] with the augmentation term
/// `−(1/n₁) Σ_{A=0} π̂/(1−π̂) (1{Y ≥ t} − μ̂₀,t(X))`.
pub fn aipw_fpr_curve<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P, om: &OutcomeModel) -> Result<RocCurve> {
    outcome_curve(ev, om, Some(pi))
}

fn outcome_curve<P: PropensitySource + ?Sized>(ev: &EvidenceSet, om: &OutcomeModel, pi: Option<&P>) -> Result<RocCurve> {
    ev.require_both_groups()?;
    let grid = om.grid();
    let k = grid.len();
    let members = ev.member_scores();
    let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if lo < grid[0] || hi > grid[k - 1] {
        warn!("outcome grid [{}, {}] does not cover member scores [{lo}, {hi}]; using nearest grid points", grid[0], grid[k - 1]);
    }

    let n1 = ev.n1 as f64;
    let mut fpr = vec![0.0; k];
    for (i, r) in ev.records.iter().enumerate().filter(|(_, r)| r.a) {
        let prof = om.exceed_profile(&r.x);
        if prof.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome prediction", index: i });
        }
        fpr.iter_mut().zip(&prof).for_each(|(f, p)| *f += p / n1);
    }
    if let Some(pi) = pi {
        let w = nonmember_odds(ev, pi)?;
        for ((i, r), w) in ev.records.iter().enumerate().filter(|(_, r)| !r.a).zip(w) {
            let prof = om.exceed_profile(&r.x);
            if prof.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "outcome prediction", index: i });
            }
            for ((f, p), &t) in fpr.iter_mut().zip(&prof).zip(grid) {
                let hit = if r.y >= t { 1.0 } else { 0.0 };
                *f -= w * (hit - p) / n1;
            }
        }
    }

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let mut running = 0.0f64;
    for j in (0..k).rev() {
        let t = grid[j];
        running = running.max(fpr[j].clamp(0.0, 1.0));
        let tpr = members.iter().filter(|s| **s >= t).count() as f64 / n1;
        points.push(RocPoint { fpr: running, tpr, threshold: t });
    }
    points.push(RocPoint { fpr: 1.0, tpr: 1.0, threshold: f64::NEG_INFINITY });
    Ok(RocCurve { points })
}
