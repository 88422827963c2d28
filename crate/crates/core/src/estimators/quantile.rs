use log::warn;

use crate::error::{Error, Result};
use crate::protocols::EvidenceSet;

/// Smallest positive-weight score `t` whose normalized exceedance mass
/// `Σ wᵢ 1{sᵢ ≥ t} / Σ wᵢ` is at most `alpha`.
///
/// When no observed score qualifies (a single record already carries more
/// than `alpha` of the mass at the top), the largest positive-weight score
/// is returned with a warning.
pub fn weighted_quantile(scores: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if scores.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: weights.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut pairs = Vec::with_capacity(scores.len());
    let mut total = 0.0;
    for (i, (&s, &w)) in scores.iter().zip(weights).enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NonFinite { what: "quantile weight", index: i });
        }
        if !s.is_finite() {
            return Err(Error::NonFinite { what: "score", index: i });
        }
        if w > 0.0 {
            pairs.push((s, w));
            total += w;
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid("all quantile weights are zero"));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Walk thresholds downward; exceedance mass only grows.
    let mut best = None;
    let mut mass = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            mass += pairs[i].1;
            i += 1;
        }
        if mass / total <= alpha {
            best = Some(t);
        } else {
            break;
        }
    }
    Ok(best.unwrap_or_else(|| {
        warn!("no observed score has exceedance mass <= {alpha}; using the largest score");
        pairs[0].0
    }))
}

/// Member fraction at or above the `(1 − α)` non-member quantile.
pub fn tpr_at_fpr(ev: &EvidenceSet, alpha: f64) -> Result<f64> {
    ev.require_both_groups()?;
    if (ev.n0 as f64) < 1.0 / alpha {
        warn!("only {} non-members for alpha = {alpha}; the quantile is coarse", ev.n0);
    }
    let non = ev.nonmember_scores();
    let t = weighted_quantile(&non, &vec![1.0; non.len()], alpha)?;
    Ok(exceedance(&ev.member_scores(), t))
}

pub(crate) fn exceedance(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|s| **s >= t).count() as f64 / scores.len() as f64
}
