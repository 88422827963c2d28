use crate::error::{Error, Result};
use crate::estimators::quantile::{exceedance, weighted_quantile};
use crate::estimators::roc::{weighted_roc, RocCurve};
use crate::propensity::PropensitySource;
use crate::protocols::EvidenceSet;

/// Difference of group means.
pub fn ate_dim(ev: &EvidenceSet) -> Result<f64> {
    ev.require_both_groups()?;
    let m = ev.member_scores();
    let n = ev.nonmember_scores();
    Ok(mean(&m) - mean(&n))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `√(2t/n₁) + √(2t/n₀)`, valid at confidence `1 − 4e⁻ᵗ` for scores in `[0, 1]`.
pub fn hoeffding_halfwidth(n1: usize, n0: usize, t: f64) -> f64 {
    (2.0 * t / n1 as f64).sqrt() + (2.0 * t / n0 as f64).sqrt()
}

/// Hoeffding half-width for an evidence set whose scores are normalized.
pub fn evidence_halfwidth(ev: &EvidenceSet, t: f64) -> Result<f64> {
    if !ev.normalized {
        return Err(Error::NotNormalized);
    }
    ev.require_both_groups()?;
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    Ok(hoeffding_halfwidth(ev.n1, ev.n0, t))
}

/// Odds `π̂/(1 − π̂)` of every non-member, in record order.
pub(crate) fn nonmember_odds<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P) -> Result<Vec<f64>> {
    let p = pi.propensities(ev)?;
    let mut out = Vec::with_capacity(ev.n0);
    for (i, (r, p)) in ev.records.iter().zip(p).enumerate() {
        if r.a {
            continue;
        }
        let w = p / (1.0 - p);
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NonFinite { what: "ipw weight", index: i });
        }
        out.push(w);
    }
    Ok(out)
}

/// `(1/n₁)Σ_{A=1} Y − (1/n₀)Σ_{A=0} π̂/(1−π̂) Y`.
pub fn ipw_ate<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P) -> Result<f64> {
    ev.require_both_groups()?;
    let w = nonmember_odds(ev, pi)?;
    let non = ev.nonmember_scores();
    let weighted: f64 = w.iter().zip(&non).map(|(w, y)| w * y).sum();
    Ok(mean(&ev.member_scores()) - weighted / ev.n0 as f64)
}

/// ROC with the non-member arm reweighted by the odds (self-normalized).
pub fn ipw_roc<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P) -> Result<RocCurve> {
    ev.require_both_groups()?;
    let w = nonmember_odds(ev, pi)?;
    let m = ev.member_scores();
    weighted_roc(&m, &vec![1.0; m.len()], &ev.nonmember_scores(), &w)
}

/// Member fraction at or above the odds-weighted non-member quantile.
pub fn ipw_tpr_at_fpr<P: PropensitySource + ?Sized>(ev: &EvidenceSet, pi: &P, alpha: f64) -> Result<f64> {
    ev.require_both_groups()?;
    let w = nonmember_odds(ev, pi)?;
    let t = weighted_quantile(&ev.nonmember_scores(), &w, alpha)?;
    Ok(exceedance(&ev.member_scores(), t))
}
