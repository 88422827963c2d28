use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::EvidenceSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Points ordered by decreasing threshold, from `(0, 0)` to `(1, 1)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area.
    pub fn auc(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5).sum()
    }

    /// `max (tpr − fpr)`.
    pub fn youden_sup(&self) -> f64 {
        youden_sup(self)
    }

    /// Largest TPR among points with `fpr ≤ alpha`.
    pub fn tpr_at(&self, alpha: f64) -> f64 {
        self.points.iter().filter(|p| p.fpr <= alpha + 1e-12).map(|p| p.tpr).fold(0.0, f64::max)
    }

    /// TPR linearly interpolated at `fpr`, taking the upper end of vertical
    /// segments.
    pub fn tpr_interpolated(&self, fpr: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.fpr <= fpr && fpr <= b.fpr {
                let v = if b.fpr > a.fpr { a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr) } else { a.tpr.max(b.tpr) };
                best = best.max(v);
            }
        }
        best
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr)
    }

    /// CSV with header `fpr,tpr,threshold`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fpr", "tpr", "threshold"])?;
        for p in &self.points {
            w.write_record([fmt(p.fpr), fmt(p.tpr), fmt(p.threshold)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut points = Vec::new();
        for row in r.deserialize() {
            points.push(row?);
        }
        Ok(Self { points })
    }
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

pub fn youden_sup(curve: &RocCurve) -> f64 {
    curve.points.iter().map(|p| p.tpr - p.fpr).fold(f64::NEG_INFINITY, f64::max)
}

fn check_weights(w: &[f64], what: &'static str) -> Result<f64> {
    let mut total = 0.0;
    for (i, v) in w.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::NonFinite { what, index: i });
        }
        total += v;
    }
    Ok(total)
}

/// ROC of weighted score samples. Thresholds sweep the distinct pooled
/// scores in decreasing order; each arm is the normalized weight with score
/// at or above the threshold.
pub fn weighted_roc(members: &[f64], member_w: &[f64], nonmembers: &[f64], nonmember_w: &[f64]) -> Result<RocCurve> {
    if members.len() != member_w.len() || nonmembers.len() != nonmember_w.len() {
        return Err(Error::invalid("score and weight lengths differ"));
    }
    if members.is_empty() {
        return Err(Error::EmptyGroup { group: "member" });
    }
    if nonmembers.is_empty() {
        return Err(Error::EmptyGroup { group: "non-member" });
    }
    let w1 = check_weights(member_w, "member weight")?;
    let w0 = check_weights(nonmember_w, "non-member weight")?;
    if w1 <= 0.0 {
        return Err(Error::invalid("total member weight is zero"));
    }
    if w0 <= 0.0 {
        return Err(Error::invalid("total non-member weight is zero"));
    }
    let mut pooled: Vec<(f64, bool, f64)> = members
        .iter()
        .zip(member_w)
        .map(|(s, w)| (*s, true, *w))
        .chain(nonmembers.iter().zip(nonmember_w).map(|(s, w)| (*s, false, *w)))
        .collect();
    if pooled.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::NonFinite { what: "score", index: pooled.iter().position(|p| !p.0.is_finite()).unwrap_or(0) });
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut c1, mut c0) = (0.0, 0.0);
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                c1 += pooled[i].2;
            } else {
                c0 += pooled[i].2;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: (c0 / w0).min(1.0), tpr: (c1 / w1).min(1.0), threshold: t });
    }
    // Summation order can leave the last point a hair below 1.
    if let Some(last) = points.last_mut() {
        last.fpr = 1.0;
        last.tpr = 1.0;
    }
    Ok(RocCurve { points })
}

/// Empirical ROC by exact counting.
pub fn classical_roc(ev: &EvidenceSet) -> Result<RocCurve> {
    ev.require_both_groups()?;
    let m = ev.member_scores();
    let n = ev.nonmember_scores();
    weighted_roc(&m, &vec![1.0; m.len()], &n, &vec![1.0; n.len()])
}

/// Mann–Whitney statistic `P(Y₁ > Y₀) + ½ P(Y₁ = Y₀)`, by integer counting.
pub fn auc_pairwise(ev: &EvidenceSet) -> Result<f64> {
    ev.require_both_groups()?;
    let members = ev.member_scores();
    let mut non = ev.nonmember_scores();
    non.sort_by(f64::total_cmp);
    let mut twice: u128 = 0;
    for s in &members {
        let below = non.partition_point(|v| v < s);
        let at_or_below = non.partition_point(|v| v <= s);
        twice += 2 * below as u128 + (at_or_below - below) as u128;
    }
    Ok(twice as f64 / (2.0 * members.len() as f64 * non.len() as f64))
}
