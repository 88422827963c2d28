use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DP_GRID_POINTS: usize = 1001;

/// Upper bound on the ROC of any attack against an `(ε, δ)`-DP algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpBound {
    pub epsilon: f64,
    pub delta: f64,
    /// `(fpr, max tpr)` on a uniform grid over `[0, 1]`.
    pub points: Vec<(f64, f64)>,
}

/// `min(1, e^ε x + δ, 1 − e^{−ε}(1 − δ − x))`.
pub fn dp_tpr_bound(epsilon: f64, delta: f64, x: f64) -> f64 {
    let a = epsilon.exp() * x + delta;
    let b = 1.0 - (-epsilon).exp() * (1.0 - delta - x);
    a.min(b).min(1.0)
}

pub fn dp_roc_bound(epsilon: f64, delta: f64) -> DpBound {
    let points = (0..DP_GRID_POINTS)
        .map(|k| {
            let x = k as f64 / (DP_GRID_POINTS - 1) as f64;
            (x, dp_tpr_bound(epsilon, delta, x))
        })
        .collect();
    DpBound { epsilon, delta, points }
}

impl DpBound {
    pub fn at(&self, fpr: f64) -> f64 {
        dp_tpr_bound(self.epsilon, self.delta, fpr)
    }

    /// CSV with header `fpr,tpr_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fpr", "tpr_bound"])?;
        for (x, y) in &self.points {
            w.write_record([format!("{x:e}"), format!("{y:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
