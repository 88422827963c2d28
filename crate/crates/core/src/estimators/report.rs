use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    Classical,
    #[serde(rename = "IPW", alias = "Ipw")]
    Ipw,
    GFormula,
    #[serde(rename = "AIPW", alias = "Aipw")]
    Aipw,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::Classical, Self::Ipw, Self::GFormula, Self::Aipw];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Ipw => "ipw",
            Self::GFormula => "gformula",
            Self::Aipw => "aipw",
        }
    }
}

/// One row of the evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regime: String,
    pub estimator_kind: EstimatorKind,
    pub auc: f64,
    /// Average effect on raw losses.
    pub ate: f64,
    /// Keyed by `α` rendered with `{}`.
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub youden_sup: f64,
    #[serde(default)]
    pub hoeffding_halfwidth: Option<f64>,
    pub n1: usize,
    pub n0: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["regime", "estimator", "auc", "youden_sup", "ate"].iter().map(|s| s.to_string()).collect();
        h.extend(self.tpr_at_fpr.keys().map(|k| format!("tpr_at_{k}")));
        h.extend(["hoeffding_halfwidth", "n1", "n0"].iter().map(|s| s.to_string()));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.regime.clone(),
            self.estimator_kind.as_str().to_string(),
            self.auc.to_string(),
            self.youden_sup.to_string(),
            self.ate.to_string(),
        ];
        r.extend(self.tpr_at_fpr.values().map(|v| v.to_string()));
        r.push(self.hoeffding_halfwidth.map(|v| v.to_string()).unwrap_or_default());
        r.push(self.n1.to_string());
        r.push(self.n0.to_string());
        r
    }
}
