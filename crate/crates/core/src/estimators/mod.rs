//! Classical and causal evaluation metrics.
//!
//! Conventions shared by every estimator:
//! * ROC thresholds are the distinct observed scores, swept downward, with
//!   `(0, 0)` and `(1, 1)` endpoints; AUC is the trapezoidal area, which
//!   counts ties as one half.
//! * Reweighted FPR arms are self-normalized by the total non-member weight.
//! * `t̂_α` is the smallest observed score whose exceedance mass is `≤ α`.

mod dp_bound;
mod ipw;
mod outcome;
mod quantile;
mod report;
mod roc;

pub use dp_bound::{dp_roc_bound, dp_tpr_bound, DpBound, DP_GRID_POINTS};
pub use ipw::{ate_dim, evidence_halfwidth, hoeffding_halfwidth, ipw_ate, ipw_roc, ipw_tpr_at_fpr};
pub use outcome::{aipw_ate, aipw_fpr_curve, antitonic, g_formula_ate, g_formula_fpr_curve, score_grid, OutcomeModel, GRID_POINTS};
pub use quantile::{tpr_at_fpr, weighted_quantile};
pub use report::{EstimatorKind, MetricsReport};
pub use roc::{auc_pairwise, classical_roc, weighted_roc, youden_sup, RocCurve, RocPoint};
