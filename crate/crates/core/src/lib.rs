//! Causal evaluation of membership inference attacks.
//!
//! Evidence `(X, A, Y)` is collected under one of three regimes (multi-run,
//! one-run, zero-run) and summarised with classical metrics or with their
//! causal counterparts. Under distribution shift between members and
//! non-members the causal metrics are recovered with inverse probability
//! weighting, the G-formula or AIPW.
//!
//! The crate also ships the synthetic Gaussian data-generating process, the
//! two training algorithms that get attacked (closed-form ridge and DP-SGD),
//! propensity-score fitting with cross-fitting, and empirical stability
//! probes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod error;
pub mod estimators;
pub mod experiment;
mod par;
pub mod propensity;
pub mod protocols;
pub mod rng;
pub mod stability;
pub mod synthgen;
pub mod trainers;

pub use attacks::{AttackKind, AttackSpec, Orientation};
pub use error::{Error, Result};
pub use estimators::{MetricsReport, RocCurve};
pub use propensity::{PropensityModel, PropensitySource};
pub use protocols::{AssignmentMode, EvidenceRecord, EvidenceSet, Regime};
pub use synthgen::{Dataset, LabeledPoint, ProblemSpec};
pub use trainers::{ModelParams, Trainer, TrainerConfig, TrainerVariant};
