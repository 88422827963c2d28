//! Loss-based membership scores.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::synthgen::LabeledPoint;
use crate::trainers::{loss, ModelParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    #[default]
    LossBased,
}

/// Sign convention of a score. Members have low loss, so `RawLoss` scores
/// are low for members and `HigherScoreMeansMember` negates them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    HigherScoreMeansMember,
    #[default]
    RawLoss,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::HigherScoreMeansMember => Orientation::RawLoss,
            Orientation::RawLoss => Orientation::HigherScoreMeansMember,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Orientation::HigherScoreMeansMember => -1.0,
            Orientation::RawLoss => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(default)]
    pub kind: AttackKind,
    #[serde(default)]
    pub orientation: Orientation,
}

impl AttackSpec {
    pub fn raw_loss() -> Self {
        Self { kind: AttackKind::LossBased, orientation: Orientation::RawLoss }
    }

    pub fn member_high() -> Self {
        Self { kind: AttackKind::LossBased, orientation: Orientation::HigherScoreMeansMember }
    }

    pub fn score(&self, model: &ModelParams, point: &LabeledPoint) -> Result<f64> {
        score(self, model, point)
    }
}

pub fn score(attack: &AttackSpec, model: &ModelParams, point: &LabeledPoint) -> Result<f64> {
    match attack.kind {
        AttackKind::LossBased => Ok(attack.orientation.sign() * loss(model, point)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolated_point_scores_zero() {
        let m = ModelParams { weights: vec![1.0] };
        let p = LabeledPoint::new(vec![1.0], 1.0);
        assert_eq!(AttackSpec::raw_loss().score(&m, &p).unwrap(), 0.0);
        assert_eq!(AttackSpec::member_high().score(&m, &p).unwrap(), 0.0);
        let wrong = LabeledPoint::new(vec![1.0, 2.0], 1.0);
        assert!(AttackSpec::raw_loss().score(&m, &wrong).is_err());
    }

    proptest! {
        #[test]
        fn orientations_are_antisymmetric(
            w in prop::collection::vec(-5.0f64..5.0, 3),
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in -10.0f64..10.0,
        ) {
            let m = ModelParams { weights: w };
            let p = LabeledPoint::new(a, b);
            let raw = AttackSpec::raw_loss().score(&m, &p).unwrap();
            let high = AttackSpec::member_high().score(&m, &p).unwrap();
            prop_assert_eq!(high, -raw);
            prop_assert!(raw >= 0.0);
        }
    }
}
