//! Evidence collection: multi-run, one-run and zero-run.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{AttackSpec, Orientation};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::rng::{self, derive_seed};
use crate::synthgen::{sample_members, Dataset, LabeledPoint, ProblemSpec};
use crate::trainers::{ModelParams, RidgeSolver, Trainer, TrainerConfig, TrainerVariant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    MultiRun,
    OneRun,
    ZeroRun,
}

/// How membership bits are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Independent fair coins.
    Bernoulli,
    /// First half members, second half non-members.
    #[default]
    BalancedSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub x: LabeledPoint,
    pub a: bool,
    pub y: f64,
}

impl EvidenceRecord {
    /// First 16 hex digits of SHA-256 over the little-endian features and label.
    pub fn feature_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.x.features {
            h.update(v.to_le_bytes());
        }
        h.update(self.x.label.to_le_bytes());
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub records: Vec<EvidenceRecord>,
    pub regime: Regime,
    pub n1: usize,
    pub n0: usize,
    pub seed: Option<u64>,
    pub orientation: Orientation,
    /// Scores lie in `[0, 1]`; required for Hoeffding bands.
    #[serde(default)]
    pub normalized: bool,
}

#[derive(Serialize)]
struct RecordSummary<'a> {
    index: usize,
    a: bool,
    y: f64,
    feature_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<&'a LabeledPoint>,
}

#[derive(Serialize)]
struct EvidenceSummary<'a> {
    regime: Regime,
    n1: usize,
    n0: usize,
    seed: Option<u64>,
    orientation: Orientation,
    normalized: bool,
    records: Vec<RecordSummary<'a>>,
}

impl EvidenceSet {
    pub fn new(records: Vec<EvidenceRecord>, regime: Regime, seed: Option<u64>, orientation: Orientation) -> Result<Self> {
        if let Some(i) = records.iter().position(|r| !r.y.is_finite()) {
            return Err(Error::NonFinite { what: "score", index: i });
        }
        let n1 = records.iter().filter(|r| r.a).count();
        let n0 = records.len() - n1;
        Ok(Self { records, regime, n1, n0, seed, orientation, normalized: false })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Errors unless both groups are present.
    pub fn require_both_groups(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::EmptyGroup { group: "member" });
        }
        if self.n0 == 0 {
            return Err(Error::EmptyGroup { group: "non-member" });
        }
        Ok(())
    }

    pub fn member_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.a).map(|r| r.y).collect()
    }

    pub fn nonmember_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| !r.a).map(|r| r.y).collect()
    }

    /// Copy with scores in `orientation`.
    pub fn reoriented(&self, orientation: Orientation) -> EvidenceSet {
        let mut out = self.clone();
        if orientation != self.orientation {
            for r in &mut out.records {
                r.y = -r.y;
            }
            out.orientation = orientation;
            out.normalized = false;
        }
        out
    }

    /// Copy with scores mapped affinely onto `[0, 1]` over the pooled range.
    /// A constant score vector maps to zeros.
    pub fn min_max_normalized(&self) -> EvidenceSet {
        let lo = self.records.iter().map(|r| r.y).fold(f64::INFINITY, f64::min);
        let hi = self.records.iter().map(|r| r.y).fold(f64::NEG_INFINITY, f64::max);
        let mut out = self.clone();
        let span = hi - lo;
        for r in &mut out.records {
            r.y = if span > 0.0 { ((r.y - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
        out.normalized = true;
        out
    }

    /// Sets the normalized flag after checking every score is in `[0, 1]`.
    pub fn mark_normalized(mut self) -> Result<EvidenceSet> {
        if let Some(i) = self.records.iter().position(|r| !(0.0..=1.0).contains(&r.y)) {
            return Err(Error::invalid(format!("score at record {i} lies outside [0, 1]")));
        }
        self.normalized = true;
        Ok(self)
    }

    /// CSV with header `index,a,y,feature_hash`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "a", "y", "feature_hash"])?;
        for (i, r) in self.records.iter().enumerate() {
            w.write_record([i.to_string(), u8::from(r.a).to_string(), format!("{:e}", r.y), r.feature_hash()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON document; record features are included only with `dump_features`.
    pub fn to_json(&self, dump_features: bool) -> Result<String> {
        let summary = EvidenceSummary {
            regime: self.regime,
            n1: self.n1,
            n0: self.n0,
            seed: self.seed,
            orientation: self.orientation,
            normalized: self.normalized,
            records: self
                .records
                .iter()
                .enumerate()
                .map(|(index, r)| RecordSummary {
                    index,
                    a: r.a,
                    y: r.y,
                    feature_hash: r.feature_hash(),
                    x: dump_features.then_some(&r.x),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&summary)?)
    }

    /// Reads a document written with `dump_features`.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Rec {
            a: bool,
            y: f64,
            x: LabeledPoint,
        }
        #[derive(Deserialize)]
        struct Doc {
            regime: Regime,
            seed: Option<u64>,
            orientation: Orientation,
            #[serde(default)]
            normalized: bool,
            records: Vec<Rec>,
        }
        let doc: Doc = serde_json::from_str(s)?;
        let records = doc.records.into_iter().map(|r| EvidenceRecord { x: r.x, a: r.a, y: r.y }).collect();
        let ev = EvidenceSet::new(records, doc.regime, doc.seed, doc.orientation)?;
        if doc.normalized {
            ev.mark_normalized()
        } else {
            Ok(ev)
        }
    }
}

fn assign(mode: AssignmentMode, i: usize, n: usize, seed: u64) -> bool {
    match mode {
        AssignmentMode::BalancedSplit => i < n / 2,
        AssignmentMode::Bernoulli => rng::from_seed(seed).random_bool(0.5),
    }
}

fn check_mode(mode: AssignmentMode, n: usize, what: &str) -> Result<()> {
    if mode == AssignmentMode::BalancedSplit && !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("balanced split needs an even {what}, got {n}")));
    }
    Ok(())
}

/// Prepared multi-run experiment: the base set `D` is drawn once, and run
/// `i` depends only on `(seed, i)`.
pub struct MultiRunPlan<'a> {
    spec: &'a ProblemSpec,
    trainer: &'a TrainerConfig,
    attack: AttackSpec,
    mode: AssignmentMode,
    n_eval: usize,
    seed: u64,
    base: Dataset,
    solver: Option<RidgeSolver>,
}

impl<'a> MultiRunPlan<'a> {
    pub fn prepare(
        spec: &'a ProblemSpec,
        trainer: &'a TrainerConfig,
        attack: AttackSpec,
        base_train_size: usize,
        n_eval: usize,
        mode: AssignmentMode,
        seed: u64,
    ) -> Result<Self> {
        if n_eval < 2 {
            return Err(Error::invalid("multi-run needs n_eval >= 2"));
        }
        check_mode(mode, n_eval, "n_eval")?;
        trainer.validate()?;
        let base = if base_train_size == 0 {
            Dataset::empty(spec.dim)
        } else {
            sample_members(spec, base_train_size, derive_seed(seed, 0))?
        };
        // Ridge is deterministic, so every run shares one factorization of D.
        let solver = match trainer.variant {
            TrainerVariant::RidgeClosedForm => Some(RidgeSolver::new(&base, trainer.ridge_lambda)?),
            TrainerVariant::DpSgd => None,
        };
        Ok(Self { spec, trainer, attack, mode, n_eval, seed, base, solver })
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn n_eval(&self) -> usize {
        self.n_eval
    }

    /// Evaluation point, membership bit, fresh model and score of run `i`.
    pub fn run(&self, i: usize) -> Result<EvidenceRecord> {
        let run_seed = derive_seed(derive_seed(self.seed, 1), i as u64);
        let x = sample_members(self.spec, 1, derive_seed(run_seed, 0))?.points.remove(0);
        let a = assign(self.mode, i, self.n_eval, derive_seed(run_seed, 1));
        let model = self.train(&x, a, derive_seed(run_seed, 2)).map_err(|e| Error::Training { run: i, source: Box::new(e) })?;
        let y = self.attack.score(&model, &x)?;
        Ok(EvidenceRecord { x, a, y })
    }

    fn train(&self, x: &LabeledPoint, include: bool, seed: u64) -> Result<ModelParams> {
        match (&self.solver, include) {
            (Some(s), true) => s.with_point(x),
            (Some(s), false) => Ok(s.base_model()),
            (None, true) => self.trainer.train(&self.base.with_point(x)?, seed),
            (None, false) => self.trainer.train(&self.base, seed),
        }
    }

    /// All runs, assembled in run-index order.
    pub fn collect(&self) -> Result<EvidenceSet> {
        let records = map_indexed(self.n_eval, |i| self.run(i)).into_iter().collect::<Result<Vec<_>>>()?;
        EvidenceSet::new(records, Regime::MultiRun, Some(self.seed), self.attack.orientation)
    }
}

/// One model per evaluation point, trained on `D ∪ {x}` or on `D`.
///
/// Under `BalancedSplit` the first `n_eval/2` runs include their point and
/// each remaining run scores its own fresh draw against a model trained
/// without it.
pub fn run_multirun(
    spec: &ProblemSpec,
    trainer: &TrainerConfig,
    attack: AttackSpec,
    base_train_size: usize,
    n_eval: usize,
    mode: AssignmentMode,
    seed: u64,
) -> Result<EvidenceSet> {
    MultiRunPlan::prepare(spec, trainer, attack, base_train_size, n_eval, mode, seed)?.collect()
}

pub struct OneRunOutput {
    pub evidence: EvidenceSet,
    pub model: ModelParams,
    /// Candidates that entered training, in candidate order.
    pub included: Dataset,
    pub excluded: Dataset,
}

/// One model trained on the included candidates (plus `base`), with every
/// candidate scored against it.
pub fn run_onerun_collect(
    spec: &ProblemSpec,
    trainer: &dyn Trainer,
    attack: AttackSpec,
    n: usize,
    mode: AssignmentMode,
    base: Option<&Dataset>,
    seed: u64,
) -> Result<OneRunOutput> {
    if n < 2 {
        return Err(Error::invalid("one-run needs n >= 2"));
    }
    check_mode(mode, n, "candidate count")?;
    let candidates = sample_members(spec, n, derive_seed(seed, 0))?;
    let mut coin = rng::from_seed(derive_seed(seed, 1));
    let bits: Vec<bool> = (0..n)
        .map(|i| match mode {
            AssignmentMode::BalancedSplit => i < n / 2,
            AssignmentMode::Bernoulli => coin.random_bool(0.5),
        })
        .collect();
    let mut included = Dataset::empty(spec.dim);
    let mut excluded = Dataset::empty(spec.dim);
    for (p, &a) in candidates.points.iter().zip(&bits) {
        if a {
            included.points.push(p.clone());
        } else {
            excluded.points.push(p.clone());
        }
    }
    let training = match base {
        Some(b) => b.union(&included)?,
        None => included.clone(),
    };
    let model = trainer.train(&training, derive_seed(seed, 2)).map_err(|e| Error::Training { run: 0, source: Box::new(e) })?;
    let records = candidates
        .points
        .into_iter()
        .zip(bits)
        .map(|(x, a)| Ok(EvidenceRecord { y: attack.score(&model, &x)?, x, a }))
        .collect::<Result<Vec<_>>>()?;
    let evidence = EvidenceSet::new(records, Regime::OneRun, Some(seed), attack.orientation)?;
    Ok(OneRunOutput { evidence, model, included, excluded })
}

pub fn run_onerun(
    spec: &ProblemSpec,
    trainer: &TrainerConfig,
    attack: AttackSpec,
    n: usize,
    mode: AssignmentMode,
    seed: u64,
) -> Result<EvidenceSet> {
    Ok(run_onerun_collect(spec, trainer, attack, n, mode, None, seed)?.evidence)
}

/// Scores a fixed model on members (`a = 1`) followed by non-members
/// (`a = 0`). Never trains.
pub fn run_zerorun(model: &ModelParams, members: &Dataset, nonmembers: &Dataset, attack: AttackSpec) -> Result<EvidenceSet> {
    for d in [members, nonmembers] {
        if d.dim != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: d.dim });
        }
    }
    let labelled = members.points.iter().map(|p| (p, true)).chain(nonmembers.points.iter().map(|p| (p, false)));
    let records = labelled
        .map(|(p, a)| Ok(EvidenceRecord { x: p.clone(), a, y: attack.score(model, p)? }))
        .collect::<Result<Vec<_>>>()?;
    EvidenceSet::new(records, Regime::ZeroRun, None, attack.orientation)
}
