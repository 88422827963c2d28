//! Synthetic scenarios: one repetition draws a problem, collects evidence in
//! every requested regime, and evaluates every requested estimator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackSpec, Orientation};
use crate::error::{Error, Result};
use crate::estimators::{
    aipw_ate, aipw_fpr_curve, ate_dim, classical_roc, evidence_halfwidth, g_formula_ate, g_formula_fpr_curve, ipw_ate,
    ipw_roc, ipw_tpr_at_fpr, tpr_at_fpr, EstimatorKind, MetricsReport, OutcomeModel, RocCurve,
};
use crate::propensity::{clip, cross_fit, delta_pi, FoldPlan, LogisticConfig, PropensityModel, PropensitySource, DEFAULT_ETA};
use crate::protocols::{run_multirun, run_onerun_collect, run_zerorun, AssignmentMode, EvidenceSet};
use crate::rng::derive_seed;
use crate::synthgen::{make_problem, oracle_propensity, sample_shifted, ProblemSpec};
use crate::trainers::TrainerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeKind {
    MultiRun,
    OneRun,
    ZeroRunRaw,
    ZeroRunOracle,
    ZeroRunLearned,
    /// Zero-run corrected with a constant propensity; a diagnostic baseline.
    ZeroRunConstant,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 5] = [Self::MultiRun, Self::OneRun, Self::ZeroRunRaw, Self::ZeroRunOracle, Self::ZeroRunLearned];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MultiRun => "multirun",
            Self::OneRun => "onerun",
            Self::ZeroRunRaw => "zerorun_raw",
            Self::ZeroRunOracle => "zerorun_oracle",
            Self::ZeroRunLearned => "zerorun_learned",
            Self::ZeroRunConstant => "zerorun_constant",
        }
    }

    /// Whether the regime reweights for the member/non-member shift.
    pub fn is_corrected(self) -> bool {
        matches!(self, Self::ZeroRunOracle | Self::ZeroRunLearned | Self::ZeroRunConstant)
    }

    /// Estimators evaluated for this regime out of `requested`. Uncorrected
    /// regimes report the classical row only; corrected regimes report the
    /// requested causal estimators.
    pub fn estimators(self, requested: &[EstimatorKind]) -> Vec<EstimatorKind> {
        if self.is_corrected() {
            EstimatorKind::ALL.into_iter().filter(|e| *e != EstimatorKind::Classical && requested.contains(e)).collect()
        } else {
            vec![EstimatorKind::Classical]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub dim: usize,
    /// `None` keeps the unit-norm teacher.
    pub teacher_norm: Option<f64>,
    pub shift_norm: f64,
    pub teacher_shift_corr: f64,
    pub label_noise_sd: f64,
    pub trainer: TrainerConfig,
    /// Members trained on in one-run / zero-run.
    pub n_members: usize,
    /// Non-members scored in one-run / zero-run.
    pub n_nonmembers: usize,
    pub multirun_base: usize,
    pub multirun_evals: usize,
    pub assignment: AssignmentMode,
    pub eta: f64,
    pub folds: usize,
    pub logistic: LogisticConfig,
    /// Propensity used by the constant-propensity regime.
    pub constant_propensity: f64,
    pub alphas: Vec<f64>,
    /// Min-max normalize scores before estimation, which enables Hoeffding
    /// half-widths at `hoeffding_t`.
    pub normalize_scores: bool,
    pub hoeffding_t: f64,
    /// `(ε, δ)` of the DP bound to report, if any.
    pub dp_bound: Option<(f64, f64)>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self::ridge()
    }
}

impl ScenarioParams {
    /// Overparameterized ridge regression, `d = 2500`.
    pub fn ridge() -> Self {
        Self {
            dim: 2500,
            teacher_norm: Some(50.0),
            shift_norm: 1.0,
            teacher_shift_corr: 0.9,
            label_noise_sd: 1.0,
            trainer: TrainerConfig::ridge(1e4),
            n_members: 2000,
            n_nonmembers: 2000,
            multirun_base: 2000,
            multirun_evals: 400,
            assignment: AssignmentMode::BalancedSplit,
            eta: DEFAULT_ETA,
            folds: 2,
            logistic: LogisticConfig::default(),
            constant_propensity: 0.5,
            alphas: vec![0.2],
            normalize_scores: false,
            hoeffding_t: 3.0,
            dp_bound: None,
        }
    }

    /// DP-SGD on `d = 400`.
    pub fn dp_sgd() -> Self {
        let trainer = TrainerConfig::dp_sgd();
        Self {
            dim: 400,
            teacher_norm: Some(20.0),
            dp_bound: Some((trainer.dp_epsilon, trainer.dp_delta)),
            trainer,
            ..Self::ridge()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        if self.n_members == 0 || self.n_nonmembers == 0 {
            return Err(Error::invalid("member and non-member counts must be positive"));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::invalid("eta must lie in (0, 0.5)"));
        }
        if !(0.0..1.0).contains(&self.constant_propensity) {
            return Err(Error::invalid("constant propensity must lie in [0, 1)"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::invalid("every alpha must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn problem(&self, seed: u64) -> Result<ProblemSpec> {
        let mut spec = make_problem(seed, self.dim, self.teacher_shift_corr)?
            .with_shift_norm(self.shift_norm)?
            .with_label_noise(self.label_noise_sd)?;
        if let Some(norm) = self.teacher_norm {
            spec = spec.with_teacher_norm(norm)?;
        }
        Ok(spec)
    }
}

/// Propensity and outcome nuisances for one corrected regime.
pub struct Nuisances<'a> {
    pub propensity: &'a dyn PropensitySource,
    /// Fitted on raw-loss scores, for the ATE.
    pub outcome_raw: &'a OutcomeModel,
    /// Fitted on member-high scores, for the ROC.
    pub outcome_roc: &'a OutcomeModel,
}

/// Evaluates one estimator on raw-loss evidence. The ATE uses raw losses;
/// ROC, AUC, TPR@FPR and Youden use the member-high orientation.
pub fn evaluate(
    ev_raw: &EvidenceSet,
    label: &str,
    estimator: EstimatorKind,
    nuisances: Option<&Nuisances<'_>>,
    alphas: &[f64],
    hoeffding_t: Option<f64>,
) -> Result<(MetricsReport, RocCurve)> {
    let ev_raw = &ev_raw.reoriented(Orientation::RawLoss);
    let ev_roc = ev_raw.reoriented(Orientation::HigherScoreMeansMember);
    let need = || nuisances.ok_or_else(|| Error::invalid(format!("{} needs propensity and outcome models", estimator.as_str())));
    let mut tpr = BTreeMap::new();
    let (ate, roc) = match estimator {
        EstimatorKind::Classical => {
            for a in alphas {
                tpr.insert(a.to_string(), tpr_at_fpr(&ev_roc, *a)?);
            }
            (ate_dim(ev_raw)?, classical_roc(&ev_roc)?)
        }
        EstimatorKind::Ipw => {
            let n = need()?;
            for a in alphas {
                tpr.insert(a.to_string(), ipw_tpr_at_fpr(&ev_roc, n.propensity, *a)?);
            }
            (ipw_ate(ev_raw, n.propensity)?, ipw_roc(&ev_roc, n.propensity)?)
        }
        EstimatorKind::GFormula => {
            let n = need()?;
            let roc = g_formula_fpr_curve(&ev_roc, n.outcome_roc)?;
            for a in alphas {
                tpr.insert(a.to_string(), roc.tpr_at(*a));
            }
            (g_formula_ate(ev_raw, n.outcome_raw)?, roc)
        }
        EstimatorKind::Aipw => {
            let n = need()?;
            let roc = aipw_fpr_curve(&ev_roc, n.propensity, n.outcome_roc)?;
            for a in alphas {
                tpr.insert(a.to_string(), roc.tpr_at(*a));
            }
            (aipw_ate(ev_raw, n.propensity, n.outcome_raw)?, roc)
        }
    };
    let hoeffding_halfwidth = match hoeffding_t {
        Some(t) if ev_raw.normalized => Some(evidence_halfwidth(ev_raw, t)?),
        _ => None,
    };
    let report = MetricsReport {
        regime: label.to_string(),
        estimator_kind: estimator,
        auc: roc.auc(),
        ate,
        tpr_at_fpr: tpr,
        youden_sup: roc.youden_sup(),
        hoeffding_halfwidth,
        n1: ev_raw.n1,
        n0: ev_raw.n0,
    };
    Ok((report, roc))
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub regime: RegimeKind,
    pub estimator: EstimatorKind,
    pub outcome: std::result::Result<(MetricsReport, RocCurve), String>,
}

#[derive(Clone, Debug)]
pub struct RepetitionOutput {
    pub seed: u64,
    pub cells: Vec<CellResult>,
    /// Evidence by name: `multirun`, `onerun`, `zerorun`.
    pub evidence: BTreeMap<String, EvidenceSet>,
    pub delta_pi: Option<f64>,
    pub learned_separation_warning: bool,
}

impl RepetitionOutput {
    pub fn cell(&self, regime: RegimeKind, estimator: EstimatorKind) -> Option<&(MetricsReport, RocCurve)> {
        self.cells.iter().find(|c| c.regime == regime && c.estimator == estimator).and_then(|c| c.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Name of the evidence set backing a regime.
pub fn evidence_name(regime: RegimeKind) -> &'static str {
    match regime {
        RegimeKind::MultiRun => "multirun",
        RegimeKind::OneRun => "onerun",
        _ => "zerorun",
    }
}

fn prepare(ev: &EvidenceSet, params: &ScenarioParams) -> EvidenceSet {
    if params.normalize_scores {
        ev.min_max_normalized()
    } else {
        ev.clone()
    }
}

/// Runs one repetition. Collection or estimation failures are recorded in
/// the affected cells; only invalid parameters abort the repetition.
pub fn run_repetition(params: &ScenarioParams, regimes: &[RegimeKind], estimators: &[EstimatorKind], seed: u64) -> Result<RepetitionOutput> {
    params.validate()?;
    let spec = params.problem(derive_seed(seed, 0))?;
    let attack = AttackSpec::raw_loss();
    let hoeffding_t = params.normalize_scores.then_some(params.hoeffding_t);
    let mut out = RepetitionOutput {
        seed,
        cells: Vec::new(),
        evidence: BTreeMap::new(),
        delta_pi: None,
        learned_separation_warning: false,
    };
    let fail_all = |out: &mut RepetitionOutput, regime: RegimeKind, msg: String| {
        for e in regime.estimators(estimators) {
            out.cells.push(CellResult { regime, estimator: e, outcome: Err(msg.clone()) });
        }
    };

    if regimes.contains(&RegimeKind::MultiRun) {
        let r = RegimeKind::MultiRun;
        match run_multirun(&spec, &params.trainer, attack, params.multirun_base, params.multirun_evals, params.assignment, derive_seed(seed, 1)) {
            Ok(ev) => {
                let ev = prepare(&ev, params);
                for e in r.estimators(estimators) {
                    let outcome = evaluate(&ev, r.as_str(), e, None, &params.alphas, hoeffding_t).map_err(|x| x.to_string());
                    out.cells.push(CellResult { regime: r, estimator: e, outcome });
                }
                out.evidence.insert("multirun".into(), ev);
            }
            Err(e) => fail_all(&mut out, r, e.to_string()),
        }
    }

    let needs_model = regimes.iter().any(|r| *r != RegimeKind::MultiRun);
    if !needs_model {
        return Ok(out);
    }
    let zero_regimes: Vec<RegimeKind> = regimes.iter().copied().filter(|r| evidence_name(*r) == "zerorun").collect();
    let one = match run_onerun_collect(&spec, &params.trainer, attack, 2 * params.n_members, AssignmentMode::BalancedSplit, None, derive_seed(seed, 2)) {
        Ok(one) => one,
        Err(e) => {
            for r in regimes.iter().filter(|r| **r != RegimeKind::MultiRun) {
                fail_all(&mut out, *r, e.to_string());
            }
            return Ok(out);
        }
    };
    if regimes.contains(&RegimeKind::OneRun) {
        let r = RegimeKind::OneRun;
        let ev = prepare(&one.evidence, params);
        for e in r.estimators(estimators) {
            let outcome = evaluate(&ev, r.as_str(), e, None, &params.alphas, hoeffding_t).map_err(|x| x.to_string());
            out.cells.push(CellResult { regime: r, estimator: e, outcome });
        }
        out.evidence.insert("onerun".into(), ev);
    }
    if zero_regimes.is_empty() {
        return Ok(out);
    }

    let zero = sample_shifted(&spec, params.n_nonmembers, derive_seed(seed, 3))
        .and_then(|non| Ok((run_zerorun(&one.model, &one.included, &non, attack)?, non)));
    let (ev_zero, nonmembers) = match zero {
        Ok(v) => v,
        Err(e) => {
            for r in &zero_regimes {
                fail_all(&mut out, *r, e.to_string());
            }
            return Ok(out);
        }
    };
    let ev_zero = prepare(&ev_zero, params);
    let ev_zero_roc = ev_zero.reoriented(Orientation::HigherScoreMeansMember);
    let oracle = oracle_propensity(&spec, ev_zero.n1, ev_zero.n0).map(|m| clip(&m, params.eta));

    for &r in &zero_regimes {
        let ests = r.estimators(estimators);
        match r {
            RegimeKind::ZeroRunRaw => {
                for e in ests {
                    let outcome = evaluate(&ev_zero, r.as_str(), e, None, &params.alphas, hoeffding_t).map_err(|x| x.to_string());
                    out.cells.push(CellResult { regime: r, estimator: e, outcome });
                }
            }
            RegimeKind::ZeroRunOracle => {
                let built = oracle.as_ref().map_err(|e| e.to_string()).and_then(|pi| {
                    let raw = OutcomeModel::balancing_score(&ev_zero, pi).map_err(|e| e.to_string())?;
                    let roc = OutcomeModel::balancing_score(&ev_zero_roc, pi).map_err(|e| e.to_string())?;
                    Ok((pi.clone(), raw, roc))
                });
                push_corrected(&mut out, r, &ests, &ev_zero, built.map(|(pi, raw, roc)| (Box::new(pi) as Box<dyn PropensitySource>, raw, roc)), params, hoeffding_t);
            }
            RegimeKind::ZeroRunLearned => {
                let built = (|| -> Result<_> {
                    let plan = FoldPlan::for_evidence(&ev_zero, params.folds, derive_seed(seed, 4))?;
                    let cfg = LogisticConfig { seed: derive_seed(seed, 5), ..params.logistic.clone() };
                    let fit = cross_fit(&ev_zero, &plan, &cfg)?.clipped(params.eta);
                    let averaged: PropensityModel = fit.averaged.clone();
                    if let Ok(o) = &oracle {
                        out.delta_pi = Some(delta_pi(&averaged, o, &nonmembers)?);
                    }
                    out.learned_separation_warning = averaged.separation_warning;
                    let raw = OutcomeModel::balancing_score(&ev_zero, &averaged)?;
                    let roc = OutcomeModel::balancing_score(&ev_zero_roc, &averaged)?;
                    Ok((Box::new(fit) as Box<dyn PropensitySource>, raw, roc))
                })()
                .map_err(|e| e.to_string());
                push_corrected(&mut out, r, &ests, &ev_zero, built, params, hoeffding_t);
            }
            RegimeKind::ZeroRunConstant => {
                let built = (|| -> Result<_> {
                    let pi = PropensityModel::constant(params.constant_propensity)?;
                    // A constant propensity balances nothing, so the outcome model ignores X.
                    let raw = OutcomeModel::empirical(&ev_zero)?;
                    let roc = OutcomeModel::empirical(&ev_zero_roc)?;
                    Ok((Box::new(pi) as Box<dyn PropensitySource>, raw, roc))
                })()
                .map_err(|e| e.to_string());
                push_corrected(&mut out, r, &ests, &ev_zero, built, params, hoeffding_t);
            }
            _ => unreachable!("only zero-run regimes reach here"),
        }
    }
    out.evidence.insert("zerorun".into(), ev_zero);
    Ok(out)
}

type Built = std::result::Result<(Box<dyn PropensitySource>, OutcomeModel, OutcomeModel), String>;

fn push_corrected(
    out: &mut RepetitionOutput,
    regime: RegimeKind,
    ests: &[EstimatorKind],
    ev: &EvidenceSet,
    built: Built,
    params: &ScenarioParams,
    hoeffding_t: Option<f64>,
) {
    for &e in ests {
        let outcome = match &built {
            Ok((pi, raw, roc)) => {
                let n = Nuisances { propensity: pi.as_ref(), outcome_raw: raw, outcome_roc: roc };
                evaluate(ev, regime.as_str(), e, Some(&n), &params.alphas, hoeffding_t).map_err(|x| x.to_string())
            }
            Err(msg) => Err(msg.clone()),
        };
        out.cells.push(CellResult { regime, estimator: e, outcome });
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    #[serde(deserialize_with = "null_as_nan")]
    pub mean: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub sd: f64,
}

/// JSON writes NaN as `null`; read it back as NaN.
fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Spread {
    pub fn of(values: &[f64]) -> Spread {
        if values.is_empty() {
            return Spread { mean: f64::NAN, sd: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Spread { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub regime: String,
    pub estimator: EstimatorKind,
    pub repetitions: usize,
    pub failures: usize,
    pub auc: Spread,
    pub youden_sup: Spread,
    pub ate: Spread,
    pub tpr_at_fpr: BTreeMap<String, Spread>,
}

/// Mean ± sd per (regime, estimator) across repetitions.
pub fn aggregate(reports: &[(String, EstimatorKind, Option<MetricsReport>)]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, EstimatorKind), Vec<Option<&MetricsReport>>> = BTreeMap::new();
    for (regime, est, rep) in reports {
        groups.entry((regime.clone(), *est)).or_default().push(rep.as_ref());
    }
    let mut rows: Vec<AggregateRow> = groups
        .into_iter()
        .map(|((regime, estimator), reps)| {
            let ok: Vec<&MetricsReport> = reps.iter().flatten().copied().collect();
            let pick = |f: &dyn Fn(&MetricsReport) -> f64| Spread::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            let mut tpr = BTreeMap::new();
            if let Some(first) = ok.first() {
                for k in first.tpr_at_fpr.keys() {
                    tpr.insert(k.clone(), pick(&|r| r.tpr_at_fpr.get(k).copied().unwrap_or(f64::NAN)));
                }
            }
            AggregateRow {
                repetitions: reps.len(),
                failures: reps.len() - ok.len(),
                auc: pick(&|r| r.auc),
                youden_sup: pick(&|r| r.youden_sup),
                ate: pick(&|r| r.ate),
                tpr_at_fpr: tpr,
                regime,
                estimator,
            }
        })
        .collect();
    rows.sort_by_key(|r| {
        let rank = RegimeKind::ALL.iter().chain([&RegimeKind::ZeroRunConstant]).position(|k| k.as_str() == r.regime).unwrap_or(usize::MAX);
        (rank, r.estimator)
    });
    rows
}

/// TPR of each curve interpolated at `fprs`, averaged across curves.
pub fn vertical_average(curves: &[RocCurve], fprs: &[f64]) -> Vec<f64> {
    fprs.iter()
        .map(|&x| curves.iter().map(|c| c.tpr_interpolated(x)).sum::<f64>() / curves.len().max(1) as f64)
        .collect()
}
