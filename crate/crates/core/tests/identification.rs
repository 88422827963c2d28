//! Larger Monte Carlo checks of the corrected estimators on the synthetic
//! Gaussian problem.

use causal_mia::estimators::{aipw_ate, auc_pairwise, classical_roc, ipw_ate, ipw_roc, ipw_tpr_at_fpr, tpr_at_fpr, OutcomeModel};
use causal_mia::experiment::{run_repetition, RegimeKind, ScenarioParams};
use causal_mia::estimators::EstimatorKind;
use causal_mia::propensity::{clip, delta_pi, fit_logistic, LogisticConfig, PropensitySource};
use causal_mia::rng::derive_seed;
use causal_mia::synthgen::{make_problem, oracle_propensity, sample_members, sample_shifted};
use causal_mia::{EvidenceRecord, EvidenceSet, Orientation, Regime, TrainerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn small() -> ScenarioParams {
    ScenarioParams {
        dim: 100,
        teacher_norm: Some(10.0),
        trainer: TrainerConfig::ridge(60.0),
        n_members: 300,
        n_nonmembers: 300,
        ..ScenarioParams::ridge()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Zero-run evidence whose score is a fixed nonlinear function of the
/// features, so the truth without shift is known: members score `τ` higher.
fn shifted_evidence(seed: u64, n: usize, tau: f64) -> (EvidenceSet, causal_mia::PropensityModel) {
    let spec = make_problem(seed, 3, 0.5).unwrap().with_shift_norm(0.7).unwrap();
    let f = |x: &[f64]| x[0] * x[0] + (x[1] + x[2]).sin();
    let m = sample_members(&spec, n, derive_seed(seed, 1)).unwrap();
    let s = sample_shifted(&spec, n, derive_seed(seed, 2)).unwrap();
    let mut recs = Vec::new();
    for p in m.points {
        let y = f(&p.features) + tau;
        recs.push(EvidenceRecord { x: p, a: true, y });
    }
    for p in s.points {
        let y = f(&p.features);
        recs.push(EvidenceRecord { x: p, a: false, y });
    }
    let ev = EvidenceSet::new(recs, Regime::ZeroRun, Some(seed), Orientation::RawLoss).unwrap();
    (ev, oracle_propensity(&spec, n, n).unwrap())
}

#[test]
fn ipw_and_aipw_agree_in_expectation() {
    let tau = 0.25;
    let (mut ipw, mut aipw) = (Vec::new(), Vec::new());
    for s in 0..60 {
        let (ev, pi) = shifted_evidence(s, 500, tau);
        let om = OutcomeModel::balancing_score(&ev, &pi).unwrap();
        ipw.push(ipw_ate(&ev, &pi).unwrap());
        aipw.push(aipw_ate(&ev, &pi, &om).unwrap());
    }
    let (mi, ma) = (mean(&ipw), mean(&aipw));
    assert!((mi - tau).abs() < 0.05, "ipw {mi}");
    assert!((ma - tau).abs() < 0.05, "aipw {ma}");
    assert!((mi - ma).abs() < 0.05);
}

#[test]
fn ipw_tpr_matches_an_importance_resample() {
    let (ev, pi) = shifted_evidence(9, 2000, 0.4);
    let ev = ev.reoriented(Orientation::HigherScoreMeansMember);
    let p = pi.propensities(&ev).unwrap();
    let mut pool = Vec::new();
    let mut weights = Vec::new();
    for (r, p) in ev.records.iter().zip(&p) {
        if !r.a {
            pool.push(r.clone());
            weights.push(p / (1.0 - p));
        }
    }
    let total: f64 = weights.iter().sum();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut recs: Vec<EvidenceRecord> = ev.records.iter().filter(|r| r.a).cloned().collect();
    for _ in 0..40_000 {
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < weights.len() && u > weights[k] {
            u -= weights[k];
            k += 1;
        }
        recs.push(pool[k].clone());
    }
    let resampled = EvidenceSet::new(recs, Regime::ZeroRun, None, Orientation::HigherScoreMeansMember).unwrap();
    for alpha in [0.1, 0.2, 0.5] {
        let a = ipw_tpr_at_fpr(&ev, &pi, alpha).unwrap();
        let b = tpr_at_fpr(&resampled, alpha).unwrap();
        assert!((a - b).abs() < 0.03, "alpha {alpha}: {a} vs {b}");
    }
    let auc_w = ipw_roc(&ev, &pi).unwrap().auc();
    let auc_r = auc_pairwise(&resampled).unwrap();
    assert!((auc_w - auc_r).abs() < 0.02, "{auc_w} vs {auc_r}");
}

#[test]
fn oracle_correction_recovers_one_run_auc() {
    let regimes = [RegimeKind::OneRun, RegimeKind::ZeroRunRaw, RegimeKind::ZeroRunOracle];
    let (mut one, mut raw, mut oracle) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..6 {
        let out = run_repetition(&small(), &regimes, &[EstimatorKind::Ipw], s).unwrap();
        one.push(out.cell(RegimeKind::OneRun, EstimatorKind::Classical).unwrap().0.auc);
        raw.push(out.cell(RegimeKind::ZeroRunRaw, EstimatorKind::Classical).unwrap().0.auc);
        oracle.push(out.cell(RegimeKind::ZeroRunOracle, EstimatorKind::Ipw).unwrap().0.auc);
    }
    let (o, r, c) = (mean(&one), mean(&raw), mean(&oracle));
    assert!(r - o > 0.03, "shift should inflate raw AUC: raw {r}, one-run {o}");
    assert!((c - o).abs() < 0.03, "oracle {c} vs one-run {o}");
}

#[test]
fn zero_shift_zero_run_matches_one_run() {
    let p = ScenarioParams { shift_norm: 0.0, ..small() };
    let regimes = [RegimeKind::OneRun, RegimeKind::ZeroRunRaw];
    let (mut one, mut zero) = (Vec::new(), Vec::new());
    for s in 0..6 {
        let out = run_repetition(&p, &regimes, &[EstimatorKind::Classical], s).unwrap();
        one.push(out.cell(RegimeKind::OneRun, EstimatorKind::Classical).unwrap().0.auc);
        zero.push(out.cell(RegimeKind::ZeroRunRaw, EstimatorKind::Classical).unwrap().0.auc);
    }
    assert!((mean(&one) - mean(&zero)).abs() < 0.03);
}

#[test]
fn learned_propensity_error_shrinks_with_sample_size() {
    let spec = make_problem(4, 10, 0.5).unwrap();
    let eval = sample_shifted(&spec, 2000, 99).unwrap();
    let oracle = oracle_propensity(&spec, 1, 1).unwrap();
    let dpi = |n: usize| {
        let m: Vec<Vec<f64>> = sample_members(&spec, n, 1).unwrap().points.into_iter().map(|p| p.features).collect();
        let s: Vec<Vec<f64>> = sample_shifted(&spec, n, 2).unwrap().points.into_iter().map(|p| p.features).collect();
        let fit = clip(&fit_logistic(&m, &s, &LogisticConfig::default()).unwrap(), 0.01);
        delta_pi(&fit, &clip(&oracle, 0.01), &eval).unwrap()
    };
    let (small_n, large_n) = (dpi(100), dpi(5000));
    assert!(large_n < 0.5 * small_n, "Δπ {small_n} at n=100 vs {large_n} at n=5000");
}

#[test]
fn learned_regime_reports_delta_pi_and_close_auc() {
    let regimes = [RegimeKind::ZeroRunOracle, RegimeKind::ZeroRunLearned];
    let p = ScenarioParams { dim: 20, teacher_norm: Some(20f64.sqrt()), ..small() };
    let out = run_repetition(&p, &regimes, &[EstimatorKind::Ipw, EstimatorKind::Aipw], 2).unwrap();
    assert_eq!(out.failures(), 0);
    let dpi = out.delta_pi.unwrap();
    assert!(dpi.is_finite() && dpi >= 0.0);
    let o = out.cell(RegimeKind::ZeroRunOracle, EstimatorKind::Ipw).unwrap().0.auc;
    let l = out.cell(RegimeKind::ZeroRunLearned, EstimatorKind::Ipw).unwrap().0.auc;
    assert!((o - l).abs() < 0.05, "oracle {o} vs learned {l}");
}

#[test]
fn classical_roc_area_is_the_pairwise_auc_at_scale() {
    let (ev, _) = shifted_evidence(3, 3000, 0.1);
    let ev = ev.reoriented(Orientation::HigherScoreMeansMember);
    assert!((classical_roc(&ev).unwrap().auc() - auc_pairwise(&ev).unwrap()).abs() < 1e-12);
}
