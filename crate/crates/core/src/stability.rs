//! Empirical probes of error stability (α) and uniform training stability
//! (β), and the deviation expressions they feed.
//!
//! Both constants are suprema over datasets; the estimates here are maxima
//! over sampled single-point replacements, hence lower bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::rng::derive_seed;
use crate::synthgen::{sample_members, Dataset, ProblemSpec};
use crate::trainers::{loss, ModelParams, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub n_train: usize,
    pub n_perturb: usize,
    pub n_test: usize,
    /// Training seeds averaged per dataset when the trainer is randomized.
    pub algo_seeds: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { n_train: 200, n_perturb: 10, n_test: 1000, algo_seeds: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub alpha_hat: f64,
    /// Standard error of the maximizing difference over training seeds
    /// (zero for deterministic trainers).
    pub alpha_std_error: f64,
    pub beta_hat: f64,
    pub n_train: usize,
    pub n_perturbations: usize,
    pub n_test: usize,
    pub trainer_fingerprint: String,
}

struct Probe<'a> {
    spec: &'a ProblemSpec,
    trainer: &'a dyn Trainer,
    base: Dataset,
    seeds: Vec<u64>,
    base_models: Vec<ModelParams>,
}

impl<'a> Probe<'a> {
    fn new(spec: &'a ProblemSpec, trainer: &'a dyn Trainer, n_train: usize, algo_seeds: usize, seed: u64) -> Result<Self> {
        let base = sample_members(spec, n_train, derive_seed(seed, 0))?;
        let k = if trainer.is_randomized() { algo_seeds.max(1) } else { 1 };
        let seeds: Vec<u64> = (0..k).map(|j| derive_seed(seed, 100 + j as u64)).collect();
        let base_models = seeds.iter().map(|s| trainer.train(&base, *s)).collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, trainer, base, seeds, base_models })
    }

    /// Replacement number `p`: its index and the retrained models (one per
    /// training seed, common random numbers with the base fits).
    fn perturbed(&self, p: usize, seed: u64) -> Result<(usize, Vec<ModelParams>)> {
        let i = p % self.base.len();
        let fresh = sample_members(self.spec, 1, derive_seed(seed, 1000 + p as u64))?.points.remove(0);
        let mut data = self.base.clone();
        data.points[i] = fresh;
        let models = self
            .seeds
            .iter()
            .map(|s| self.trainer.train(&data, *s).map_err(|e| Error::Training { run: p, source: Box::new(e) }))
            .collect::<Result<Vec<_>>>()?;
        Ok((i, models))
    }
}

fn mean_loss(model: &ModelParams, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for p in &data.points {
        total += loss(model, p)?;
    }
    Ok(total / data.len() as f64)
}

fn check(n_train: usize, n_perturb: usize, min_train: usize) -> Result<()> {
    if n_perturb == 0 {
        return Err(Error::invalid("n_perturb must be >= 1"));
    }
    if n_train < min_train {
        return Err(Error::invalid(format!("n_train must be >= {min_train}")));
    }
    Ok(())
}

/// Returns `(α̂, standard error)`.
pub fn estimate_error_stability(
    spec: &ProblemSpec,
    trainer: &dyn Trainer,
    n_train: usize,
    n_perturb: usize,
    n_test: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let cfg = StabilityConfig { n_train, n_perturb, n_test, ..Default::default() };
    let est = estimate(spec, trainer, &cfg, seed, true, false)?;
    Ok((est.alpha_hat, est.alpha_std_error))
}

pub fn estimate_training_stability(spec: &ProblemSpec, trainer: &dyn Trainer, n_train: usize, n_perturb: usize, seed: u64) -> Result<f64> {
    check(n_train, n_perturb, 3)?;
    let cfg = StabilityConfig { n_train, n_perturb, n_test: 1, ..Default::default() };
    Ok(estimate(spec, trainer, &cfg, seed, false, true)?.beta_hat)
}

/// Both constants from one set of replacements.
pub fn estimate_stability(spec: &ProblemSpec, trainer: &dyn Trainer, cfg: &StabilityConfig, seed: u64) -> Result<StabilityEstimate> {
    estimate(spec, trainer, cfg, seed, true, true)
}

fn estimate(
    spec: &ProblemSpec,
    trainer: &dyn Trainer,
    cfg: &StabilityConfig,
    seed: u64,
    want_alpha: bool,
    want_beta: bool,
) -> Result<StabilityEstimate> {
    check(cfg.n_train, cfg.n_perturb, if want_beta { 3 } else { 2 })?;
    if want_alpha && cfg.n_test == 0 {
        return Err(Error::invalid("n_test must be >= 1"));
    }
    let probe = Probe::new(spec, trainer, cfg.n_train, cfg.algo_seeds, seed)?;
    let test = if want_alpha { sample_members(spec, cfg.n_test, derive_seed(seed, 1))? } else { Dataset::empty(spec.dim) };
    let base_test: Vec<f64> =
        if want_alpha { probe.base_models.iter().map(|m| mean_loss(m, &test)).collect::<Result<_>>()? } else { Vec::new() };

    let results = map_indexed(cfg.n_perturb, |p| -> Result<(f64, f64, f64)> {
        let (i, models) = probe.perturbed(p, seed)?;
        let k = models.len() as f64;
        let (mut diff, mut se) = (0.0, 0.0);
        if want_alpha {
            let per_seed: Vec<f64> =
                models.iter().zip(&base_test).map(|(m, b)| Ok(mean_loss(m, &test)? - b)).collect::<Result<_>>()?;
            let mean = per_seed.iter().sum::<f64>() / k;
            diff = mean.abs();
            if per_seed.len() > 1 {
                let var = per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
                se = (var / k).sqrt();
            }
        }
        let mut beta: f64 = 0.0;
        if want_beta {
            for (kk, x) in probe.base.points.iter().enumerate() {
                if kk == i {
                    continue;
                }
                let mut change = 0.0;
                for (m, b) in models.iter().zip(&probe.base_models) {
                    change += loss(m, x)? - loss(b, x)?;
                }
                beta = beta.max((change / k).abs());
            }
        }
        Ok((diff, se, beta))
    });

    let (mut alpha, mut alpha_se, mut beta) = (0.0f64, 0.0, 0.0f64);
    for r in results {
        let (d, se, b) = r?;
        if d > alpha {
            alpha = d;
            alpha_se = se;
        }
        beta = beta.max(b);
    }
    Ok(StabilityEstimate {
        alpha_hat: alpha,
        alpha_std_error: alpha_se,
        beta_hat: beta,
        n_train: cfg.n_train,
        n_perturbations: cfg.n_perturb,
        n_test: cfg.n_test,
        trainer_fingerprint: trainer.fingerprint(),
    })
}

/// `Δ_π̂ + (1/η)√(t/n) + √(ntα²) + √(ntβ²)`, without the unknown universal
/// constant. `η` and `Δ_π̂` default to 1 and 0.
pub fn theorem_deviation(alpha_hat: f64, beta_hat: f64, n: usize, t: f64, eta: Option<f64>, delta_pi: Option<f64>) -> Result<f64> {
    if n == 0 || !(t > 0.0) {
        return Err(Error::invalid("n and t must be positive"));
    }
    if eta.is_some_and(|e| !(e > 0.0)) {
        return Err(Error::invalid("eta must be positive"));
    }
    let nf = n as f64;
    let lead = (t / nf).sqrt() / eta.unwrap_or(1.0);
    Ok(delta_pi.unwrap_or(0.0) + lead + (nf * t * alpha_hat * alpha_hat).sqrt() + (nf * t * beta_hat * beta_hat).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::make_problem;
    use crate::trainers::TrainerConfig;

    struct Fixed;

    impl Trainer for Fixed {
        fn train(&self, data: &Dataset, _seed: u64) -> Result<ModelParams> {
            Ok(ModelParams { weights: vec![0.5; data.dim] })
        }

        fn is_randomized(&self) -> bool {
            false
        }

        fn fingerprint(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn constant_trainer_is_perfectly_stable() {
        let spec = make_problem(1, 5, 0.5).unwrap();
        let est = estimate_stability(&spec, &Fixed, &StabilityConfig { n_train: 10, n_perturb: 4, n_test: 20, algo_seeds: 5 }, 3).unwrap();
        assert_eq!(est.alpha_hat, 0.0);
        assert_eq!(est.beta_hat, 0.0);
        assert_eq!(estimate_error_stability(&spec, &Fixed, 10, 4, 20, 3).unwrap().0, 0.0);
        assert_eq!(estimate_training_stability(&spec, &Fixed, 10, 4, 3).unwrap(), 0.0);
    }

    #[test]
    fn preconditions() {
        let spec = make_problem(1, 5, 0.5).unwrap();
        assert!(estimate_training_stability(&spec, &Fixed, 2, 4, 3).is_err());
        assert!(estimate_error_stability(&spec, &Fixed, 10, 0, 20, 3).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = make_problem(2, 20, 0.5).unwrap();
        let t = TrainerConfig::ridge(1.0);
        let cfg = StabilityConfig { n_train: 15, n_perturb: 3, n_test: 50, algo_seeds: 5 };
        assert_eq!(estimate_stability(&spec, &t, &cfg, 9).unwrap(), estimate_stability(&spec, &t, &cfg, 9).unwrap());
    }

    #[test]
    fn error_stability_shrinks_with_training_size() {
        let t = TrainerConfig::ridge(10.0);
        let mut small = Vec::new();
        let mut large = Vec::new();
        for seed in 0..10 {
            let spec = make_problem(seed, 30, 0.5).unwrap().with_teacher_norm(30f64.sqrt()).unwrap();
            small.push(estimate_error_stability(&spec, &t, 20, 5, 400, seed).unwrap().0);
            large.push(estimate_error_stability(&spec, &t, 200, 5, 400, seed).unwrap().0);
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            (v[4] + v[5]) / 2.0
        };
        assert!(median(&mut large) < median(&mut small));
    }

    #[test]
    fn interpolating_ridge_has_tiny_training_stability() {
        let spec = make_problem(4, 400, 0.5).unwrap();
        let beta = estimate_training_stability(&spec, &TrainerConfig::ridge(1e-8), 10, 3, 1).unwrap();
        assert!(beta < 1e-6, "beta = {beta}");
    }

    #[test]
    fn randomized_trainer_reports_standard_error() {
        let spec = make_problem(5, 10, 0.5).unwrap();
        let t = TrainerConfig { epochs: 2, batch_size: 8, ..TrainerConfig::dp_sgd() };
        let (alpha, se) = estimate_error_stability(&spec, &t, 20, 2, 50, 1).unwrap();
        assert!(alpha >= 0.0 && se > 0.0);
    }

    #[test]
    fn deviation_formula() {
        assert!((theorem_deviation(0.0, 0.0, 100, 1.0, None, None).unwrap() - 0.1).abs() < 1e-15);
        let with_eta = theorem_deviation(0.0, 0.0, 100, 1.0, Some(0.1), None).unwrap();
        assert!((with_eta - 1.0).abs() < 1e-14);
        let full = theorem_deviation(0.1, 0.2, 4, 1.0, None, Some(0.5)).unwrap();
        assert!((full - (0.5 + 0.5 + 0.2 + 0.4)).abs() < 1e-14);
        assert!(theorem_deviation(0.0, 0.0, 0, 1.0, None, None).is_err());
    }
}
