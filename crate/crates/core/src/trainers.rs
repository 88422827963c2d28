//! Training algorithms under attack: closed-form ridge regression and
//! DP-SGD on the ℓ²-regularized squared loss.

use std::cell::Cell;
use std::io::{Read, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::synthgen::{Dataset, LabeledPoint};

const RESIDUAL_TOL: f64 = 1e-8;

thread_local! {
    static INVOCATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of trainings started on the calling thread.
pub fn training_invocations() -> u64 {
    INVOCATIONS.with(|c| c.get())
}

fn count_invocation() {
    INVOCATIONS.with(|c| c.set(c.get() + 1));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), found: features.len() });
        }
        Ok(self.weights.iter().zip(features).map(|(w, x)| w * x).sum())
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Two columns, `index,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "weight"])?;
        for (i, v) in self.weights.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian `u64` length followed by the weights as `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.weights.len() as u64).to_le_bytes())?;
        for v in &self.weights {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut buf = [0u8; 8];
        input.read_exact(&mut buf)?;
        let n = u64::from_le_bytes(buf) as usize;
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            weights.push(f64::from_le_bytes(buf));
        }
        Ok(Self { weights })
    }
}

/// Squared error `(aᵀθ − b)²` of one point, without the penalty term.
pub fn loss(model: &ModelParams, point: &LabeledPoint) -> Result<f64> {
    let r = model.predict(&point.features)? - point.label;
    Ok(r * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainerVariant {
    RidgeClosedForm,
    DpSgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub variant: TrainerVariant,
    /// Penalty on the summed objective `Σ(aᵀθ − b)² + λ‖θ‖²`.
    pub ridge_lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    /// Noise multiplier: the summed clipped gradient receives
    /// `N(0, (noise_sd · clip_norm)²)` per coordinate.
    pub noise_sd: f64,
    /// Per-example penalty `λ‖θ‖²`, so it passes through clipping.
    pub l2_lambda: f64,
    pub dp_epsilon: f64,
    pub dp_delta: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self::ridge(1e4)
    }
}

impl TrainerConfig {
    pub fn ridge(lambda: f64) -> Self {
        Self {
            variant: TrainerVariant::RidgeClosedForm,
            ridge_lambda: lambda,
            lr: 0.01,
            epochs: 75,
            batch_size: 128,
            clip_norm: 1.0,
            noise_sd: 3f64.sqrt(),
            l2_lambda: 10.0,
            dp_epsilon: 0.602,
            dp_delta: 0.01,
        }
    }

    pub fn dp_sgd() -> Self {
        Self { variant: TrainerVariant::DpSgd, ..Self::ridge(1e4) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            TrainerVariant::RidgeClosedForm => {
                if !(self.ridge_lambda > 0.0 && self.ridge_lambda.is_finite()) {
                    return Err(Error::invalid(format!("ridge_lambda must be positive, got {}", self.ridge_lambda)));
                }
            }
            TrainerVariant::DpSgd => {
                if !(self.lr > 0.0 && self.lr.is_finite()) {
                    return Err(Error::invalid("lr must be positive"));
                }
                if self.epochs == 0 || self.batch_size == 0 {
                    return Err(Error::invalid("epochs and batch_size must be positive"));
                }
                if !(self.clip_norm > 0.0) {
                    return Err(Error::invalid("clip_norm must be positive"));
                }
                if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
                    return Err(Error::invalid("noise_sd must be non-negative"));
                }
                if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
                    return Err(Error::invalid("l2_lambda must be non-negative"));
                }
            }
        }
        if self.dp_epsilon < 0.0 || !(0.0..=1.0).contains(&self.dp_delta) {
            return Err(Error::invalid("dp_epsilon must be >= 0 and dp_delta in [0, 1]"));
        }
        Ok(())
    }
}

/// A training algorithm `D ↦ θ`.
pub trait Trainer: Sync {
    fn train(&self, data: &Dataset, seed: u64) -> Result<ModelParams>;

    /// Whether `train` depends on `seed`.
    fn is_randomized(&self) -> bool;

    fn fingerprint(&self) -> String;
}

impl Trainer for TrainerConfig {
    /// An empty training set yields the zero model.
    fn train(&self, data: &Dataset, seed: u64) -> Result<ModelParams> {
        if data.is_empty() {
            count_invocation();
            return Ok(ModelParams::zeros(data.dim));
        }
        match self.variant {
            TrainerVariant::RidgeClosedForm => train_ridge(data, self.ridge_lambda),
            TrainerVariant::DpSgd => train_dpsgd(data, self, seed),
        }
    }

    fn is_randomized(&self) -> bool {
        self.variant == TrainerVariant::DpSgd
    }

    fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).unwrap_or_default();
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn relative_residual(matrix: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    (matrix * x - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
}

/// Solves the SPD system with one step of iterative refinement if needed.
fn spd_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = matrix.clone().cholesky().ok_or(Error::Singular { residual: f64::INFINITY })?;
    let mut x = chol.solve(rhs);
    let mut res = relative_residual(matrix, &x, rhs);
    if res > RESIDUAL_TOL {
        let r = rhs - matrix * &x;
        x += chol.solve(&r);
        res = relative_residual(matrix, &x, rhs);
    }
    if res > RESIDUAL_TOL || !res.is_finite() {
        return Err(Error::Singular { residual: res });
    }
    Ok(x)
}

fn check_ridge_input(data: &Dataset, lambda: f64) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("ridge needs at least one training point"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if let Some(i) = data.points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite { what: "training point", index: i });
    }
    Ok(())
}

/// `argmin Σ(aᵢᵀθ − bᵢ)² + λ‖θ‖²`, through the dual when `d > n`.
pub fn train_ridge(data: &Dataset, lambda: f64) -> Result<ModelParams> {
    if data.dim > data.len() {
        train_ridge_dual(data, lambda)
    } else {
        train_ridge_primal(data, lambda)
    }
}

/// `(AᵀA + λI) θ = Aᵀb`.
pub fn train_ridge_primal(data: &Dataset, lambda: f64) -> Result<ModelParams> {
    check_ridge_input(data, lambda)?;
    count_invocation();
    let a = data.feature_matrix();
    let b = data.labels();
    let mut gram = a.transpose() * &a;
    for j in 0..data.dim {
        gram[(j, j)] += lambda;
    }
    let theta = spd_solve(&gram, &a.tr_mul(&b))?;
    Ok(ModelParams { weights: theta.iter().copied().collect() })
}

/// `θ = Aᵀ(AAᵀ + λI)⁻¹b`.
pub fn train_ridge_dual(data: &Dataset, lambda: f64) -> Result<ModelParams> {
    check_ridge_input(data, lambda)?;
    count_invocation();
    let a = data.feature_matrix();
    let b = data.labels();
    let mut kernel = &a * a.transpose();
    for i in 0..data.len() {
        kernel[(i, i)] += lambda;
    }
    let alpha = spd_solve(&kernel, &b)?;
    let theta = a.tr_mul(&alpha);
    Ok(ModelParams { weights: theta.iter().copied().collect() })
}

enum SolverState {
    /// Factor of `AAᵀ + λI` and `L⁻¹b`.
    Dual { a: DMatrix<f64>, chol: Cholesky<f64, Dyn>, u0: DVector<f64> },
    /// Factor of `AᵀA + λI`.
    Primal { chol: Cholesky<f64, Dyn> },
    Empty,
}

/// Ridge fits of `D` and of `D ∪ {x}` for many `x`, sharing one
/// factorization of the base problem.
///
/// The dual form extends the Cholesky factor of the kernel matrix by one
/// bordered row; the primal form applies a Sherman–Morrison update.
pub struct RidgeSolver {
    lambda: f64,
    dim: usize,
    base: ModelParams,
    state: SolverState,
}

impl RidgeSolver {
    pub fn new(base: &Dataset, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
        }
        if base.is_empty() {
            return Ok(Self { lambda, dim: base.dim, base: ModelParams::zeros(base.dim), state: SolverState::Empty });
        }
        check_ridge_input(base, lambda)?;
        let a = base.feature_matrix();
        let b = base.labels();
        if base.dim > base.len() + 1 {
            let mut kernel = &a * a.transpose();
            for i in 0..base.len() {
                kernel[(i, i)] += lambda;
            }
            let chol = kernel.clone().cholesky().ok_or(Error::Singular { residual: f64::INFINITY })?;
            let alpha = chol.solve(&b);
            let res = relative_residual(&kernel, &alpha, &b);
            if res > RESIDUAL_TOL {
                return Err(Error::Singular { residual: res });
            }
            let mut u0 = b.clone();
            chol.l_dirty().solve_lower_triangular_mut(&mut u0);
            let theta = a.tr_mul(&alpha);
            Ok(Self {
                lambda,
                dim: base.dim,
                base: ModelParams { weights: theta.iter().copied().collect() },
                state: SolverState::Dual { a, chol, u0 },
            })
        } else {
            let mut gram = a.transpose() * &a;
            for j in 0..base.dim {
                gram[(j, j)] += lambda;
            }
            let rhs = a.tr_mul(&b);
            let chol = gram.clone().cholesky().ok_or(Error::Singular { residual: f64::INFINITY })?;
            let theta = chol.solve(&rhs);
            let res = relative_residual(&gram, &theta, &rhs);
            if res > RESIDUAL_TOL {
                return Err(Error::Singular { residual: res });
            }
            Ok(Self {
                lambda,
                dim: base.dim,
                base: ModelParams { weights: theta.iter().copied().collect() },
                state: SolverState::Primal { chol },
            })
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The fit on the base set alone.
    pub fn base_model(&self) -> ModelParams {
        self.base.clone()
    }

    /// The fit on the base set plus `point`.
    pub fn with_point(&self, point: &LabeledPoint) -> Result<ModelParams> {
        if point.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.dim() });
        }
        if !point.is_finite() {
            return Err(Error::NonFinite { what: "training point", index: 0 });
        }
        count_invocation();
        let x = DVector::from_column_slice(&point.features);
        let y = point.label;
        let kappa = x.dot(&x) + self.lambda;
        let theta = match &self.state {
            SolverState::Empty => &x * (y / kappa),
            SolverState::Dual { a, chol, u0 } => {
                let l = chol.l_dirty();
                let mut z = a * &x;
                l.solve_lower_triangular_mut(&mut z);
                let s = kappa - z.dot(&z);
                if !(s > 0.0) {
                    return Err(Error::Singular { residual: s });
                }
                let root = s.sqrt();
                let u_last = (y - z.dot(u0)) / root;
                let alpha_last = u_last / root;
                let mut alpha_top = u0 - &z * alpha_last;
                l.tr_solve_lower_triangular_mut(&mut alpha_top);
                a.tr_mul(&alpha_top) + &x * alpha_last
            }
            SolverState::Primal { chol } => {
                let theta0 = DVector::from_column_slice(&self.base.weights);
                let v = chol.solve(&x);
                let gain = (y - x.dot(&theta0)) / (1.0 + x.dot(&v));
                theta0 + v * gain
            }
        };
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "ridge weight", index: i });
        }
        Ok(ModelParams { weights: theta.iter().copied().collect() })
    }
}

/// DP-SGD; see [`train_dpsgd_observed`].
pub fn train_dpsgd(data: &Dataset, cfg: &TrainerConfig, seed: u64) -> Result<ModelParams> {
    train_dpsgd_observed(data, cfg, seed, &mut |_| {})
}

/// DP-SGD from `θ = 0`. Each epoch draws a fresh permutation and walks it in
/// minibatches (the last one may be short). Per-example gradients of
/// `(aᵀθ − b)² + λ‖θ‖²` are clipped to `clip_norm` and summed, Gaussian
/// noise with std `noise_sd · clip_norm` is added, and the sum is divided by
/// the batch size before a step of size `lr`.
///
/// `observe` receives the norm of every clipped per-example gradient.
pub fn train_dpsgd_observed(
    data: &Dataset,
    cfg: &TrainerConfig,
    seed: u64,
    observe: &mut dyn FnMut(f64),
) -> Result<ModelParams> {
    cfg.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::invalid("DP-SGD needs at least one training point"));
    }
    if cfg.batch_size > n {
        return Err(Error::invalid(format!("batch_size {} exceeds training size {n}", cfg.batch_size)));
    }
    if let Some(i) = data.points.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite { what: "training point", index: i });
    }
    count_invocation();

    let d = data.dim;
    let sq_norms: Vec<f64> = data.points.iter().map(|p| p.features.iter().map(|v| v * v).sum()).collect();
    let lam = cfg.l2_lambda;
    let noise_scale = cfg.noise_sd * cfg.clip_norm;
    let add_noise = noise_scale > 0.0 && noise_scale.is_finite();

    let mut rng = rng::from_seed(seed);
    let mut theta = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let theta_sq: f64 = theta.iter().map(|v| v * v).sum();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut penalty_mass = 0.0;
            for &i in batch {
                let p = &data.points[i];
                let pred: f64 = p.features.iter().zip(&theta).map(|(x, w)| x * w).sum();
                let r = pred - p.label;
                // ‖2r·a + 2λθ‖² from inner products, without forming the vector.
                let norm_sq = 4.0 * r * r * sq_norms[i] + 8.0 * r * lam * pred + 4.0 * lam * lam * theta_sq;
                let norm = norm_sq.max(0.0).sqrt();
                if !norm.is_finite() {
                    return Err(Error::NonFinite { what: "gradient", index: step });
                }
                let scale = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
                observe(norm * scale);
                let coef = 2.0 * r * scale;
                for (g, x) in grad.iter_mut().zip(&p.features) {
                    *g += coef * x;
                }
                penalty_mass += 2.0 * lam * scale;
            }
            if penalty_mass != 0.0 {
                for (g, w) in grad.iter_mut().zip(&theta) {
                    *g += penalty_mass * w;
                }
            }
            if add_noise {
                for g in grad.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *g += noise_scale * e;
                }
            }
            let step_size = cfg.lr / batch.len() as f64;
            for (w, g) in theta.iter_mut().zip(&grad) {
                *w -= step_size * g;
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "gradient", index: step });
            }
            step += 1;
        }
    }
    Ok(ModelParams { weights: theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{make_problem, sample_members};

    fn random_data(seed: u64, n: usize, d: usize) -> Dataset {
        let spec = make_problem(seed, d.max(2), 0.3).unwrap();
        let data = sample_members(&spec, n, seed + 1).unwrap();
        if d >= 2 {
            data
        } else {
            let pts = data.points.into_iter().map(|p| LabeledPoint::new(vec![p.features[0]], p.label)).collect();
            Dataset::new(pts, 1).unwrap()
        }
    }

    fn objective_gradient(data: &Dataset, theta: &[f64], lambda: f64) -> f64 {
        let mut g: Vec<f64> = theta.iter().map(|w| 2.0 * lambda * w).collect();
        for p in &data.points {
            let r: f64 = p.features.iter().zip(theta).map(|(x, w)| x * w).sum::<f64>() - p.label;
            g.iter_mut().zip(&p.features).for_each(|(gi, x)| *gi += 2.0 * r * x);
        }
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn one_point_scalar_ridge() {
        let data = Dataset::new(vec![LabeledPoint::new(vec![1.0], 2.0)], 1).unwrap();
        let m = train_ridge(&data, 1.0).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ridge_shrinks_with_lambda() {
        let data = random_data(3, 6, 4);
        let mut last = f64::INFINITY;
        for lambda in [1e-2, 1e-1, 1.0, 10.0, 1e2, 1e4, 1e8] {
            let n = train_ridge(&data, lambda).unwrap().norm();
            assert!(n < last);
            last = n;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn primal_and_dual_agree() {
        for seed in 0..20 {
            let data = random_data(seed, 5, 8);
            let p = train_ridge_primal(&data, 0.7).unwrap();
            let d = train_ridge_dual(&data, 0.7).unwrap();
            for (a, b) in p.weights.iter().zip(&d.weights) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ridge_is_stationary() {
        for (n, d) in [(5, 8), (10, 3), (40, 60)] {
            let data = random_data(n as u64, n, d);
            let m = train_ridge(&data, 0.3).unwrap();
            assert!(objective_gradient(&data, &m.weights, 0.3) <= 1e-6 * (1.0 + m.norm()));
        }
    }

    #[test]
    fn ridge_rejects_bad_input() {
        assert!(train_ridge(&Dataset::empty(2), 1.0).is_err());
        assert!(train_ridge(&random_data(1, 3, 2), 0.0).is_err());
    }

    #[test]
    fn incremental_solver_matches_refit() {
        for (n, d) in [(6, 20), (20, 5), (0, 4)] {
            let base = if n == 0 { Dataset::empty(d) } else { random_data(9, n, d) };
            let extra = random_data(10, 3, d);
            let solver = RidgeSolver::new(&base, 2.5).unwrap();
            if n > 0 {
                let direct = train_ridge(&base, 2.5).unwrap();
                for (a, b) in solver.base_model().weights.iter().zip(&direct.weights) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
            for p in &extra.points {
                let fast = solver.with_point(p).unwrap();
                let slow = train_ridge(&base.with_point(p).unwrap(), 2.5).unwrap();
                for (a, b) in fast.weights.iter().zip(&slow.weights) {
                    assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn loss_examples() {
        let p = LabeledPoint::new(vec![1.0], 1.0);
        assert_eq!(loss(&ModelParams { weights: vec![1.0] }, &p).unwrap(), 0.0);
        let p = LabeledPoint::new(vec![3.0], 2.0);
        assert_eq!(loss(&ModelParams { weights: vec![0.0] }, &p).unwrap(), 4.0);
        assert!(loss(&ModelParams { weights: vec![0.0, 1.0] }, &p).is_err());
    }

    #[test]
    fn training_loss_below_test_loss() {
        let mut wins = 0;
        for seed in 0..50 {
            let spec = make_problem(seed, 60, 0.5).unwrap();
            let train = sample_members(&spec, 20, seed + 100).unwrap();
            let test = sample_members(&spec, 20, seed + 200).unwrap();
            let m = train_ridge(&train, 1e-3).unwrap();
            let mean = |d: &Dataset| d.points.iter().map(|p| loss(&m, p).unwrap()).sum::<f64>() / d.len() as f64;
            if mean(&train) <= mean(&test) {
                wins += 1;
            }
        }
        assert_eq!(wins, 50);
    }

    #[test]
    fn dpsgd_without_noise_is_gradient_descent() {
        let data = random_data(4, 16, 3);
        let cfg = TrainerConfig {
            lr: 1e-3,
            epochs: 1,
            batch_size: 16,
            clip_norm: f64::INFINITY,
            noise_sd: 0.0,
            l2_lambda: 0.0,
            ..TrainerConfig::dp_sgd()
        };
        let m = train_dpsgd(&data, &cfg, 1).unwrap();
        // One step from zero: θ = −lr · mean(−2 b a).
        let mut expected = vec![0.0; 3];
        for p in &data.points {
            for (e, x) in expected.iter_mut().zip(&p.features) {
                *e += cfg.lr * 2.0 * p.label * x / 16.0;
            }
        }
        for (a, b) in m.weights.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dpsgd_clips_every_contribution() {
        let data = random_data(5, 50, 10);
        let cfg = TrainerConfig { epochs: 3, batch_size: 8, clip_norm: 0.5, ..TrainerConfig::dp_sgd() };
        let mut count = 0;
        let mut max = 0.0f64;
        train_dpsgd_observed(&data, &cfg, 3, &mut |n| {
            count += 1;
            max = max.max(n);
        })
        .unwrap();
        assert_eq!(count, 150);
        assert!(max <= 0.5 + 1e-12);
    }

    #[test]
    fn dpsgd_determinism() {
        let data = random_data(6, 40, 5);
        let cfg = TrainerConfig { epochs: 2, batch_size: 16, ..TrainerConfig::dp_sgd() };
        let a = train_dpsgd(&data, &cfg, 1).unwrap();
        let b = train_dpsgd(&data, &cfg, 1).unwrap();
        let c = train_dpsgd(&data, &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let big = TrainerConfig { batch_size: 41, ..cfg };
        assert!(train_dpsgd(&data, &big, 1).is_err());
    }

    #[test]
    fn empty_training_set_gives_zero_model() {
        let m = TrainerConfig::ridge(1.0).train(&Dataset::empty(3), 0).unwrap();
        assert_eq!(m.weights, vec![0.0; 3]);
    }

    #[test]
    fn export_round_trips() {
        let m = ModelParams { weights: vec![1.5, -2.0, 1e-300] };
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(ModelParams::read_binary(buf.as_slice()).unwrap(), m);
        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("index,weight\n0,1.5e0\n"));
    }

    #[test]
    fn config_json_and_fingerprint() {
        let cfg = TrainerConfig::dp_sgd();
        let back: TrainerConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.fingerprint(), back.fingerprint());
        assert_ne!(cfg.fingerprint(), TrainerConfig::ridge(1.0).fingerprint());
        assert!(TrainerConfig { lr: 0.0, ..cfg }.validate().is_err());
    }
}
