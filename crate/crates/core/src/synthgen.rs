//! Synthetic Gaussian data-generating processes.
//!
//! Members come from `P_T`: `a ~ N(0, I_d)`, `b | a ~ N(aᵀw⋆, σ²)`.
//! Shifted non-members come from `P_0`, identical except `a ~ N(μ, I_d)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::{PropensityKind, PropensityModel};
use crate::rng;

/// Data-generating process shared by members and shifted non-members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    pub teacher: Vec<f64>,
    pub shift: Vec<f64>,
    #[serde(default = "default_noise")]
    pub label_noise_sd: f64,
    pub teacher_shift_corr: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn is_finite(&self) -> bool {
        self.label.is_finite() && self.features.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<LabeledPoint>,
    pub dim: usize,
}

impl Dataset {
    pub fn new(points: Vec<LabeledPoint>, dim: usize) -> Result<Self> {
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.dim() });
            }
        }
        Ok(Self { points, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Self { points: Vec::new(), dim }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Row-major `n × d` feature matrix.
    pub fn feature_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.len(), self.dim, |i, j| self.points[i].features[j])
    }

    pub fn labels(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(self.len(), self.points.iter().map(|p| p.label))
    }

    /// Concatenation `self ∪ other` (order preserved).
    pub fn union(&self, other: &Dataset) -> Result<Dataset> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        Ok(Dataset { points, dim: self.dim })
    }

    pub fn with_point(&self, point: &LabeledPoint) -> Result<Dataset> {
        if point.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.dim() });
        }
        let mut points = self.points.clone();
        points.push(point.clone());
        Ok(Dataset { points, dim: self.dim })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Builds a problem whose unit teacher has cosine `corr` with a uniformly
/// random unit shift direction.
pub fn make_problem(seed: u64, dim: usize, corr: f64) -> Result<ProblemSpec> {
    if dim == 0 {
        return Err(Error::invalid("dim must be positive"));
    }
    if !(-1.0..=1.0).contains(&corr) {
        return Err(Error::invalid(format!("correlation {corr} outside [-1, 1]")));
    }
    if dim < 2 && corr.abs() < 1.0 {
        return Err(Error::invalid("|corr| < 1 needs dim >= 2 (no orthogonal direction)"));
    }
    let mut rng = rng::from_seed(seed);

    let mut shift = gaussian_vector(&mut rng, dim);
    let n = norm(&shift);
    shift.iter_mut().for_each(|v| *v /= n);

    let teacher = if corr.abs() == 1.0 {
        shift.iter().map(|v| corr * v).collect()
    } else {
        let mut v = gaussian_vector(&mut rng, dim);
        // Two Gram-Schmidt passes keep vᵀμ at round-off level.
        for _ in 0..2 {
            let p = dot(&v, &shift);
            v.iter_mut().zip(&shift).for_each(|(x, m)| *x -= p * m);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let ortho = (1.0 - corr * corr).sqrt();
        let mut w: Vec<f64> = shift.iter().zip(&v).map(|(m, x)| corr * m + ortho * x).collect();
        let nw = norm(&w);
        w.iter_mut().for_each(|x| *x /= nw);
        w
    };

    let spec = ProblemSpec {
        dim,
        teacher,
        shift,
        label_noise_sd: 1.0,
        teacher_shift_corr: corr,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        for len in [self.teacher.len(), self.shift.len()] {
            if len != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: len });
            }
        }
        if !(self.label_noise_sd >= 0.0 && self.label_noise_sd.is_finite()) {
            return Err(Error::invalid("label_noise_sd must be finite and non-negative"));
        }
        let tn = norm(&self.teacher);
        if !(tn > 0.0 && tn.is_finite()) {
            return Err(Error::invalid("teacher must have positive finite norm"));
        }
        let sn = norm(&self.shift);
        if sn > 0.0 {
            let proj = dot(&self.teacher, &self.shift) / sn;
            let target = self.teacher_shift_corr * tn;
            if (proj - target).abs() > 1e-9 * tn.max(1.0) {
                return Err(Error::invalid(format!(
                    "teacher/shift correlation {} differs from declared {}",
                    proj / tn,
                    self.teacher_shift_corr
                )));
            }
        }
        Ok(())
    }

    pub fn teacher_norm(&self) -> f64 {
        norm(&self.teacher)
    }

    pub fn shift_norm(&self) -> f64 {
        norm(&self.shift)
    }

    /// Rescales the teacher; the teacher/shift cosine is unchanged.
    pub fn with_teacher_norm(mut self, target: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::invalid("teacher norm must be positive"));
        }
        let s = target / self.teacher_norm();
        self.teacher.iter_mut().for_each(|v| *v *= s);
        Ok(self)
    }

    /// Rescales the shift vector; zero removes the shift.
    pub fn with_shift_norm(mut self, target: f64) -> Result<Self> {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::invalid("shift norm must be non-negative"));
        }
        let n = self.shift_norm();
        if n == 0.0 {
            if target > 0.0 {
                return Err(Error::invalid("cannot rescale a zero shift"));
            }
            return Ok(self);
        }
        let s = target / n;
        self.shift.iter_mut().for_each(|v| *v *= s);
        Ok(self)
    }

    pub fn with_label_noise(mut self, sd: f64) -> Result<Self> {
        self.label_noise_sd = sd;
        self.validate()?;
        Ok(self)
    }

    fn sample(&self, n: usize, seed: u64, shifted: bool) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let mut rng = rng::from_seed(seed);
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let mut a = gaussian_vector(&mut rng, self.dim);
            if shifted {
                a.iter_mut().zip(&self.shift).for_each(|(x, m)| *x += m);
            }
            let eps: f64 = rng.sample(StandardNormal);
            let b = dot(&a, &self.teacher) + self.label_noise_sd * eps;
            points.push(LabeledPoint::new(a, b));
        }
        Ok(Dataset { points, dim: self.dim })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `n` i.i.d. draws from the member distribution `P_T`.
pub fn sample_members(spec: &ProblemSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.sample(n, seed, false)
}

/// `n` i.i.d. draws from the shifted distribution `P_0`. Consumes the random
/// stream exactly as [`sample_members`], so a zero shift reproduces it.
pub fn sample_shifted(spec: &ProblemSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.sample(n, seed, true)
}

/// Log density ratio `log p_T(a) − log p_0(a) = −aᵀμ + ‖μ‖²/2`.
pub fn log_density_ratio(spec: &ProblemSpec, features: &[f64]) -> f64 {
    let m2 = dot(&spec.shift, &spec.shift);
    -dot(features, &spec.shift) + 0.5 * m2
}

/// True propensity for a pool of `n_member` draws from `P_T` and
/// `n_nonmember` draws from `P_0`: `r(a) / (r(a) + n₀/n₁)`.
///
/// Its log-odds are affine in `a`, so it is stored as an affine logistic
/// model with intercept `‖μ‖²/2 + log(n₁/n₀)` and slope `−μ`.
pub fn oracle_propensity(spec: &ProblemSpec, n_member: usize, n_nonmember: usize) -> Result<PropensityModel> {
    if n_member == 0 || n_nonmember == 0 {
        return Err(Error::invalid("group sizes must be positive"));
    }
    let m2 = dot(&spec.shift, &spec.shift);
    let mut weights = Vec::with_capacity(spec.dim + 1);
    weights.push(0.5 * m2 + (n_member as f64 / n_nonmember as f64).ln());
    weights.extend(spec.shift.iter().map(|m| -m));
    Ok(PropensityModel::affine(
        PropensityKind::Oracle,
        weights,
        format!("gaussian density ratio, n1={n_member}, n0={n_nonmember}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_log_density(x: &[f64], mean: &[f64]) -> f64 {
        let d = x.len() as f64;
        let q: f64 = x.iter().zip(mean).map(|(a, m)| (a - m) * (a - m)).sum();
        -0.5 * q - 0.5 * d * (2.0 * std::f64::consts::PI).ln()
    }

    #[test]
    fn correlation_constraint_holds() {
        let spec = make_problem(3, 400, 0.9).unwrap();
        let proj = dot(&spec.teacher, &spec.shift) / spec.shift_norm();
        assert!((proj - 0.9).abs() < 1e-9);
        assert!((spec.teacher_norm() - 1.0).abs() < 1e-12);
        assert!((spec.shift_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_orthogonal_correlations() {
        let spec = make_problem(5, 5, 1.0).unwrap();
        assert_eq!(spec.teacher, spec.shift);
        let spec = make_problem(5, 5, 0.0).unwrap();
        assert!(dot(&spec.teacher, &spec.shift).abs() < 1e-9);
        assert!(make_problem(1, 1, 0.5).is_err());
        assert!(make_problem(1, 1, -1.0).is_ok());
        assert!(make_problem(1, 3, 1.5).is_err());
    }

    #[test]
    fn correlation_constraint_many_seeds() {
        for seed in 0..1000 {
            let corr = ((seed % 21) as f64 - 10.0) / 10.0;
            let spec = make_problem(seed, 2 + (seed as usize % 7), corr).unwrap();
            let proj = dot(&spec.teacher, &spec.shift) / spec.shift_norm();
            assert!((proj - corr * spec.teacher_norm()).abs() <= 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn rescaling_keeps_correlation() {
        let spec = make_problem(9, 50, 0.9).unwrap().with_teacher_norm(50f64.sqrt()).unwrap();
        spec.validate().unwrap();
        assert!((spec.teacher_norm() - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = make_problem(1, 6, 0.5).unwrap();
        let a = sample_members(&spec, 20, 42).unwrap();
        let b = sample_members(&spec, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_members(&spec, 20, 43).unwrap());
        assert_eq!(sample_members(&spec, 2000, 1).unwrap().len(), 2000);
        assert!(sample_members(&spec, 0, 1).is_err());
    }

    #[test]
    fn noiseless_labels_are_exact() {
        let spec = make_problem(1, 4, 0.3).unwrap().with_label_noise(0.0).unwrap();
        for p in sample_members(&spec, 50, 8).unwrap().points {
            assert_eq!(p.label, dot(&p.features, &spec.teacher));
        }
    }

    #[test]
    fn zero_shift_reproduces_members() {
        let spec = make_problem(2, 5, 0.2).unwrap().with_shift_norm(0.0).unwrap();
        assert_eq!(sample_members(&spec, 30, 4).unwrap(), sample_shifted(&spec, 30, 4).unwrap());
    }

    #[test]
    fn feature_means_concentrate() {
        let d = 8;
        let n = 100_000;
        let spec = make_problem(12, d, 0.9).unwrap();
        let tol = 3.0 * (d as f64 / n as f64).sqrt();
        for (shifted, target) in [(false, vec![0.0; d]), (true, spec.shift.clone())] {
            let data = if shifted {
                sample_shifted(&spec, n, 77).unwrap()
            } else {
                sample_members(&spec, n, 77).unwrap()
            };
            let mut mean = vec![0.0; d];
            for p in &data.points {
                mean.iter_mut().zip(&p.features).for_each(|(m, x)| *m += x / n as f64);
            }
            let err: f64 = mean.iter().zip(&target).map(|(m, t)| (m - t).powi(2)).sum::<f64>().sqrt();
            assert!(err < tol, "shifted={shifted}: {err} >= {tol}");
        }
    }

    #[test]
    fn density_ratio_matches_direct_evaluation() {
        let spec = make_problem(21, 3, 0.6).unwrap().with_shift_norm(1.7).unwrap();
        let zero = vec![0.0; 3];
        let data = sample_shifted(&spec, 200, 5).unwrap();
        for p in &data.points {
            let direct = gaussian_log_density(&p.features, &zero) - gaussian_log_density(&p.features, &spec.shift);
            assert!((log_density_ratio(&spec, &p.features) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_propensity_matches_density_oracle() {
        let spec = make_problem(21, 3, 0.6).unwrap();
        let zero = vec![0.0; 3];
        let (n1, n0) = (300usize, 700usize);
        let model = oracle_propensity(&spec, n1, n0).unwrap();
        for p in sample_members(&spec, 100, 9).unwrap().points {
            let pt = gaussian_log_density(&p.features, &zero).exp();
            let p0 = gaussian_log_density(&p.features, &spec.shift).exp();
            let direct = n1 as f64 * pt / (n1 as f64 * pt + n0 as f64 * p0);
            assert!((model.evaluate_features(&p.features).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_propensity_special_points() {
        let spec = make_problem(4, 6, 0.4).unwrap();
        let model = oracle_propensity(&spec, 10, 10).unwrap();
        let half: Vec<f64> = spec.shift.iter().map(|m| m / 2.0).collect();
        assert!((model.evaluate_features(&half).unwrap() - 0.5).abs() < 1e-15);

        let flat = spec.clone().with_shift_norm(0.0).unwrap();
        let model = oracle_propensity(&flat, 10, 10).unwrap();
        assert_eq!(model.evaluate_features(&[3.0, -1.0, 0.2, 9.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(model.evaluate_features(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = make_problem(1, 4, 0.9).unwrap();
        let back = ProblemSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(spec, back);
        let mut bad = spec.clone();
        bad.teacher_shift_corr = 0.1;
        assert!(ProblemSpec::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }
}
