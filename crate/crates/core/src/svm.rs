//! Soft-margin kernel SVM trained with sequential minimal optimization.
//!
//! The dual
//!
//! ```text
//! max  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
//! s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0
//! ```
//!
//! is solved two multipliers at a time. The first multiplier is the worst
//! KKT violator among those allowed to move up; the second maximizes
//! `|E_1 - E_2|` among those allowed to move down (the maximal violating
//! pair). Iteration stops once the violation gap is at most `tol`, which
//! leaves every point within `tol` of its KKT condition.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TARGET;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

const TAU: f64 = 1e-12;
/// Floor on the iteration cap; small but badly conditioned problems (a
/// linear kernel with large C on overlapping classes) need far more than 10n.
const MIN_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel {
    Rbf,
    Linear,
    Polynomial { degree: u32, coef0: f64 },
}

/// RBF width: a fixed value or `1 / (p * var(X))` over all training entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Value(f64),
    Named(GammaRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: Kernel,
    pub gamma: Gamma,
    pub tol: f64,
    /// Iteration cap as a multiple of the training-set size (at least 100 000).
    pub max_iter_factor: usize,
    /// Budget for cached kernel rows, in MiB.
    pub cache_mb: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: Kernel::Rbf,
            gamma: Gamma::Named(GammaRule::Scale),
            tol: 1e-3,
            max_iter_factor: 10,
            cache_mb: 500,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig("svm: C must be positive".into()));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig("svm: gamma must be positive".into()));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("svm: tol must be positive".into()));
        }
        Ok(())
    }

    fn resolve_gamma(&self, x: &Matrix) -> f64 {
        match self.gamma {
            Gamma::Value(g) => g,
            Gamma::Named(GammaRule::Scale) => {
                let n = x.data().len() as f64;
                let mean = x.data().iter().sum::<f64>() / n;
                let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (x.cols() as f64 * var)
                } else {
                    1.0
                }
            }
        }
    }
}

pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

fn kernel_value(kernel: Kernel, gamma: f64, x: &[f64], z: &[f64]) -> f64 {
    match kernel {
        Kernel::Rbf => rbf_kernel(x, z, gamma),
        Kernel::Linear => crate::linalg::dot(x, z),
        Kernel::Polynomial { degree, coef0 } => {
            (gamma * crate::linalg::dot(x, z) + coef0).powi(degree as i32)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub gamma: f64,
    pub support_vectors: Matrix,
    /// Row indices of the support vectors in the training matrix.
    pub support_indices: Vec<usize>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn score_one(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coefficients)
            .map(|(sv, c)| c * kernel_value(self.kernel, self.gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.score_one(r)).collect())
    }

    /// Dual objective `sum a - 1/2 a^T Q a` at the fitted multipliers.
    pub fn dual_objective(&self) -> f64 {
        let coef = &self.dual_coefficients;
        let mut quad = 0.0;
        for (i, si) in self.support_vectors.iter_rows().enumerate() {
            for (j, sj) in self.support_vectors.iter_rows().enumerate() {
                quad += coef[i] * coef[j] * kernel_value(self.kernel, self.gamma, si, sj);
            }
        }
        coef.iter().map(|c| c.abs()).sum::<f64>() - 0.5 * quad
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.score(x)?.into_iter().map(|s| u8::from(s > 0.0)).collect())
    }
}

pub fn score_svm(model: &SvmModel, x: &Matrix) -> Result<Vec<f64>> {
    model.score(x)
}

/// Least-recently-used cache of kernel matrix rows.
struct KernelCache<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    last_used: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Matrix, kernel: Kernel, gamma: f64, cache_mb: usize) -> Self {
        let n = x.rows();
        let row_bytes = (n * std::mem::size_of::<f64>()).max(1);
        let capacity = (cache_mb.saturating_mul(1 << 20) / row_bytes).clamp(2, n.max(2));
        Self {
            x,
            kernel,
            gamma,
            rows: vec![None; n],
            last_used: vec![0; n],
            clock: 0,
            cached: 0,
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        self.last_used[i] = self.clock;
        if self.rows[i].is_none() {
            if self.cached == self.capacity {
                let victim = (0..self.rows.len())
                    .filter(|&k| k != i && self.rows[k].is_some())
                    .min_by_key(|&k| self.last_used[k])
                    .expect("cache is full");
                self.rows[victim] = None;
                self.cached -= 1;
            }
            let xi = self.x.row(i);
            let row = self
                .x
                .iter_rows()
                .map(|xj| kernel_value(self.kernel, self.gamma, xi, xj))
                .collect();
            self.rows[i] = Some(row);
            self.cached += 1;
        }
        self.rows[i].as_deref().expect("just filled")
    }
}

/// Trains on rows of `x` with labels `y` (1 = target, mapped to +1).
pub fn fit_svm(x: &Matrix, y: &[u8], cfg: &SvmConfig) -> Result<SvmModel> {
    cfg.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    let ys: Vec<f64> = y.iter().map(|&l| if l == TARGET { 1.0 } else { -1.0 }).collect();
    if !(ys.contains(&1.0) && ys.contains(&-1.0)) {
        return Err(Error::NeedTwoClasses);
    }
    let gamma = cfg.resolve_gamma(x);
    let c = cfg.c;
    let mut cache = KernelCache::new(x, cfg.kernel, gamma, cfg.cache_mb);
    let diag: Vec<f64> = x
        .iter_rows()
        .map(|r| kernel_value(cfg.kernel, gamma, r, r))
        .collect();
    // seeded random priority for breaking ties; picking by rank rather than
    // by sequential draws keeps the choice independent of label orientation
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(&mut SeededRng::new(cfg.seed));

    let mut alpha = vec![0.0; n];
    // gradient of the minimization form 1/2 a^T Q a - e^T a
    let mut grad = vec![-1.0; n];
    let max_iter = (cfg.max_iter_factor.saturating_mul(n)).max(MIN_ITERATIONS);
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    while iterations < max_iter {
        // -y_t G_t equals b - E_t up to a shared constant, so extremes of it
        // are extremes of the prediction error E.
        let mut i = usize::MAX;
        let mut best_up = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best_low = f64::INFINITY;
        for t in 0..n {
            let f = -ys[t] * grad[t];
            if in_up(alpha[t], ys[t]) && (f > best_up || (f == best_up && rank[t] < rank[i])) {
                best_up = f;
                i = t;
            }
            if in_low(alpha[t], ys[t]) && (f < best_low || (f == best_low && rank[t] < rank[j])) {
                best_low = f;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || best_up - best_low <= cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let k_ij = cache.row(i)[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ai, aj) = pair_update(old_i, old_j, ys[i], ys[j], grad[i], grad[j], diag[i], diag[j], k_ij, c);
        let di = ai - old_i;
        let dj = aj - old_j;
        if di == 0.0 && dj == 0.0 {
            // numerically stuck on this pair; nothing more the first-order
            // selection can do
            break;
        }
        alpha[i] = ai;
        alpha[j] = aj;

        // objective change of the minimization form; must not increase
        let q_ij = ys[i] * ys[j] * k_ij;
        let delta_obj = grad[i] * di
            + grad[j] * dj
            + 0.5 * (diag[i] * di * di + 2.0 * q_ij * di * dj + diag[j] * dj * dj);
        debug_assert!(
            delta_obj <= 1e-12 * (1.0 + delta_obj.abs()),
            "dual objective decreased by {delta_obj:e}"
        );

        let ci = ys[i] * di;
        let cj = ys[j] * dj;
        let row_i: Vec<f64> = cache.row(i).to_vec();
        let row_j = cache.row(j);
        for t in 0..n {
            grad[t] += ys[t] * (ci * row_i[t] + cj * row_j[t]);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tol {}", cfg.tol);
    }

    let bias = compute_bias(&alpha, &ys, &grad, c);
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        kernel: cfg.kernel,
        gamma,
        support_vectors: x.select_rows(&sv),
        support_indices: sv.clone(),
        dual_coefficients: sv.iter().map(|&t| alpha[t] * ys[t]).collect(),
        bias,
        converged,
        iterations,
    })
}

/// Analytic two-variable step with clipping to the box, keeping
/// `y_i a_i + y_j a_j` fixed.
#[allow(clippy::too_many_arguments)]
fn pair_update(
    ai: f64,
    aj: f64,
    yi: f64,
    yj: f64,
    gi: f64,
    gj: f64,
    kii: f64,
    kjj: f64,
    kij: f64,
    c: f64,
) -> (f64, f64) {
    let (mut ai, mut aj) = (ai, aj);
    if yi != yj {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (-gi - gj) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (gi - gj) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    (ai.clamp(0.0, c), aj.clamp(0.0, c))
}

/// Bias as the mean of `y_t - u_t` over free multipliers, or the midpoint of
/// the feasible interval when every multiplier sits at a bound.
fn compute_bias(alpha: &[f64], ys: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let f = -ys[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += f;
            free_n += 1;
        } else if (ys[t] > 0.0) == (alpha[t] <= 0.0) {
            // can only move up: b is at least f
            lower = lower.max(f);
        } else {
            upper = upper.min(f);
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if upper.is_finite() && lower.is_finite() {
        0.5 * (upper + lower)
    } else if upper.is_finite() {
        upper
    } else {
        lower
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(rng: &mut SeededRng, n: usize, sep: f64, dim: usize) -> (Matrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let shift = if label == 1 { sep } else { -sep };
            let row: Vec<f64> = (0..dim)
                .map(|d| {
                    let g: f64 = StandardNormal.sample(rng);
                    g + if d == 0 { shift } else { 0.0 }
                })
                .collect();
            rows.push(row);
            y.push(label);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3), 1.0);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0) - 0.367879).abs() < 1e-6);
        assert!((rbf_kernel(&[5.0, -3.0], &[-4.0, 2.0], 1e-12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_symmetric_points() {
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![-1.0, -0.5]]).unwrap();
        let cfg = SvmConfig {
            gamma: Gamma::Value(0.5),
            ..SvmConfig::default()
        };
        let m = fit_svm(&x, &[1, 0], &cfg).unwrap();
        assert_eq!(m.support_vectors.rows(), 2);
        assert!(m.bias.abs() < 1e-12);
        assert!((m.dual_coefficients[0] + m.dual_coefficients[1]).abs() < 1e-12);
    }

    #[test]
    fn separable_set_fits_perfectly() {
        let mut rng = SeededRng::new(3);
        let (x, y) = toy(&mut rng, 20, 3.0, 2);
        let cfg = SvmConfig {
            gamma: Gamma::Value(10.0),
            ..SvmConfig::default()
        };
        let m = fit_svm(&x, &y, &cfg).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y);
    }

    #[test]
    fn scores_match_direct_kernel_sum() {
        let mut rng = SeededRng::new(4);
        let (x, y) = toy(&mut rng, 30, 1.0, 3);
        let m = fit_svm(&x, &y, &SvmConfig::default()).unwrap();
        let (xt, _) = toy(&mut rng, 10, 1.0, 3);
        let scores = m.score(&xt).unwrap();
        for (r, s) in xt.iter_rows().zip(&scores) {
            let mut acc = m.bias;
            for i in 0..m.support_vectors.rows() {
                let sv = m.support_vectors.row(i);
                let mut d2 = 0.0;
                for k in 0..sv.len() {
                    d2 += (sv[k] - r[k]) * (sv[k] - r[k]);
                }
                acc += m.dual_coefficients[i] * (-m.gamma * d2).exp();
            }
            assert!((acc - s).abs() < 1e-10);
        }
    }

    #[test]
    fn free_support_vectors_sit_on_margin() {
        let mut rng = SeededRng::new(5);
        let (x, y) = toy(&mut rng, 40, 1.0, 2);
        let cfg = SvmConfig::default();
        let m = fit_svm(&x, &y, &cfg).unwrap();
        assert!(m.converged);
        let scores = m.score(&m.support_vectors).unwrap();
        for (coef, s) in m.dual_coefficients.iter().zip(&scores) {
            let a = coef.abs();
            if a > 1e-9 && a < cfg.c - 1e-9 {
                assert!((coef.signum() * s - 1.0).abs() <= cfg.tol, "{s}");
            }
        }
    }

    #[test]
    fn deep_target_scores_positive() {
        let mut rng = SeededRng::new(6);
        let (x, y) = toy(&mut rng, 40, 2.0, 2);
        let m = fit_svm(&x, &y, &SvmConfig::default()).unwrap();
        assert!(m.score_one(&[4.0, 0.0]) > 0.0);
        assert!(m.score_one(&[-4.0, 0.0]) < 0.0);
    }

    #[test]
    fn dual_feasibility() {
        let mut rng = SeededRng::new(7);
        let (x, y) = toy(&mut rng, 60, 0.5, 4);
        let cfg = SvmConfig::default();
        let m = fit_svm(&x, &y, &cfg).unwrap();
        let sum: f64 = m.dual_coefficients.iter().sum();
        assert!(sum.abs() <= 1e-8);
        assert!(m.dual_coefficients.iter().all(|c| c.abs() <= cfg.c + 1e-15));
    }

    #[test]
    fn label_flip_negates_scores() {
        let mut rng = SeededRng::new(8);
        let (x, y) = toy(&mut rng, 30, 0.7, 2);
        let flipped: Vec<u8> = y.iter().map(|l| 1 - l).collect();
        let cfg = SvmConfig::default();
        let a = fit_svm(&x, &y, &cfg).unwrap();
        let b = fit_svm(&x, &flipped, &cfg).unwrap();
        let sa = a.score(&x).unwrap();
        let sb = b.score(&x).unwrap();
        for (p, q) in sa.iter().zip(&sb) {
            assert!((p + q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn tiny_cache_gives_same_model() {
        let mut rng = SeededRng::new(9);
        let (x, y) = toy(&mut rng, 50, 0.8, 3);
        let big = fit_svm(&x, &y, &SvmConfig::default()).unwrap();
        let small = fit_svm(&x, &y, &SvmConfig { cache_mb: 0, ..SvmConfig::default() }).unwrap();
        assert_eq!(big, small);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(fit_svm(&x, &[0, 0], &SvmConfig::default()), Err(Error::NeedTwoClasses)));
    }

    #[test]
    fn gamma_config_round_trips_through_toml() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            svm: SvmConfig,
        }
        let text = toml::to_string(&Wrap { svm: SvmConfig::default() }).unwrap();
        assert!(text.contains("gamma = \"scale\""), "{text}");
        let back: Wrap = toml::from_str(&text).unwrap();
        assert_eq!(back.svm, SvmConfig::default());
        let numeric: Wrap = toml::from_str("[svm]\ngamma = 0.25\n").unwrap();
        assert_eq!(numeric.svm.gamma, Gamma::Value(0.25));
    }
}
