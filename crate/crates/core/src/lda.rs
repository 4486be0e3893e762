//! Binary linear discriminant analysis with Ledoit-Wolf shrinkage of the
//! pooled within-class covariance.
//!
//! The shrinkage target is the scaled identity `m I` with `m = tr(S) / p`:
//!
//! ```text
//! d^2   = ||S - m I||_F^2 / p
//! b^2   = min(d^2, (1 / n^2) * sum_i ||x_i x_i^T - S||_F^2 / p)
//! rho   = b^2 / d^2                (0 when d^2 < 1e-15)
//! Sigma = rho m I + (1 - rho) S
//! ```
//!
//! The discriminant direction solves `Sigma w = mu_1 - mu_0` through the
//! eigendecomposition of `Sigma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TARGET;
use crate::linalg::{covariance, dot, sym_eig, Matrix};

const DEGENERATE_DISPERSION: f64 = 1e-15;
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageEstimate {
    pub covariance: Matrix,
    pub intensity: f64,
    pub target_scale: f64,
}

/// Ledoit-Wolf shrinkage toward the scaled identity.
///
/// With `centered = false` the column means are removed first.
pub fn ledoit_wolf(x: &Matrix, centered: bool) -> Result<ShrinkageEstimate> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let centered_x = if centered {
        x.clone()
    } else {
        let means = x.column_means();
        let mut c = x.clone();
        for i in 0..c.rows() {
            c.row_mut(i).iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
        }
        c
    };
    let s = covariance(&centered_x, true)?;
    let intensity = shrinkage_intensity(&centered_x, &s);
    Ok(shrink(&s, intensity))
}

/// Blends `s` with its scaled-identity target at the given intensity.
pub fn shrink(s: &Matrix, intensity: f64) -> ShrinkageEstimate {
    let p = s.rows();
    let m = s.trace() / p as f64;
    let mut cov = s.clone();
    for a in 0..p {
        for b in 0..p {
            let target = if a == b { m } else { 0.0 };
            cov[(a, b)] = intensity * target + (1.0 - intensity) * s[(a, b)];
        }
    }
    ShrinkageEstimate {
        covariance: cov,
        intensity,
        target_scale: m,
    }
}

fn shrinkage_intensity(centered_x: &Matrix, s: &Matrix) -> f64 {
    let n = centered_x.rows() as f64;
    let p = s.rows();
    let m = s.trace() / p as f64;
    let mut d2 = 0.0;
    for a in 0..p {
        for b in 0..p {
            let diff = s[(a, b)] - if a == b { m } else { 0.0 };
            d2 += diff * diff;
        }
    }
    d2 /= p as f64;
    if d2 < DEGENERATE_DISPERSION {
        return 0.0;
    }
    // ||x x^T - S||_F^2 = (x^T x)^2 - 2 x^T S x + ||S||_F^2
    let s_norm2 = s.data().iter().map(|v| v * v).sum::<f64>();
    let mut acc = 0.0;
    for row in centered_x.iter_rows() {
        let xx = dot(row, row);
        let sx = s.matvec(row).expect("square covariance");
        acc += xx * xx - 2.0 * dot(row, &sx) + s_norm2;
    }
    let b2 = (acc / (n * n) / p as f64).max(0.0).min(d2);
    (b2 / d2).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaConfig {
    /// Fixed shrinkage intensity in `[0, 1]`; `None` selects Ledoit-Wolf.
    pub fixed_shrinkage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub shrinkage_intensity: f64,
    pub class_means: [Vec<f64>; 2],
    pub priors: [f64; 2],
}

/// Fits the discriminant on rows of `x` with labels `y` (1 = target).
pub fn fit_lda(x: &Matrix, y: &[u8], cfg: &LdaConfig) -> Result<LdaModel> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let p = x.cols();
    let mut means = [vec![0.0; p], vec![0.0; p]];
    let mut counts = [0usize; 2];
    for (row, &label) in x.iter_rows().zip(y) {
        let k = usize::from(label == TARGET);
        counts[k] += 1;
        means[k].iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    if counts[0] < 2 || counts[1] < 2 {
        return Err(Error::NeedTwoClasses);
    }
    for k in 0..2 {
        let c = counts[k] as f64;
        means[k].iter_mut().for_each(|m| *m /= c);
    }

    let mut centered = x.clone();
    for (i, &label) in y.iter().enumerate() {
        let k = usize::from(label == TARGET);
        centered.row_mut(i).iter_mut().zip(&means[k]).for_each(|(v, m)| *v -= m);
    }
    let est = match cfg.fixed_shrinkage {
        None => ledoit_wolf(&centered, true)?,
        Some(rho) => {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidConfig(format!("lda: shrinkage {rho} outside [0, 1]")));
            }
            shrink(&covariance(&centered, true)?, rho)
        }
    };

    let delta: Vec<f64> = means[1].iter().zip(&means[0]).map(|(a, b)| a - b).collect();
    let weights = solve_via_eigen(&est.covariance, &delta)?;
    let n = y.len() as f64;
    let priors = [counts[0] as f64 / n, counts[1] as f64 / n];
    let midpoint: Vec<f64> = means[0].iter().zip(&means[1]).map(|(a, b)| 0.5 * (a + b)).collect();
    let bias = -dot(&weights, &midpoint) + (priors[1] / priors[0]).ln();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NumericOverflow { layer: 0 });
    }
    Ok(LdaModel {
        weights,
        bias,
        shrinkage_intensity: est.intensity,
        class_means: means,
        priors,
    })
}

/// `A^{-1} b` for symmetric positive semidefinite `A`, eigenvalues floored
/// at `1e-12 * lambda_max`.
fn solve_via_eigen(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let eig = sym_eig(a)?;
    let lambda_max = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = (EIGEN_FLOOR * lambda_max).max(f64::MIN_POSITIVE);
    let p = b.len();
    let mut w = vec![0.0; p];
    for (k, &lambda) in eig.values.iter().enumerate() {
        let v = eig.vectors.column(k);
        let coef = dot(&v, b) / lambda.max(floor);
        w.iter_mut().zip(&v).for_each(|(wi, vi)| *wi += coef * vi);
    }
    Ok(w)
}

impl LdaModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn score_one(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.score_one(r)).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.score(x)?.into_iter().map(|s| u8::from(s > 0.0)).collect())
    }
}

pub fn score_lda(model: &LdaModel, x: &Matrix) -> Result<Vec<f64>> {
    model.score(x)
}

pub fn predict_lda(model: &LdaModel, x: &Matrix) -> Result<Vec<u8>> {
    model.predict(x)
}
