//! Gaussian-process surrogate with a fixed squared-exponential kernel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("inputs have {rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("row {row} has dimension {found}, expected {expected}")]
    Dimension { row: usize, expected: usize, found: usize },
    #[error("row {row} is outside the unit cube")]
    OutsideUnitCube { row: usize },
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("covariance not positive definite even with noise {0:e}")]
    Factorization(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// One entry per dimension; a single entry is broadcast.
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl Default for GpHyper {
    fn default() -> Self {
        Self {
            lengthscales: vec![0.2],
            signal_variance: 1.0,
        }
    }
}

impl GpHyper {
    fn lengthscale(&self, dim: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[dim]
        }
    }

    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(d, (x, y))| {
                let z = (x - y) / self.lengthscale(d);
                z * z
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

pub const DEFAULT_NOISE: f64 = 1e-6;
const JITTER_RETRIES: usize = 3;

/// A fitted GP. Immutable after `gp_fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub x: Vec<Vec<f64>>,
    /// Standardized targets.
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    pub hyper: GpHyper,
    /// Noise actually used after any escalation.
    pub noise: f64,
    /// Row-major lower-triangular factor of `K + noise I`.
    pub l: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn gp_fit(x: &[Vec<f64>], y: &[f64], hyper: &GpHyper, noise: f64) -> Result<GpModel, GpError> {
    if x.len() != y.len() {
        return Err(GpError::LengthMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if !(noise > 0.0) {
        return Err(GpError::NonPositiveNoise(noise));
    }
    let dim = x.first().map_or(0, Vec::len);
    for (row, p) in x.iter().enumerate() {
        if p.len() != dim {
            return Err(GpError::Dimension {
                row,
                expected: dim,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(GpError::OutsideUnitCube { row });
        }
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(GpError::NonFiniteTarget(row));
    }

    let n = y.len();
    let (y_mean, y_scale) = standardization(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = hyper.kernel(&x[i], &x[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut noise_used = noise;
    let mut factor = None;
    for attempt in 0..=JITTER_RETRIES {
        let mut a = gram.clone();
        for i in 0..n {
            a[i * n + i] += noise_used;
        }
        if let Some(l) = cholesky(&a, n) {
            factor = Some(l);
            break;
        }
        if attempt < JITTER_RETRIES {
            noise_used *= 10.0;
        }
    }
    let l = factor.ok_or(GpError::Factorization(noise_used))?;
    let alpha = cholesky_solve(&l, n, &ys);
    Ok(GpModel {
        x: x.to_vec(),
        y: ys,
        y_mean,
        y_scale,
        hyper: hyper.clone(),
        noise: noise_used,
        l,
        alpha,
    })
}

fn standardization(y: &[f64]) -> (f64, f64) {
    if y.is_empty() {
        return (0.0, 1.0);
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-12 {
        (mean, sd)
    } else {
        (mean, 1.0)
    }
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Posterior mean and standard deviation on the standardized scale.
    pub fn posterior_standardized(&self, q: &[f64]) -> (f64, f64) {
        let n = self.len();
        let prior = self.hyper.signal_variance;
        if n == 0 {
            return (0.0, prior.sqrt());
        }
        let kq: Vec<f64> = self.x.iter().map(|xi| self.hyper.kernel(xi, q)).collect();
        let mu = kq.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = forward_solve(&self.l, n, &kq);
        let var = prior - v.iter().map(|t| t * t).sum::<f64>();
        (mu, var.max(0.0).sqrt())
    }

    /// Variance before clamping, for diagnostics.
    pub fn raw_variance_standardized(&self, q: &[f64]) -> f64 {
        let n = self.len();
        let prior = self.hyper.signal_variance;
        if n == 0 {
            return prior;
        }
        let kq: Vec<f64> = self.x.iter().map(|xi| self.hyper.kernel(xi, q)).collect();
        let v = forward_solve(&self.l, n, &kq);
        prior - v.iter().map(|t| t * t).sum::<f64>()
    }

    /// Posterior on the original target scale.
    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let (mu, sd) = self.posterior_standardized(q);
        (self.y_mean + self.y_scale * mu, self.y_scale * sd)
    }

    /// Smallest standardized target, the incumbent for acquisitions.
    pub fn best_standardized(&self) -> Option<f64> {
        self.y.iter().copied().reduce(f64::min)
    }

    pub fn standardize(&self, value: f64) -> f64 {
        (value - self.y_mean) / self.y_scale
    }
}

pub fn gp_posterior(model: &GpModel, queries: &[Vec<f64>]) -> Vec<(f64, f64)> {
    queries.iter().map(|q| model.posterior(q)).collect()
}

/// Row-major Cholesky factor of a symmetric matrix, `None` unless positive
/// definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L z = b`.
pub fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Solves `L^T z = b`.
pub fn backward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    backward_solve(l, n, &forward_solve(l, n, b))
}
