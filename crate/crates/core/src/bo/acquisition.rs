//! Builtin acquisitions and the utility-source abstraction shared with
//! sandboxed candidates.
//!
//! Objectives are minimized. Every acquisition is a utility to maximize.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::population::Legality;
use crate::sandbox::{CandidateHandle, CandidateRequest, LegalityVerdict, PosteriorPoint};

use super::gp::GpModel;

pub const DEFAULT_KAPPA: f64 = 2.0;

/// Lower-confidence-bound form for minimization: `-mu + kappa * sigma`.
pub fn ucb(mu: f64, sigma: f64, kappa: f64) -> f64 {
    -mu + kappa * sigma
}

/// Expected improvement below `best_f`.
pub fn ei(mu: f64, sigma: f64, best_f: f64) -> f64 {
    let gain = best_f - mu;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    let n = Normal::standard();
    (gain * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

/// Inputs to one acquisition call, on the standardized target scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionContext {
    pub stage_index: usize,
    pub iteration: usize,
    pub best_f: f64,
    pub points: Vec<PosteriorPoint>,
}

/// Anything that scores a pool of posterior points.
pub trait UtilitySource {
    fn utilities(&mut self, ctx: &AcquisitionContext) -> Result<Vec<f64>, LegalityVerdict>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinAcquisition {
    Ei,
    Ucb { kappa: f64 },
    /// Pure exploration: the posterior standard deviation.
    MaxVariance,
}

impl UtilitySource for BuiltinAcquisition {
    fn utilities(&mut self, ctx: &AcquisitionContext) -> Result<Vec<f64>, LegalityVerdict> {
        Ok(ctx
            .points
            .iter()
            .map(|p| match *self {
                BuiltinAcquisition::Ei => ei(p.mu, p.sigma, ctx.best_f),
                BuiltinAcquisition::Ucb { kappa } => ucb(p.mu, p.sigma, kappa),
                BuiltinAcquisition::MaxVariance => p.sigma,
            })
            .collect())
    }
}

impl UtilitySource for CandidateHandle {
    fn utilities(&mut self, ctx: &AcquisitionContext) -> Result<Vec<f64>, LegalityVerdict> {
        self.utility(&CandidateRequest::Utility {
            stage_index: ctx.stage_index as i64,
            iteration: ctx.iteration as i64,
            best_f: ctx.best_f,
            points: ctx.points.clone(),
        })
    }
}

/// Index of the largest utility; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Scores `pool` with `source` and returns the index of the chosen point.
pub fn propose_next(
    model: &GpModel,
    source: &mut dyn UtilitySource,
    pool: &[Vec<f64>],
    stage_index: usize,
    iteration: usize,
) -> Result<usize, LegalityVerdict> {
    assert!(!pool.is_empty(), "acquisition pool must be non-empty");
    let points = pool
        .iter()
        .map(|q| {
            let (mu, sigma) = model.posterior_standardized(q);
            PosteriorPoint { mu, sigma }
        })
        .collect();
    let ctx = AcquisitionContext {
        stage_index,
        iteration,
        best_f: model.best_standardized().unwrap_or(0.0),
        points,
    };
    let values = source.utilities(&ctx)?;
    if values.len() != pool.len() {
        return Err(LegalityVerdict::new(
            Legality::RuntimeFailure,
            format!("{} utilities for {} points", values.len(), pool.len()),
        ));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(LegalityVerdict::new(
            Legality::NonFinite,
            format!("utility {} at pool index {i}", values[i]),
        ));
    }
    Ok(argmax_first(&values).expect("non-empty pool"))
}
