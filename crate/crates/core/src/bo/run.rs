//! The BO loop: a quasi-random initial design, then fit, propose and evaluate
//! until the sample budget is spent. Runs stage by stage so the acquisition
//! may change at stage boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::StagePlan;
use crate::population::{Legality, StageRecord};
use crate::sandbox::LegalityVerdict;

use super::acquisition::{propose_next, UtilitySource};
use super::gp::{gp_fit, GpHyper, GpModel, DEFAULT_NOISE};
use super::objective::BoObjective;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoSettings {
    pub init_count: usize,
    /// Uniform candidates per acquisition step (continuous objectives).
    pub pool_size: usize,
    /// Fixed points used for the per-stage uncertainty summary.
    pub monitor_size: usize,
    pub hyper: GpHyper,
    pub noise: f64,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            init_count: 3,
            pool_size: 2048,
            monitor_size: 256,
            hyper: GpHyper::default(),
            noise: DEFAULT_NOISE,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BoError {
    #[error("invalid BO setup: {0}")]
    Config(String),
    #[error("{0}")]
    Verdict(LegalityVerdict),
}

/// First `dims` primes, the Halton bases.
fn primes(dims: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(dims);
    let mut n = 2u64;
    while out.len() < dims {
        if (2..n).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d)) {
            out.push(n);
        }
        n += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` Halton points (starting at index 1) under a random shift modulo 1.
pub fn shifted_halton(count: usize, dims: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    let bases = primes(dims);
    (1..=count as u64)
        .map(|i| {
            bases
                .iter()
                .zip(shift)
                .map(|(&b, s)| (radical_inverse(i, b) + s).fract())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    /// Evaluated points in original coordinates.
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Best value after each evaluation.
    pub best_so_far: Vec<f64>,
    pub optimal_gap: f64,
    pub stage_records: Vec<StageRecord>,
}

/// Resumable BO state.
#[derive(Debug, Clone)]
pub struct BoState {
    objective: BoObjective,
    plan: StagePlan,
    settings: BoSettings,
    rng: ChaCha8Rng,
    init_design: Vec<Vec<f64>>,
    monitor: Vec<Vec<f64>>,
    xs_unit: Vec<Vec<f64>>,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    best_so_far: Vec<f64>,
    records: Vec<StageRecord>,
    next_stage: usize,
}

impl BoState {
    pub fn new(objective: BoObjective, plan: StagePlan, settings: BoSettings, seed: u64) -> Result<Self, BoError> {
        if plan.total < settings.init_count {
            return Err(BoError::Config(format!(
                "{} samples cannot cover {} initial points",
                plan.total, settings.init_count
            )));
        }
        if settings.pool_size == 0 {
            return Err(BoError::Config("acquisition pool must be non-empty".into()));
        }
        let dims = objective.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
        let init_design = match &objective {
            BoObjective::Synthetic(_) => shifted_halton(settings.init_count, dims, &shift),
            BoObjective::Tabular(t) => {
                let targets = shifted_halton(settings.init_count, dims, &shift);
                let rows = table_unit_points(&objective, t.configurations.len());
                targets.iter().map(|target| rows[nearest(&rows, target)].clone()).collect()
            }
        };
        let monitor = match &objective {
            BoObjective::Synthetic(_) => {
                let mut mrng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_eed0_fa11);
                (0..settings.monitor_size)
                    .map(|_| (0..dims).map(|_| mrng.random::<f64>()).collect())
                    .collect()
            }
            BoObjective::Tabular(t) => table_unit_points(&objective, t.configurations.len()),
        };
        Ok(Self {
            objective,
            plan,
            settings,
            rng,
            init_design,
            monitor,
            xs_unit: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
            best_so_far: Vec::new(),
            records: Vec::new(),
            next_stage: 0,
        })
    }

    pub fn objective(&self) -> &BoObjective {
        &self.objective
    }

    pub fn plan(&self) -> &StagePlan {
        &self.plan
    }

    pub fn samples_taken(&self) -> usize {
        self.ys.len()
    }

    pub fn best(&self) -> Option<f64> {
        self.best_so_far.last().copied()
    }

    fn fit(&self) -> Result<GpModel, LegalityVerdict> {
        gp_fit(&self.xs_unit, &self.ys, &self.settings.hyper, self.settings.noise)
            .map_err(|e| LegalityVerdict::new(Legality::RuntimeFailure, format!("surrogate fit failed: {e}")))
    }

    fn pool(&mut self) -> Vec<Vec<f64>> {
        match &self.objective {
            BoObjective::Synthetic(_) => {
                let dims = self.objective.dim();
                (0..self.settings.pool_size)
                    .map(|_| (0..dims).map(|_| self.rng.random::<f64>()).collect())
                    .collect()
            }
            BoObjective::Tabular(_) => self.monitor.clone(),
        }
    }

    fn evaluate_unit(&mut self, u: Vec<f64>) -> Result<(), LegalityVerdict> {
        let value = match &self.objective {
            BoObjective::Tabular(t) => {
                let row = nearest(&self.monitor, &u);
                self.xs.push(t.configurations[row].clone());
                t.values[row]
            }
            BoObjective::Synthetic(_) => {
                let x = self.objective.from_unit(&u);
                let v = self
                    .objective
                    .evaluate(&x)
                    .map_err(|e| LegalityVerdict::new(Legality::RuntimeFailure, e.to_string()))?;
                self.xs.push(x);
                v
            }
        };
        let best = self.best().map_or(value, |b| b.min(value));
        self.xs_unit.push(u);
        self.ys.push(value);
        self.best_so_far.push(best);
        Ok(())
    }

    /// Spends the budget of the next stage using `source` for acquisitions.
    pub fn run_stage(&mut self, source: &mut dyn UtilitySource) -> Result<StageRecord, LegalityVerdict> {
        let stage = self.next_stage;
        assert!(stage < self.plan.stage_count(), "all stages already run");
        let before = self.best();
        for slot in self.plan.range(stage) {
            if slot < self.init_design.len() {
                let u = self.init_design[slot].clone();
                self.evaluate_unit(u)?;
                continue;
            }
            let model = self.fit()?;
            let pool = self.pool();
            let iteration = slot - self.settings.init_count;
            let chosen = propose_next(&model, source, &pool, stage, iteration)?;
            let u = pool[chosen].clone();
            self.evaluate_unit(u)?;
        }
        self.next_stage += 1;
        let record = self.stage_record(stage, before)?;
        self.records.push(record.clone());
        Ok(record)
    }

    fn stage_record(&self, stage: usize, before: Option<f64>) -> Result<StageRecord, LegalityVerdict> {
        let best = self.best().expect("every stage samples at least once");
        let gap = best - self.objective.optimum();
        let improvement = before.map_or(0.0, |b| b - best);
        let model = self.fit()?;
        let mean_sigma =
            self.monitor.iter().map(|q| model.posterior_standardized(q).1).sum::<f64>() / self.monitor.len() as f64;
        let sampled = self.plan.boundaries[stage];
        let summary = match before {
            Some(b) if improvement > 0.0 => format!(
                "stage {stage}: best value fell {b:.4} -> {best:.4} (gap {gap:.4}); {sampled} points sampled; mean posterior sigma {mean_sigma:.3}"
            ),
            Some(b) => format!(
                "stage {stage}: no improvement over {b:.4} (gap {gap:.4}); {sampled} points sampled; mean posterior sigma {mean_sigma:.3}"
            ),
            None => format!(
                "stage {stage}: initial best value {best:.4} (gap {gap:.4}); {sampled} points sampled; mean posterior sigma {mean_sigma:.3}"
            ),
        };
        Ok(StageRecord::new(summary)
            .with_metric("best_f", best)
            .with_metric("optimal_gap", gap)
            .with_metric("improvement", improvement)
            .with_metric("points_sampled", sampled as f64)
            .with_metric("mean_sigma", mean_sigma))
    }

    pub fn is_complete(&self) -> bool {
        self.next_stage == self.plan.stage_count()
    }

    pub fn optimal_gap(&self) -> Option<f64> {
        self.best().map(|b| b - self.objective.optimum())
    }

    pub fn into_trace(self) -> BoTrace {
        let optimal_gap = self.optimal_gap().unwrap_or(f64::INFINITY);
        BoTrace {
            points: self.xs,
            values: self.ys,
            best_so_far: self.best_so_far,
            optimal_gap,
            stage_records: self.records,
        }
    }
}

fn table_unit_points(objective: &BoObjective, rows: usize) -> Vec<Vec<f64>> {
    match objective {
        BoObjective::Tabular(t) => (0..rows).map(|i| objective.to_unit(&t.configurations[i])).collect(),
        BoObjective::Synthetic(_) => Vec::new(),
    }
}

fn nearest(points: &[Vec<f64>], target: &[f64]) -> usize {
    let dist = |p: &Vec<f64>| p.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut best = 0;
    for i in 1..points.len() {
        if dist(&points[i]) < dist(&points[best]) {
            best = i;
        }
    }
    best
}

/// One complete BO run with a single acquisition for every stage.
pub fn bo_run(
    objective: BoObjective,
    acquisition: &mut dyn UtilitySource,
    total_samples: usize,
    plan: StagePlan,
    seed: u64,
    settings: BoSettings,
) -> Result<BoTrace, BoError> {
    if plan.total != total_samples {
        return Err(BoError::Config(format!(
            "stage plan covers {} samples, expected {total_samples}",
            plan.total
        )));
    }
    let mut state = BoState::new(objective, plan, settings, seed)?;
    while !state.is_complete() {
        state.run_stage(acquisition).map_err(BoError::Verdict)?;
    }
    Ok(state.into_trace())
}

/// Uniform random search with the same budget, the baseline for sanity
/// checks.
pub fn random_search(objective: &BoObjective, total_samples: usize, seed: u64) -> Result<f64, BoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..total_samples {
        let u: Vec<f64> = (0..objective.dim()).map(|_| rng.random::<f64>()).collect();
        let v = match objective {
            BoObjective::Synthetic(_) => objective
                .evaluate(&objective.from_unit(&u))
                .map_err(|e| BoError::Config(e.to_string()))?,
            BoObjective::Tabular(t) => t.values[rng.random_range(0..t.values.len())],
        };
        best = best.min(v);
    }
    Ok(best - objective.optimum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bo::acquisition::BuiltinAcquisition;
    use crate::bo::objective::{parse_tabular, SyntheticKind, SyntheticObjective};
    use crate::harness::stage_boundaries;

    fn ackley() -> BoObjective {
        BoObjective::Synthetic(SyntheticObjective::new(SyntheticKind::Ackley2d))
    }

    #[test]
    fn halton_base_two_and_three() {
        let pts = shifted_halton(3, 2, &[0.0, 0.0]);
        assert_eq!(pts[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(pts[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(pts[2], vec![0.75, 1.0 / 9.0]);
        assert_eq!(primes(5), vec![2, 3, 5, 7, 11]);
    }

    #[test]
    fn counts_and_monotone_best() {
        let trace = bo_run(
            ackley(),
            &mut BuiltinAcquisition::Ei,
            15,
            stage_boundaries(15, 3).unwrap(),
            7,
            BoSettings::default(),
        )
        .unwrap();
        assert_eq!(trace.values.len(), 15);
        assert_eq!(trace.stage_records.len(), 3);
        assert!(trace.best_so_far.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(trace.optimal_gap, *trace.best_so_far.last().unwrap());
        for r in &trace.stage_records {
            assert!(r.all_finite());
            assert_eq!(r.metrics["points_sampled"], 5.0);
        }
    }

    #[test]
    fn init_only_budget() {
        let trace = bo_run(
            ackley(),
            &mut BuiltinAcquisition::Ei,
            3,
            stage_boundaries(3, 3).unwrap(),
            1,
            BoSettings::default(),
        )
        .unwrap();
        assert_eq!(trace.values.len(), 3);
        let expected_best = trace.values.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(trace.optimal_gap, expected_best);
    }

    #[test]
    fn budget_below_init_rejected() {
        let r = bo_run(ackley(), &mut BuiltinAcquisition::Ei, 2, stage_boundaries(2, 1).unwrap(), 1, BoSettings::default());
        assert!(matches!(r, Err(BoError::Config(_))));
    }

    #[test]
    fn bit_reproducible() {
        let run = || {
            bo_run(ackley(), &mut BuiltinAcquisition::Ucb { kappa: 2.0 }, 15, stage_boundaries(15, 3).unwrap(), 11, BoSettings::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tabular_pool_is_the_table() {
        let mut text = String::from("id,a,b,objective\n");
        for i in 0..6 {
            for j in 0..6 {
                text.push_str(&format!("r{i}{j},{i},{j},{}\n", ((i as f64) - 2.0).powi(2) + ((j as f64) - 4.0).powi(2)));
            }
        }
        let table = parse_tabular("grid", &text).unwrap();
        let obj = BoObjective::Tabular(table.clone());
        let trace = bo_run(obj, &mut BuiltinAcquisition::Ei, 12, stage_boundaries(12, 3).unwrap(), 3, BoSettings::default()).unwrap();
        for (p, v) in trace.points.iter().zip(&trace.values) {
            let row = table.configurations.iter().position(|c| c == p).expect("point is a table row");
            assert_eq!(table.values[row], *v);
        }
        assert!(trace.optimal_gap >= 0.0);
    }

    #[test]
    fn max_variance_candidate_matches_builtin_rule() {
        use crate::bo::acquisition::AcquisitionContext;
        struct SigmaEcho;
        impl UtilitySource for SigmaEcho {
            fn utilities(&mut self, ctx: &AcquisitionContext) -> Result<Vec<f64>, LegalityVerdict> {
                Ok(ctx.points.iter().map(|p| p.sigma).collect())
            }
        }
        let plan = stage_boundaries(8, 2).unwrap();
        let a = bo_run(ackley(), &mut SigmaEcho, 8, plan.clone(), 4, BoSettings::default()).unwrap();
        let b = bo_run(ackley(), &mut BuiltinAcquisition::MaxVariance, 8, plan, 4, BoSettings::default()).unwrap();
        assert_eq!(a.points, b.points);
    }
}
