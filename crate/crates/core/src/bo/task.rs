//! Acquisition-function design as a staged task: each stage spends its
//! sample budget with the acquisition written for that stage.

use crate::harness::{stage_boundaries, ComponentSpec, PartialComponent, StageFailure, StagedTask, TaskOutcome};
use crate::population::{Legality, Metrics, StageRecord};
use crate::sandbox::{spawn_candidate, CandidateHandle, LegalityVerdict, RuntimeCommand, SandboxError, SandboxLimits};

use super::acquisition::DEFAULT_KAPPA;
use super::objective::BoObjective;
use super::run::{BoSettings, BoState};

pub const COMPONENT_ID: &str = "acquisition";
pub const ENTRY_POINT: &str = "utility";

#[derive(Debug, Clone)]
pub struct BoTask {
    pub objective: BoObjective,
    pub total_samples: usize,
    pub stage_count: usize,
    pub seed: u64,
    pub settings: BoSettings,
    pub runtime: RuntimeCommand,
    pub limits: SandboxLimits,
}

impl BoTask {
    pub fn new(objective: BoObjective, total_samples: usize, stage_count: usize, seed: u64) -> Self {
        Self {
            objective,
            total_samples,
            stage_count,
            seed,
            settings: BoSettings::default(),
            runtime: RuntimeCommand::python(),
            limits: SandboxLimits::default(),
        }
    }

    pub fn component_spec() -> ComponentSpec {
        ComponentSpec {
            id: COMPONENT_ID.into(),
            entry_point: ENTRY_POINT.into(),
            signature: "def utility(stage_index, iteration, best_f, mu, sigma):\n    \
                        # mu, sigma: lists with the GP posterior mean and standard deviation of every\n    \
                        # candidate point (standardized scale, lower is better); best_f: smallest\n    \
                        # standardized value observed so far. Return one float per point; the point\n    \
                        # with the largest utility is evaluated next.\n    \
                        return [...]"
                .into(),
            description: "acquisition function of a Bayesian optimization loop that minimizes a \
                          black-box objective. `math`, `norm_pdf` and `norm_cdf` are available."
                .into(),
        }
    }
}

/// Run state: the BO loop plus the live candidate for the current stage.
pub struct BoTaskState {
    bo: BoState,
    handle: Option<CandidateHandle>,
}

impl BoTaskState {
    fn close_handle(&mut self) {
        if let Some(h) = self.handle.take() {
            h.close();
        }
    }
}

impl Drop for BoTaskState {
    fn drop(&mut self) {
        self.close_handle();
    }
}

fn spawn_error(e: SandboxError) -> StageFailure {
    match e {
        SandboxError::Config(msg) => StageFailure::Fatal(msg),
        SandboxError::Verdict(v) => StageFailure::Verdict(v),
    }
}

impl StagedTask for BoTask {
    type State = BoTaskState;

    fn task_description(&self) -> String {
        format!(
            "Design an acquisition function for Bayesian optimization on {} ({} dimensions). \
             The loop runs {} samples in {} stages: {} quasi-random initial points, then each \
             step fits a Gaussian process and evaluates the pool point that maximizes your \
             utility. The result is judged by the optimal gap (best value found minus the \
             global optimum), lower is better.",
            self.objective.name(),
            self.objective.dim(),
            self.total_samples,
            self.stage_count,
            self.settings.init_count
        )
    }

    fn components(&self) -> Vec<ComponentSpec> {
        vec![Self::component_spec()]
    }

    fn stage_count(&self) -> usize {
        self.stage_count
    }

    fn begin(&self) -> Result<(BoTaskState, StageRecord), StageFailure> {
        let plan = stage_boundaries(self.total_samples, self.stage_count).map_err(|e| StageFailure::Fatal(e.to_string()))?;
        let budgets = plan
            .boundaries
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let bo = BoState::new(self.objective.clone(), plan, self.settings.clone(), self.seed)
            .map_err(|e| StageFailure::Fatal(e.to_string()))?;
        let record = StageRecord::new(format!(
            "{}\nStage budgets (samples): [{budgets}]. Baseline UCB uses kappa {DEFAULT_KAPPA}.\n{}",
            self.task_description(),
            Self::component_spec().signature
        ))
        .with_metric("dimensions", self.objective.dim() as f64)
        .with_metric("total_samples", self.total_samples as f64)
        .with_metric("initial_points", self.settings.init_count as f64);
        Ok((BoTaskState { bo, handle: None }, record))
    }

    fn run_stage(
        &self,
        state: &mut BoTaskState,
        partial: &[PartialComponent],
        _stage_index: usize,
    ) -> Result<StageRecord, StageFailure> {
        let source = partial
            .iter()
            .find(|p| p.component_id == COMPONENT_ID)
            .ok_or_else(|| StageFailure::Verdict(LegalityVerdict::new(Legality::IllegalCode, "missing acquisition component")))?;
        state.close_handle();
        let handle = spawn_candidate(&source.source, &self.runtime, COMPONENT_ID, ENTRY_POINT, self.limits)
            .map_err(spawn_error)?;
        let handle = state.handle.insert(handle);
        let record = state.bo.run_stage(handle).map_err(StageFailure::Verdict)?;
        Ok(record)
    }

    fn finalize(&self, mut state: BoTaskState) -> TaskOutcome {
        state.close_handle();
        let mut final_metrics = Metrics::new();
        let gap = state.bo.optimal_gap();
        if let (Some(gap), Some(best)) = (gap, state.bo.best()) {
            final_metrics.insert("optimal_gap".into(), gap);
            final_metrics.insert("best_f".into(), best);
        }
        final_metrics.insert("samples".into(), state.bo.samples_taken() as f64);
        let verdict = match gap {
            Some(g) if g.is_finite() => LegalityVerdict::pass(),
            Some(g) => LegalityVerdict::new(Legality::NonFinite, format!("optimal gap {g}")),
            None => LegalityVerdict::new(Legality::RuntimeFailure, "no samples evaluated"),
        };
        TaskOutcome {
            final_metrics,
            score: gap.map(|g| -g),
            verdict,
        }
    }
}
