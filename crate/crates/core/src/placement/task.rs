//! Learning-rate and step-count schedule design as a staged task.

use crate::harness::{stage_boundaries, ComponentSpec, PartialComponent, StageFailure, StagedTask, TaskOutcome};
use crate::population::{Legality, StageRecord};
use crate::sandbox::{spawn_candidate, CandidateHandle, LegalityVerdict, RuntimeCommand, SandboxError, SandboxLimits};

use super::density::density_overflow;
use super::instance::MicroPlacementInstance;
use super::sequence::{default_schedule, FixedSteps, PlacementSettings, PlacementState};
use super::wirelength::hpwl;

pub const LR_COMPONENT: &str = "learning_rate";
pub const LR_ENTRY: &str = "adjust_learning_rate";
pub const STEPS_COMPONENT: &str = "optimization_steps";
pub const STEPS_ENTRY: &str = "optimization_steps";

#[derive(Debug, Clone)]
pub struct PlacementTask {
    pub instance: MicroPlacementInstance,
    pub settings: PlacementSettings,
    pub stage_count: usize,
    /// When set, only the learning rate is designed and every subproblem
    /// runs this many steps.
    pub fixed_steps: Option<usize>,
    pub runtime: RuntimeCommand,
    pub limits: SandboxLimits,
}

impl PlacementTask {
    pub fn new(instance: MicroPlacementInstance, stage_count: usize) -> Self {
        Self {
            instance,
            settings: PlacementSettings::default(),
            stage_count,
            fixed_steps: None,
            runtime: RuntimeCommand::python(),
            limits: SandboxLimits::default(),
        }
    }

    pub fn lr_spec() -> ComponentSpec {
        ComponentSpec {
            id: LR_COMPONENT.into(),
            entry_point: LR_ENTRY.into(),
            signature: "def adjust_learning_rate(step_num, log_objective, log_objective_prev, overflow, \
                        log_lambda, learning_rate_prev, log_gradient_norm) -> float\n    \
                        # step_num counts Adam steps from 0 over the whole run; log_* are natural logs."
                .into(),
            description: "learning-rate schedule of the Adam optimizer, queried before every step".into(),
        }
    }

    pub fn steps_spec() -> ComponentSpec {
        ComponentSpec {
            id: STEPS_COMPONENT.into(),
            entry_point: STEPS_ENTRY.into(),
            signature: "def optimization_steps(subproblem_index, overflow, log_lambda) -> int\n    \
                        # number of Adam steps for this penalty subproblem, clamped to [1, step cap]."
                .into(),
            description: "optimization-step schedule, queried once per Lagrangian-relaxed subproblem".into(),
        }
    }
}

pub struct PlacementTaskState {
    run: PlacementState,
    lr: Option<CandidateHandle>,
    steps: Option<CandidateHandle>,
}

impl PlacementTaskState {
    fn close_handles(&mut self) {
        for h in [self.lr.take(), self.steps.take()].into_iter().flatten() {
            h.close();
        }
    }
}

impl Drop for PlacementTaskState {
    fn drop(&mut self) {
        self.close_handles();
    }
}

fn spawn(task: &PlacementTask, partial: &[PartialComponent], id: &str, entry: &str) -> Result<CandidateHandle, StageFailure> {
    let source = partial.iter().find(|p| p.component_id == id).ok_or_else(|| {
        StageFailure::Verdict(LegalityVerdict::new(Legality::IllegalCode, format!("missing component {id}")))
    })?;
    spawn_candidate(&source.source, &task.runtime, id, entry, task.limits).map_err(|e| match e {
        SandboxError::Config(msg) => StageFailure::Fatal(msg),
        SandboxError::Verdict(v) => StageFailure::Verdict(v),
    })
}

impl StagedTask for PlacementTask {
    type State = PlacementTaskState;

    fn task_description(&self) -> String {
        let steps = match self.fixed_steps {
            Some(n) => format!("every subproblem runs {n} Adam steps"),
            None => "the step schedule chooses how many Adam steps each subproblem runs".to_string(),
        };
        format!(
            "Design schedules for analytical global placement. {} movable cells on {} nets are placed \
             in a {}x{} layout with a {}x{} bin grid by minimizing smoothed wirelength plus lambda times a \
             bin-density penalty. Lambda grows by x{} over {} subproblems grouped into {} stages; {steps} \
             (cap {}). The run stops as soon as overflow <= {}. A design passes when the final overflow meets \
             that target with HPWL below {:.0e}; among passing designs lower final HPWL is better.",
            self.instance.cell_count(),
            self.instance.nets.len(),
            self.instance.layout_width,
            self.instance.layout_height,
            self.instance.bins_x,
            self.instance.bins_y,
            self.settings.lambda_growth,
            self.settings.subproblems,
            self.stage_count,
            self.settings.step_cap,
            self.instance.target_overflow,
            self.settings.objective_cap
        )
    }

    fn components(&self) -> Vec<ComponentSpec> {
        let mut specs = vec![Self::lr_spec()];
        if self.fixed_steps.is_none() {
            specs.push(Self::steps_spec());
        }
        specs
    }

    fn stage_count(&self) -> usize {
        self.stage_count
    }

    fn begin(&self) -> Result<(PlacementTaskState, StageRecord), StageFailure> {
        self.instance.validate().map_err(|e| StageFailure::Fatal(e.to_string()))?;
        let plan = stage_boundaries(self.settings.subproblems, self.stage_count)
            .map_err(|e| StageFailure::Fatal(e.to_string()))?;
        let schedule = default_schedule(&self.instance, &self.settings);
        let pos = &self.instance.initial_positions;
        let overflow = density_overflow(&self.instance, pos).overflow;
        let wl = hpwl(&self.instance, pos);
        let mut interface = Self::lr_spec().signature;
        if self.fixed_steps.is_none() {
            interface.push('\n');
            interface.push_str(&Self::steps_spec().signature);
        }
        let record = StageRecord::new(format!(
            "{}\nInitial HPWL {wl:.2}, overflow {overflow:.4}, lambda0 {:.3e}, subproblems per stage {:?}.\n{interface}",
            self.task_description(),
            schedule.lambdas[0],
            plan.boundaries
        ))
        .with_metric("cells", self.instance.cell_count() as f64)
        .with_metric("nets", self.instance.nets.len() as f64)
        .with_metric("hpwl", wl)
        .with_metric("overflow", overflow)
        .with_metric("target_overflow", self.instance.target_overflow)
        .with_metric("lambda0", schedule.lambdas[0]);
        let run = PlacementState::new(self.instance.clone(), self.settings.clone(), schedule, plan);
        Ok((PlacementTaskState { run, lr: None, steps: None }, record))
    }

    fn run_stage(
        &self,
        state: &mut PlacementTaskState,
        partial: &[PartialComponent],
        _stage_index: usize,
    ) -> Result<StageRecord, StageFailure> {
        state.close_handles();
        let lr = state.lr.insert(spawn(self, partial, LR_COMPONENT, LR_ENTRY)?);
        let result = match self.fixed_steps {
            Some(n) => state.run.run_stage(lr, &mut FixedSteps(n as i64)),
            None => {
                let steps = state.steps.insert(spawn(self, partial, STEPS_COMPONENT, STEPS_ENTRY)?);
                let lr = state.lr.as_mut().expect("spawned above");
                state.run.run_stage(lr, steps)
            }
        };
        result.map_err(|abort| StageFailure::Verdict(abort.verdict))
    }

    fn finalize(&self, mut state: PlacementTaskState) -> TaskOutcome {
        state.close_handles();
        let verdict = state.run.verdict();
        let score = verdict.tag.is_pass().then(|| -state.run.hpwl());
        TaskOutcome {
            final_metrics: state.run.final_metrics(),
            score,
            verdict,
        }
    }
}
