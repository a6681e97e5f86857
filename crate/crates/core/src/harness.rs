//! Stagewise execution: the contract every evaluation domain implements, the
//! Stagewise-Design loop (reflect, code, run a stage, repeat) and full
//! evaluation of one-shot offspring.
//!
//! Domains must be pausable: state after stage `i` fully determines how stage
//! `i + 1` continues.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Agents, CallContext};
use crate::agents::provider::ProviderError;
use crate::population::{
    AlgorithmIndividual, ExecutionInfo, Legality, Lineage, Metrics, MultiStageHeuristic,
    StageFragment, StageRecord,
};
use crate::sandbox::LegalityVerdict;

/// One algorithm component as seen by the agents and the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: String,
    /// Function the candidate must define.
    pub entry_point: String,
    /// Signature and return contract shown to the coder.
    pub signature: String,
    pub description: String,
}

impl ComponentSpec {
    /// Prompt text for this component. `one_shot` adds the layout for
    /// emitting all stages at once.
    pub fn prompt_text(&self, stage_count: usize, one_shot: bool) -> String {
        let mut text = format!(
            "Component `{}`: {}\nDefine this Python function:\n{}\n",
            self.id, self.description, self.signature
        );
        if one_shot {
            text.push_str(&format!(
                "The heuristic has {stage_count} stages. Write every stage in one listing and \
                 start stage i with a line `# --- stage i ---` for i = 0..{}. Stage i runs the \
                 code of stages 0..i concatenated, so each stage must (re)define `{}`.\n",
                stage_count.saturating_sub(1),
                self.entry_point
            ));
        }
        text
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("domain failure: {0}")]
    Domain(String),
}

/// Why a stage could not complete.
#[derive(Debug, Clone, PartialEq)]
pub enum StageFailure {
    /// The candidate is at fault; the individual gets this verdict.
    Verdict(LegalityVerdict),
    /// The environment is at fault; the run cannot continue.
    Fatal(String),
}

impl From<LegalityVerdict> for StageFailure {
    fn from(v: LegalityVerdict) -> Self {
        StageFailure::Verdict(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub final_metrics: Metrics,
    pub score: Option<f64>,
    pub verdict: LegalityVerdict,
}

/// Source for one component during one stage: its fragments up to and
/// including that stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialComponent {
    pub component_id: String,
    pub source: String,
}

/// A domain that runs an algorithm stage by stage.
///
/// `run_stage` must be deterministic given the state and the sources, and
/// stage records may only contain finite numbers.
pub trait StagedTask: Sync {
    type State: Send;

    fn task_description(&self) -> String;
    fn components(&self) -> Vec<ComponentSpec>;
    fn stage_count(&self) -> usize;

    /// Fresh state plus the initial information record I_0.
    fn begin(&self) -> Result<(Self::State, StageRecord), StageFailure>;

    fn run_stage(
        &self,
        state: &mut Self::State,
        partial: &[PartialComponent],
        stage_index: usize,
    ) -> Result<StageRecord, StageFailure>;

    fn finalize(&self, state: Self::State) -> TaskOutcome;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub boundaries: Vec<usize>,
    pub total: usize,
}

impl StagePlan {
    pub fn stage_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Half-open range of budget units covered by `stage`.
    pub fn range(&self, stage: usize) -> std::ops::Range<usize> {
        let start: usize = self.boundaries[..stage].iter().sum();
        start..start + self.boundaries[stage]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("cannot split a budget of {total} into {stages} stages")]
    BudgetTooSmall { total: usize, stages: usize },
}

/// Even split; the remainder goes one unit each to the last stages.
pub fn stage_boundaries(total_budget: usize, stages: usize) -> Result<StagePlan, PlanError> {
    if stages == 0 || total_budget < stages {
        return Err(PlanError::BudgetTooSmall {
            total: total_budget,
            stages,
        });
    }
    let base = total_budget / stages;
    let remainder = total_budget % stages;
    let boundaries = (0..stages)
        .map(|i| if i >= stages - remainder { base + 1 } else { base })
        .collect();
    Ok(StagePlan {
        boundaries,
        total: total_budget,
    })
}

fn partial_sources(components: &[MultiStageHeuristic], stage: usize) -> Vec<PartialComponent> {
    components
        .iter()
        .map(|c| PartialComponent {
            component_id: c.component_id.clone(),
            source: c.cumulative_source(stage),
        })
        .collect()
}

fn failed_individual(
    components: Vec<MultiStageHeuristic>,
    info: ExecutionInfo,
    lineage: Lineage,
    verdict: LegalityVerdict,
) -> AlgorithmIndividual {
    let mut ind = AlgorithmIndividual {
        id: 0,
        components,
        score: None,
        legality: Legality::Unevaluated,
        legality_detail: String::new(),
        info,
        lineage,
    };
    ind.set_outcome(verdict.tag, None, verdict.detail);
    ind
}

fn finish(mut ind: AlgorithmIndividual, outcome: TaskOutcome) -> AlgorithmIndividual {
    ind.info.final_metrics = outcome.final_metrics;
    ind.set_outcome(outcome.verdict.tag, outcome.score, outcome.verdict.detail);
    ind
}

/// Designs one individual stage by stage: the coordinator reflects on the
/// feedback so far, each coder writes its fragment for the stage, and the
/// domain runs the stage.
pub fn run_stagewise_design<T: StagedTask>(
    task: &T,
    agents: &Agents<'_>,
    ctx: &CallContext,
) -> Result<AlgorithmIndividual, HarnessError> {
    let specs = task.components();
    let description = task.task_description();
    let stage_count = task.stage_count();
    let lineage = Lineage {
        operator: Some(crate::engine::OperatorKind::StagewiseDesign),
        parent_ids: Vec::new(),
        generation_index: ctx.generation_index,
    };
    let mut components: Vec<MultiStageHeuristic> = specs
        .iter()
        .map(|s| MultiStageHeuristic::new(s.id.clone(), Vec::new()))
        .collect();

    let (mut state, initial) = match task.begin() {
        Ok(ok) => ok,
        Err(StageFailure::Fatal(msg)) => return Err(HarnessError::Domain(msg)),
        Err(StageFailure::Verdict(v)) => {
            return Ok(failed_individual(components, ExecutionInfo::default(), lineage, v))
        }
    };
    let mut info = ExecutionInfo {
        initial,
        ..ExecutionInfo::default()
    };

    for stage in 0..stage_count {
        let goal = match agents.coordinator_reflect(ctx, &description, &info, stage) {
            Ok(goal) => goal,
            Err(AgentError::Provider(e)) => return Err(e.into()),
            Err(e) => {
                let v = LegalityVerdict::new(Legality::IllegalCode, format!("coordinator: {e}"));
                return Ok(failed_individual(components, info, lineage, v));
            }
        };
        for (spec, component) in specs.iter().zip(components.iter_mut()) {
            let artifact = match agents.coder_generate(ctx, &description, spec, stage_count, &goal, &component.stages) {
                Ok(a) => a,
                Err(AgentError::Provider(e)) => return Err(e.into()),
                Err(e) => {
                    let v = LegalityVerdict::new(Legality::IllegalCode, format!("coder {}: {e}", spec.id));
                    return Ok(failed_individual(components, info, lineage, v));
                }
            };
            if artifact.thought.is_some() {
                component.description = artifact.thought.clone();
            }
            component.stages.push(StageFragment {
                stage_index: stage,
                source: artifact.source,
                goal_text: goal.goal_text.clone(),
            });
        }
        match task.run_stage(&mut state, &partial_sources(&components, stage), stage) {
            Ok(record) => info.stages.push(record),
            Err(StageFailure::Fatal(msg)) => return Err(HarnessError::Domain(msg)),
            Err(StageFailure::Verdict(v)) => return Ok(failed_individual(components, info, lineage, v)),
        }
    }

    let ind = AlgorithmIndividual {
        id: 0,
        components,
        score: None,
        legality: Legality::Unevaluated,
        legality_detail: String::new(),
        info,
        lineage,
    };
    Ok(finish(ind, task.finalize(state)))
}

/// Runs every stage of a complete algorithm without any agent calls, still
/// collecting stage records.
pub fn evaluate_full<T: StagedTask>(
    mut algorithm: AlgorithmIndividual,
    task: &T,
) -> Result<AlgorithmIndividual, HarnessError> {
    let stage_count = task.stage_count();
    if let Some(bad) = algorithm.components.iter().find(|c| c.stage_count() != stage_count) {
        let v = LegalityVerdict::new(
            Legality::IllegalCode,
            format!("component {} has {} stages, expected {stage_count}", bad.component_id, bad.stage_count()),
        );
        let lineage = algorithm.lineage.clone();
        return Ok(failed_individual(algorithm.components, ExecutionInfo::default(), lineage, v));
    }
    let (mut state, initial) = match task.begin() {
        Ok(ok) => ok,
        Err(StageFailure::Fatal(msg)) => return Err(HarnessError::Domain(msg)),
        Err(StageFailure::Verdict(v)) => {
            algorithm.set_outcome(v.tag, None, v.detail);
            return Ok(algorithm);
        }
    };
    algorithm.info = ExecutionInfo {
        initial,
        ..ExecutionInfo::default()
    };
    for stage in 0..stage_count {
        match task.run_stage(&mut state, &partial_sources(&algorithm.components, stage), stage) {
            Ok(record) => algorithm.info.stages.push(record),
            Err(StageFailure::Fatal(msg)) => return Err(HarnessError::Domain(msg)),
            Err(StageFailure::Verdict(v)) => {
                algorithm.set_outcome(v.tag, None, v.detail);
                return Ok(algorithm);
            }
        }
    }
    Ok(finish(algorithm, task.finalize(state)))
}
