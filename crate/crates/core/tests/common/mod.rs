//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use evostage::agents::provider::{ChatRequest, LlmProvider, ProviderError};
use evostage::agents::AgentSettings;
use evostage::engine::RunConfig;
use evostage::harness::{ComponentSpec, PartialComponent, StageFailure, StagedTask, TaskOutcome};
use evostage::harness::evaluate_full;
use evostage::placement::instance::shipped_reference_instance;
use evostage::placement::task::{LR_COMPONENT, STEPS_COMPONENT};
use evostage::placement::PlacementTask;
use evostage::population::{assemble_algorithm, AlgorithmIndividual, Legality, MultiStageHeuristic, StageFragment, StageRecord};
use evostage::sandbox::{LegalityVerdict, SandboxLimits};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_source(relative: &str) -> String {
    let path = fixtures_dir().join("candidates").join(relative);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// The same source in every stage.
pub fn uniform_component(id: &str, source: &str, stages: usize) -> MultiStageHeuristic {
    MultiStageHeuristic::new(
        id,
        (0..stages)
            .map(|i| StageFragment { stage_index: i, source: source.to_string(), goal_text: format!("stage {i}") })
            .collect(),
    )
}

/// Four-stage placement on the shipped 100-cell instance with a short call
/// timeout so the hanging fixture fails fast.
pub fn placement_task(fixed_steps: Option<usize>) -> PlacementTask {
    let mut task = PlacementTask::new(shipped_reference_instance(), 4);
    task.fixed_steps = fixed_steps;
    task.limits = SandboxLimits { call_timeout_ms: 500, startup_timeout_ms: 10_000 };
    task
}

/// Evaluates a learning-rate fixture with ten steps per subproblem.
pub fn evaluate_lr_fixture(relative: &str) -> AlgorithmIndividual {
    let task = placement_task(Some(10));
    let alg = assemble_algorithm(vec![uniform_component(LR_COMPONENT, &fixture_source(relative), 4)]).unwrap();
    evaluate_full(alg, &task).unwrap()
}

/// Evaluates the constant-rate and fixed-steps fixtures as a two-component
/// algorithm.
pub fn evaluate_constant_schedule() -> AlgorithmIndividual {
    let task = placement_task(None);
    let alg = assemble_algorithm(vec![
        uniform_component(LR_COMPONENT, &fixture_source("constant_lr.py"), 4),
        uniform_component(STEPS_COMPONENT, &fixture_source("fixed_steps.py"), 4),
    ])
    .unwrap();
    evaluate_full(alg, &task).unwrap()
}

/// Each stage adds the number after the last `score = ` to a running total.
/// `boom` is a candidate fault and `crash` an environment fault.
pub struct SumTask {
    pub stages: usize,
}

impl StagedTask for SumTask {
    type State = f64;

    fn task_description(&self) -> String {
        "maximize the running total".into()
    }

    fn components(&self) -> Vec<ComponentSpec> {
        vec![ComponentSpec {
            id: "f".into(),
            entry_point: "f".into(),
            signature: "score = <number>".into(),
            description: "adds to the total".into(),
        }]
    }

    fn stage_count(&self) -> usize {
        self.stages
    }

    fn begin(&self) -> Result<(f64, StageRecord), StageFailure> {
        Ok((0.0, StageRecord::new("start").with_metric("total", 0.0)))
    }

    fn run_stage(&self, state: &mut f64, partial: &[PartialComponent], _stage: usize) -> Result<StageRecord, StageFailure> {
        let src = &partial[0].source;
        if src.contains("crash") {
            return Err(StageFailure::Fatal("simulated crash".into()));
        }
        if src.contains("boom") {
            return Err(StageFailure::Verdict(LegalityVerdict::new(Legality::RuntimeFailure, "boom")));
        }
        let value: f64 = src
            .rsplit("score = ")
            .next()
            .and_then(|t| t.lines().next())
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| StageFailure::Verdict(LegalityVerdict::new(Legality::IllegalCode, "no score")))?;
        *state += value;
        Ok(StageRecord::new("stage").with_metric("total", *state))
    }

    fn finalize(&self, state: f64) -> TaskOutcome {
        TaskOutcome {
            final_metrics: [("total".to_string(), state)].into(),
            score: Some(state),
            verdict: LegalityVerdict::pass(),
        }
    }
}

/// Answers from the request key alone, so it is safe under parallel runs.
pub struct Scripted {
    pub stages: usize,
    pub fail_generation: Option<usize>,
    pub body: fn(usize, usize, usize) -> String,
    pub calls: AtomicUsize,
}

pub fn value_body(g: usize, o: usize, s: usize) -> String {
    format!("score = {}", (g * 7 + o * 3 + s) % 11)
}

impl Scripted {
    pub fn new(stages: usize) -> Self {
        Self { stages, fail_generation: None, body: value_body, calls: AtomicUsize::new(0) }
    }
}

impl LlmProvider for Scripted {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let k = &request.key;
        if Some(k.generation_index) == self.fail_generation {
            return Err(ProviderError::Transport("connection refused".into()));
        }
        let (g, o, s) = (k.generation_index, k.offspring_index, k.stage_index);
        Ok(match k.template_id.as_str() {
            "coordinator" => "Reflection: fine so far.\nGoal: raise the total.".to_string(),
            "coder_initial" | "coder_stage" => format!("```python\n{}\n```", (self.body)(g, o, s)),
            _ => {
                let mut code = String::new();
                for stage in 0..self.stages {
                    code.push_str(&format!("# --- stage {stage} ---\n{}\n", (self.body)(g, o, stage)));
                }
                format!("```python\n{code}```")
            }
        })
    }
}

pub fn config(m: usize, g: usize, offspring: usize, budget: usize, k: usize) -> RunConfig {
    RunConfig {
        domain_id: "sum".into(),
        population_size: m,
        generations: g,
        offspring_per_generation: offspring,
        selection_count: 2,
        stage_count: k,
        llm: AgentSettings::default(),
        seed: 11,
        budget_cap: budget,
        multi_stage_initialization: true,
        parallel: false,
    }
}
