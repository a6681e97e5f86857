//! Generational loop: operator scheduling, reproduction, budget accounting
//! and the run report.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::provider::{LlmProvider, ProviderError};
use crate::agents::{AgentError, AgentSettings, Agents, CallContext, MultiStageArtifact};
use crate::harness::{evaluate_full, run_stagewise_design, HarnessError, StagedTask};
use crate::population::{
    assemble_algorithm, select_parents, update_population, AlgorithmIndividual, ExecutionInfo, Legality,
    Lineage, MultiStageHeuristic, Population, StageFragment,
};
use crate::sandbox::{pass_rate, PassRate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    StagewiseDesign,
    GlobalExplore,
    GlobalEnhance,
}

impl OperatorKind {
    pub const CYCLE: [OperatorKind; 3] = [
        OperatorKind::StagewiseDesign,
        OperatorKind::GlobalExplore,
        OperatorKind::GlobalEnhance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::StagewiseDesign => "stagewise_design",
            OperatorKind::GlobalExplore => "global_explore",
            OperatorKind::GlobalEnhance => "global_enhance",
        }
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Operator for the `index`-th reproduction, counted across generations.
pub fn schedule_operator(index: usize) -> OperatorKind {
    OperatorKind::CYCLE[index % 3]
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain_id: String,
    /// Capacity M.
    pub population_size: usize,
    pub generations: usize,
    pub offspring_per_generation: usize,
    /// References k drawn for Global-Explore.
    pub selection_count: usize,
    pub stage_count: usize,
    pub llm: AgentSettings,
    pub seed: u64,
    /// Cap on offspring evaluations. Initialization runs are not counted.
    pub budget_cap: usize,
    pub multi_stage_initialization: bool,
    /// Evaluate the offspring of a generation on worker threads.
    pub parallel: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::Config(msg.to_string()));
        if self.population_size < 1 {
            return bad("population_size must be at least 1");
        }
        if self.stage_count < 1 {
            return bad("stage_count must be at least 1");
        }
        if self.selection_count < 1 {
            return bad("selection_count must be at least 1");
        }
        for (name, t) in [
            ("coordinator_temperature", self.llm.coordinator_temperature),
            ("coder_temperature", self.llm.coder_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                return Err(EngineError::Config(format!("{name} {t} outside [0, 2]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// Position among budgeted evaluations; initialization records count
    /// separately from zero.
    pub evaluation_index: usize,
    pub generation: usize,
    pub operator: OperatorKind,
    pub individual_id: u64,
    pub parent_ids: Vec<u64>,
    pub legality: Legality,
    pub detail: String,
    pub score: Option<f64>,
    /// Best passing score seen so far, including initialization.
    pub best_so_far: Option<f64>,
    /// Kept out of serialized reports so they stay byte-stable.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub initialization: Vec<EvaluationRecord>,
    pub records: Vec<EvaluationRecord>,
    pub best_individual: Option<AlgorithmIndividual>,
    /// Over budgeted records only.
    pub pass_rate: PassRate,
    /// `best_so_far` after each budgeted record.
    pub best_score_curve: Vec<Option<f64>>,
    pub operator_counts: BTreeMap<OperatorKind, usize>,
    pub generations_completed: usize,
    pub final_population: Population,
    pub aborted: Option<AbortInfo>,
}

impl RunReport {
    pub fn evaluations(&self) -> usize {
        self.records.len()
    }
}

/// State handed to the observer after initialization (generation 0) and
/// after every completed generation.
pub struct GenerationSnapshot<'a> {
    pub generation: usize,
    pub population: &'a Population,
    pub records: &'a [EvaluationRecord],
}

/// How a reproduction ended when it did not produce an individual.
#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
}

fn illegal(kind: OperatorKind, parents: &[&AlgorithmIndividual], generation: usize, detail: String) -> AlgorithmIndividual {
    let mut ind = AlgorithmIndividual {
        id: 0,
        components: Vec::new(),
        score: None,
        legality: Legality::Unevaluated,
        legality_detail: String::new(),
        info: ExecutionInfo::default(),
        lineage: lineage(kind, parents, generation),
    };
    ind.set_outcome(Legality::IllegalCode, None, detail);
    ind
}

fn lineage(kind: OperatorKind, parents: &[&AlgorithmIndividual], generation: usize) -> Lineage {
    Lineage {
        operator: Some(kind),
        parent_ids: parents.iter().map(|p| p.id).collect(),
        generation_index: generation,
    }
}

fn heuristics_from(artifacts: Vec<MultiStageArtifact>, kind: OperatorKind) -> Vec<MultiStageHeuristic> {
    artifacts
        .into_iter()
        .map(|a| {
            let stages = a
                .stages
                .into_iter()
                .enumerate()
                .map(|(i, source)| StageFragment {
                    stage_index: i,
                    source,
                    goal_text: format!("{kind} one-shot design"),
                })
                .collect();
            let mut h = MultiStageHeuristic::new(a.component_id, stages);
            h.description = a.thought;
            h
        })
        .collect()
}

/// Produces and evaluates one offspring. Agent and candidate faults become
/// the offspring's verdict; a domain crash becomes RuntimeFailure. Only a
/// provider failure is returned as an error.
pub fn reproduce<T: StagedTask>(
    kind: OperatorKind,
    parents: &[&AlgorithmIndividual],
    task: &T,
    agents: &Agents<'_>,
    ctx: &CallContext,
) -> Result<AlgorithmIndividual, ReproduceError> {
    let generation = ctx.generation_index;
    let result = match kind {
        OperatorKind::StagewiseDesign => run_stagewise_design(task, agents, ctx),
        OperatorKind::GlobalExplore | OperatorKind::GlobalEnhance => {
            if parents.is_empty() {
                return Ok(illegal(kind, parents, generation, "no references available".into()));
            }
            let specs = task.components();
            let description = task.task_description();
            let artifacts = if kind == OperatorKind::GlobalExplore {
                agents.global_explore(ctx, &description, &specs, task.stage_count(), parents)
            } else {
                agents.global_enhance(ctx, &description, &specs, task.stage_count(), parents[0])
            };
            let artifacts = match artifacts {
                Ok(a) => a,
                Err(AgentError::Provider(e)) => return Err(e.into()),
                Err(e) => return Ok(illegal(kind, parents, generation, format!("{kind}: {e}"))),
            };
            let mut ind = match assemble_algorithm(heuristics_from(artifacts, kind)) {
                Ok(ind) => ind,
                Err(e) => return Ok(illegal(kind, parents, generation, e.to_string())),
            };
            ind.lineage = lineage(kind, parents, generation);
            evaluate_full(ind, task)
        }
    };
    match result {
        Ok(mut ind) => {
            ind.lineage = lineage(kind, parents, generation);
            Ok(ind)
        }
        Err(HarnessError::Provider(e)) => Err(e.into()),
        Err(HarnessError::Domain(msg)) => {
            let mut ind = illegal(kind, parents, generation, String::new());
            ind.set_outcome(Legality::RuntimeFailure, None, format!("domain failure: {msg}"));
            Ok(ind)
        }
    }
}

/// Parent indices into the population for one reproduction.
pub fn draw_parents(
    kind: OperatorKind,
    population: &Population,
    selection_count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let k = match kind {
        OperatorKind::StagewiseDesign => return Vec::new(),
        OperatorKind::GlobalExplore => selection_count,
        OperatorKind::GlobalEnhance => 1,
    };
    match select_parents(population, k, rng) {
        Ok(picked) => picked
            .into_iter()
            .map(|p| {
                population
                    .entries()
                    .iter()
                    .position(|e| std::ptr::eq(e, p))
                    .expect("selected from this population")
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

struct Job {
    kind: OperatorKind,
    ctx: CallContext,
    parents: Vec<usize>,
}

type JobResult = (Result<AlgorithmIndividual, ReproduceError>, Duration);

fn run_jobs<T: StagedTask>(
    jobs: &[Job],
    population: &Population,
    task: &T,
    agents: &Agents<'_>,
    parallel: bool,
) -> Vec<JobResult> {
    let one = |job: &Job| -> JobResult {
        let parents: Vec<&AlgorithmIndividual> = job.parents.iter().map(|&i| &population.entries()[i]).collect();
        let start = Instant::now();
        let out = reproduce(job.kind, &parents, task, agents, &job.ctx);
        (out, start.elapsed())
    };
    if !parallel || jobs.len() < 2 {
        // Stop at the first provider failure; later jobs would be discarded.
        let mut out = Vec::with_capacity(jobs.len());
        for job in jobs {
            let r = one(job);
            let failed = r.0.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        return out;
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.iter().map(|job| scope.spawn(move || one(job))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("offspring worker panicked"))
            .collect()
    })
}

struct Accumulator {
    next_id: u64,
    best: Option<f64>,
}

impl Accumulator {
    fn record(
        &mut self,
        mut ind: AlgorithmIndividual,
        evaluation_index: usize,
        kind: OperatorKind,
        wall_time: Duration,
    ) -> (AlgorithmIndividual, EvaluationRecord) {
        ind.id = self.next_id;
        self.next_id += 1;
        if let Some(s) = ind.score.filter(|_| ind.legality.is_pass()) {
            self.best = Some(self.best.map_or(s, |b| b.max(s)));
        }
        let record = EvaluationRecord {
            evaluation_index,
            generation: ind.lineage.generation_index,
            operator: kind,
            individual_id: ind.id,
            parent_ids: ind.lineage.parent_ids.clone(),
            legality: ind.legality,
            detail: ind.legality_detail.clone(),
            score: ind.score,
            best_so_far: self.best,
            wall_time,
        };
        (ind, record)
    }
}

pub fn run_evolution<T: StagedTask>(
    config: &RunConfig,
    task: &T,
    provider: &dyn LlmProvider,
) -> Result<RunReport, EngineError> {
    run_evolution_observed(config, task, provider, &mut |_| {})
}

/// As [`run_evolution`], calling `observer` after initialization and after
/// each generation (for persistence).
pub fn run_evolution_observed<T: StagedTask>(
    config: &RunConfig,
    task: &T,
    provider: &dyn LlmProvider,
    observer: &mut dyn FnMut(&GenerationSnapshot<'_>),
) -> Result<RunReport, EngineError> {
    config.validate()?;
    if task.stage_count() != config.stage_count {
        return Err(EngineError::Config(format!(
            "domain runs {} stages but the configuration asks for {}",
            task.stage_count(),
            config.stage_count
        )));
    }
    let agents = Agents::new(provider, &config.llm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = Population::new(config.population_size);
    let mut acc = Accumulator { next_id: 1, best: None };
    let mut initialization = Vec::new();
    let mut records: Vec<EvaluationRecord> = Vec::new();
    let mut aborted = None;
    let mut generations_completed = 0;

    let abort = |e: ReproduceError| {
        let ReproduceError::Provider(p) = e;
        tracing::error!("aborting run: {p}");
        Some(AbortInfo {
            kind: "provider".into(),
            message: p.to_string(),
        })
    };

    if config.multi_stage_initialization {
        let jobs: Vec<Job> = (0..config.population_size)
            .map(|i| Job {
                kind: OperatorKind::StagewiseDesign,
                ctx: CallContext { generation_index: 0, offspring_index: i },
                parents: Vec::new(),
            })
            .collect();
        let mut born = Vec::new();
        for (i, (result, wall)) in run_jobs(&jobs, &population, task, &agents, config.parallel).into_iter().enumerate() {
            match result {
                Ok(ind) => {
                    let (ind, rec) = acc.record(ind, i, OperatorKind::StagewiseDesign, wall);
                    born.push(ind);
                    initialization.push(rec);
                }
                Err(e) => {
                    aborted = abort(e);
                    break;
                }
            }
        }
        population = update_population(population, born);
        observer(&GenerationSnapshot { generation: 0, population: &population, records: &records });
    }

    let mut reproduction_index = 0usize;
    for generation in 1..=config.generations {
        if aborted.is_some() {
            break;
        }
        let remaining = config.budget_cap.saturating_sub(records.len());
        let count = config.offspring_per_generation.min(remaining);
        if count == 0 {
            tracing::info!("budget of {} evaluations reached", config.budget_cap);
            break;
        }
        // Parents are drawn up front on this thread so the RNG stream does
        // not depend on evaluation order.
        let jobs: Vec<Job> = (0..count)
            .map(|i| {
                let kind = schedule_operator(reproduction_index + i);
                Job {
                    kind,
                    ctx: CallContext { generation_index: generation, offspring_index: i },
                    parents: draw_parents(kind, &population, config.selection_count, &mut rng),
                }
            })
            .collect();
        reproduction_index += count;
        let mut born = Vec::new();
        for (job, (result, wall)) in jobs.iter().zip(run_jobs(&jobs, &population, task, &agents, config.parallel)) {
            match result {
                Ok(ind) => {
                    let (ind, rec) = acc.record(ind, records.len(), job.kind, wall);
                    born.push(ind);
                    records.push(rec);
                }
                Err(e) => {
                    aborted = abort(e);
                    break;
                }
            }
        }
        population = update_population(population, born);
        if aborted.is_none() {
            generations_completed = generation;
        }
        observer(&GenerationSnapshot { generation, population: &population, records: &records });
    }

    let mut operator_counts: BTreeMap<OperatorKind, usize> = OperatorKind::CYCLE.iter().map(|k| (*k, 0)).collect();
    for r in &records {
        *operator_counts.entry(r.operator).or_default() += 1;
    }
    Ok(RunReport {
        config: config.clone(),
        pass_rate: pass_rate(records.iter().map(|r| r.legality)),
        best_score_curve: records.iter().map(|r| r.best_so_far).collect(),
        best_individual: population.best().cloned(),
        initialization,
        records,
        operator_counts,
        generations_completed,
        final_population: population,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_cycle() {
        let kinds: Vec<_> = (0..4).map(schedule_operator).collect();
        assert_eq!(
            kinds,
            vec![
                OperatorKind::StagewiseDesign,
                OperatorKind::GlobalExplore,
                OperatorKind::GlobalEnhance,
                OperatorKind::StagewiseDesign
            ]
        );
    }

    proptest::proptest! {
        #[test]
        fn every_three_t_reproductions_balance(t in 1usize..40, offset in 0usize..3) {
            let mut counts = BTreeMap::new();
            for i in offset * 3..offset * 3 + 3 * t {
                *counts.entry(schedule_operator(i)).or_insert(0usize) += 1;
            }
            proptest::prop_assert!(counts.values().all(|&c| c == t));
        }
    }

    #[test]
    fn config_invariants() {
        let mut cfg = RunConfig {
            domain_id: "x".into(),
            population_size: 5,
            generations: 5,
            offspring_per_generation: 5,
            selection_count: 2,
            stage_count: 4,
            llm: AgentSettings::default(),
            seed: 0,
            budget_cap: 25,
            multi_stage_initialization: true,
            parallel: false,
        };
        assert!(cfg.validate().is_ok());
        cfg.population_size = 0;
        assert!(cfg.validate().is_err());
        cfg.population_size = 5;
        cfg.llm.coder_temperature = 2.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn enhance_on_singleton_picks_it() {
        let pop = Population::from_entries(5, vec![crate::population::tests::scored(9, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(draw_parents(OperatorKind::GlobalEnhance, &pop, 2, &mut rng), vec![0]);
        assert_eq!(draw_parents(OperatorKind::GlobalExplore, &pop, 2, &mut rng), vec![0, 0]);
        assert!(draw_parents(OperatorKind::StagewiseDesign, &pop, 2, &mut rng).is_empty());
        assert!(draw_parents(OperatorKind::GlobalExplore, &Population::new(5), 2, &mut rng).is_empty());
    }
}
