//! Glue between a loaded configuration and the engine: domain construction,
//! a runtime preflight, per-generation persistence and report emission.

use std::path::Path;

use thiserror::Error;

use crate::agents::provider::LlmProvider;
use crate::bo::{load_tabular, BoObjective, BoTask, SyntheticObjective};
use crate::config::{DomainConfig, LoadedConfig, ObjectiveChoice, SandboxConfig};
use crate::engine::{run_evolution_observed, EngineError, RunReport};
use crate::harness::{evaluate_full, HarnessError, StagedTask};
use crate::persist::{save_population, PersistError, PersistedPopulation};
use crate::placement::instance::shipped_reference_instance;
use crate::placement::{load_instance, PlacementTask};
use crate::population::AlgorithmIndividual;
use crate::report::{emit_report, ReportError};
use crate::sandbox::spawn_candidate;

pub const POPULATION_FILE: &str = "population.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("domain setup failed: {0}")]
    Domain(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

pub enum DomainTask {
    Placement(PlacementTask),
    Bo(BoTask),
}

/// Builds the evaluation domain described by `cfg`.
pub fn build_task(cfg: &LoadedConfig) -> Result<DomainTask, RunError> {
    let SandboxConfig { runtime, limits } = cfg.sandbox.clone();
    let k = cfg.run.stage_count;
    Ok(match &cfg.domain {
        DomainConfig::Placement(p) => {
            let instance = match &p.instance {
                Some(path) => load_instance(path).map_err(|e| RunError::Domain(e.to_string()))?,
                None => shipped_reference_instance(),
            };
            instance.validate().map_err(|e| RunError::Domain(e.to_string()))?;
            let mut task = PlacementTask::new(instance, k);
            task.settings = p.settings.clone();
            task.fixed_steps = p.fixed_steps;
            task.runtime = runtime;
            task.limits = limits;
            DomainTask::Placement(task)
        }
        DomainConfig::Bo(b) => {
            let objective = match &b.objective {
                ObjectiveChoice::Synthetic(kind) => BoObjective::Synthetic(SyntheticObjective::new(*kind)),
                ObjectiveChoice::Tabular(path) => {
                    BoObjective::Tabular(load_tabular(path).map_err(|e| RunError::Domain(e.to_string()))?)
                }
            };
            let mut task = BoTask::new(objective, b.total_samples, k, cfg.run.seed);
            task.settings = b.settings.clone();
            task.runtime = runtime;
            task.limits = limits;
            DomainTask::Bo(task)
        }
    })
}

/// Starts and stops a trivial candidate so a missing interpreter is
/// reported once, up front, instead of as a failure of every offspring.
pub fn preflight(sandbox: &SandboxConfig) -> Result<(), RunError> {
    let handle = spawn_candidate("def probe():\n    return 0\n", &sandbox.runtime, "probe", "probe", sandbox.limits)
        .map_err(|e| RunError::Domain(format!("candidate runtime unusable: {e}")))?;
    handle.close();
    Ok(())
}

fn evolve<T: StagedTask>(
    cfg: &LoadedConfig,
    task: &T,
    provider: &dyn LlmProvider,
    out_dir: &Path,
) -> Result<RunReport, RunError> {
    std::fs::create_dir_all(out_dir).map_err(|e| RunError::Domain(format!("{}: {e}", out_dir.display())))?;
    let pop_path = out_dir.join(POPULATION_FILE);
    let mut persist_error = None;
    let report = run_evolution_observed(&cfg.run, task, provider, &mut |snap| {
        let saved = PersistedPopulation::new(cfg.run.clone(), snap.generation, snap.population.clone());
        if let Err(e) = save_population(&saved, &pop_path) {
            tracing::error!("population not saved: {e}");
            persist_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = persist_error {
        return Err(e.into());
    }
    emit_report(&report, out_dir)?;
    Ok(report)
}

/// Runs a full evolution and writes every output into `out_dir`.
pub fn execute_run(cfg: &LoadedConfig, provider: &dyn LlmProvider, out_dir: &Path) -> Result<RunReport, RunError> {
    preflight(&cfg.sandbox)?;
    match build_task(cfg)? {
        DomainTask::Placement(t) => evolve(cfg, &t, provider, out_dir),
        DomainTask::Bo(t) => evolve(cfg, &t, provider, out_dir),
    }
}

/// Re-evaluates a stored individual without any agent calls.
pub fn evaluate_individual(cfg: &LoadedConfig, individual: AlgorithmIndividual) -> Result<AlgorithmIndividual, RunError> {
    preflight(&cfg.sandbox)?;
    let out = match build_task(cfg)? {
        DomainTask::Placement(t) => evaluate_full(individual, &t),
        DomainTask::Bo(t) => evaluate_full(individual, &t),
    };
    out.map_err(|e| match e {
        HarnessError::Domain(msg) => RunError::Domain(msg),
        HarnessError::Provider(p) => RunError::Domain(p.to_string()),
    })
}
