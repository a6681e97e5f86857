//! TOML run configuration with GP and BO profiles.
//!
//! Every key is optional; missing keys come from the selected profile.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentSettings;
use crate::bo::{BoSettings, SyntheticKind};
use crate::engine::RunConfig;
use crate::placement::PlacementSettings;
use crate::sandbox::{RuntimeCommand, SandboxLimits};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown key in {path}: {message}")]
    UnknownKey { path: PathBuf, message: String },
    #[error("invalid configuration {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Placement schedule design.
    Gp,
    /// Acquisition-function design.
    Bo,
}

/// Which objective the BO domain optimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveChoice {
    Synthetic(SyntheticKind),
    /// CSV table of configurations and values.
    Tabular(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementDomainConfig {
    /// JSON instance file; the shipped 100-cell instance when absent.
    pub instance: Option<PathBuf>,
    /// Design the learning rate only, with this many steps per subproblem.
    pub fixed_steps: Option<usize>,
    pub settings: PlacementSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoDomainConfig {
    pub objective: ObjectiveChoice,
    pub total_samples: usize,
    pub settings: BoSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainConfig {
    Placement(PlacementDomainConfig),
    Bo(BoDomainConfig),
}

impl DomainConfig {
    pub fn id(&self) -> &'static str {
        match self {
            DomainConfig::Placement(_) => "placement",
            DomainConfig::Bo(_) => "bo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub runtime: RuntimeCommand,
    pub limits: SandboxLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedConfig {
    pub profile: Profile,
    pub run: RunConfig,
    pub domain: DomainConfig,
    pub sandbox: SandboxConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    profile: Option<Profile>,
    population_size: Option<usize>,
    generations: Option<usize>,
    offspring_per_generation: Option<usize>,
    selection_count: Option<usize>,
    stage_count: Option<usize>,
    seed: Option<u64>,
    budget_cap: Option<usize>,
    multi_stage_initialization: Option<bool>,
    thoughts_of_code: Option<bool>,
    parallel: Option<bool>,
    llm: Option<RawLlm>,
    placement: Option<RawPlacement>,
    bo: Option<RawBo>,
    sandbox: Option<RawSandbox>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLlm {
    coordinator_model: Option<String>,
    coordinator_temperature: Option<f64>,
    coder_model: Option<String>,
    coder_temperature: Option<f64>,
    max_retries: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlacement {
    instance: Option<PathBuf>,
    fixed_steps: Option<usize>,
    subproblems: Option<usize>,
    step_cap: Option<usize>,
    gamma_bins: Option<f64>,
    gamma_decay: Option<f64>,
    lambda_growth: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBo {
    objective: Option<SyntheticKind>,
    tabular: Option<PathBuf>,
    total_samples: Option<usize>,
    init_count: Option<usize>,
    pool_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSandbox {
    python: Option<String>,
    call_timeout_ms: Option<u64>,
    startup_timeout_ms: Option<u64>,
}

/// Profile defaults.
pub fn profile_defaults(profile: Profile) -> LoadedConfig {
    let (m, g, k, thoughts, domain) = match profile {
        Profile::Gp => (
            5,
            5,
            4,
            false,
            DomainConfig::Placement(PlacementDomainConfig {
                instance: None,
                fixed_steps: None,
                settings: PlacementSettings::default(),
            }),
        ),
        Profile::Bo => (
            3,
            3,
            3,
            true,
            DomainConfig::Bo(BoDomainConfig {
                objective: ObjectiveChoice::Synthetic(SyntheticKind::Ackley2d),
                total_samples: 15,
                settings: BoSettings::default(),
            }),
        ),
    };
    LoadedConfig {
        profile,
        run: RunConfig {
            domain_id: domain.id().to_string(),
            population_size: m,
            generations: g,
            offspring_per_generation: m,
            selection_count: 2,
            stage_count: k,
            llm: AgentSettings {
                thoughts_of_code: thoughts,
                ..AgentSettings::default()
            },
            seed: 0,
            budget_cap: g * m,
            multi_stage_initialization: true,
            parallel: false,
        },
        domain,
        sandbox: SandboxConfig {
            runtime: RuntimeCommand::python(),
            limits: SandboxLimits::default(),
        },
    }
}

/// Parses configuration text. `profile` overrides the file's `profile` key;
/// with neither, the GP profile applies.
pub fn parse_config(text: &str, origin: &Path, profile: Option<Profile>) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        if message.contains("unknown field") {
            ConfigError::UnknownKey { path: origin.to_path_buf(), message }
        } else {
            ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() }
        }
    })?;
    let profile = profile.or(raw.profile).unwrap_or(Profile::Gp);
    let mut cfg = profile_defaults(profile);
    let base = origin.parent().unwrap_or(Path::new("."));
    let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

    let run = &mut cfg.run;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    let generations_set = raw.generations.is_some() || raw.offspring_per_generation.is_some();
    set!(run.population_size, raw.population_size);
    if raw.population_size.is_some() && raw.offspring_per_generation.is_none() {
        run.offspring_per_generation = run.population_size;
    }
    set!(run.generations, raw.generations);
    set!(run.offspring_per_generation, raw.offspring_per_generation);
    set!(run.selection_count, raw.selection_count);
    set!(run.stage_count, raw.stage_count);
    set!(run.seed, raw.seed);
    match raw.budget_cap {
        Some(b) => run.budget_cap = b,
        None if generations_set || raw.population_size.is_some() => {
            run.budget_cap = run.generations * run.offspring_per_generation
        }
        None => {}
    }
    set!(run.multi_stage_initialization, raw.multi_stage_initialization);
    set!(run.llm.thoughts_of_code, raw.thoughts_of_code);
    set!(run.parallel, raw.parallel);
    if let Some(llm) = raw.llm {
        set!(run.llm.coordinator_model, llm.coordinator_model);
        set!(run.llm.coordinator_temperature, llm.coordinator_temperature);
        set!(run.llm.coder_model, llm.coder_model);
        set!(run.llm.coder_temperature, llm.coder_temperature);
        set!(run.llm.max_retries, llm.max_retries);
    }

    match (&mut cfg.domain, raw.placement, raw.bo) {
        (DomainConfig::Placement(_), _, Some(_)) => {
            return Err(ConfigError::Invalid("[bo] section given for the gp profile".into()))
        }
        (DomainConfig::Bo(_), Some(_), _) => {
            return Err(ConfigError::Invalid("[placement] section given for the bo profile".into()))
        }
        (DomainConfig::Placement(p), Some(raw), None) => {
            p.instance = raw.instance.map(resolve);
            p.fixed_steps = raw.fixed_steps;
            set!(p.settings.subproblems, raw.subproblems);
            set!(p.settings.step_cap, raw.step_cap);
            set!(p.settings.gamma_bins, raw.gamma_bins);
            set!(p.settings.gamma_decay, raw.gamma_decay);
            set!(p.settings.lambda_growth, raw.lambda_growth);
        }
        (DomainConfig::Bo(b), None, Some(raw)) => {
            match (raw.objective, raw.tabular) {
                (Some(_), Some(_)) => {
                    return Err(ConfigError::Invalid("give either bo.objective or bo.tabular, not both".into()))
                }
                (Some(kind), None) => b.objective = ObjectiveChoice::Synthetic(kind),
                (None, Some(path)) => b.objective = ObjectiveChoice::Tabular(resolve(path)),
                (None, None) => {}
            }
            set!(b.total_samples, raw.total_samples);
            set!(b.settings.init_count, raw.init_count);
            set!(b.settings.pool_size, raw.pool_size);
        }
        _ => {}
    }
    if let Some(sb) = raw.sandbox {
        if let Some(python) = sb.python {
            cfg.sandbox.runtime = RuntimeCommand::python_with(&python);
        }
        set!(cfg.sandbox.limits.call_timeout_ms, sb.call_timeout_ms);
        set!(cfg.sandbox.limits.startup_timeout_ms, sb.startup_timeout_ms);
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &LoadedConfig) -> Result<(), ConfigError> {
    cfg.run.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    match &cfg.domain {
        DomainConfig::Placement(p) => {
            if p.settings.subproblems < cfg.run.stage_count {
                return Err(ConfigError::Invalid(format!(
                    "{} subproblems cannot fill {} stages",
                    p.settings.subproblems, cfg.run.stage_count
                )));
            }
            if p.fixed_steps == Some(0) || p.settings.step_cap == 0 {
                return Err(ConfigError::Invalid("step counts must be positive".into()));
            }
            if !(p.settings.lambda_growth >= 1.0) {
                return Err(ConfigError::Invalid("lambda_growth must be at least 1".into()));
            }
        }
        DomainConfig::Bo(b) => {
            if b.total_samples < b.settings.init_count + cfg.run.stage_count {
                return Err(ConfigError::Invalid(format!(
                    "{} samples leave no acquisition steps for {} stages after {} initial points",
                    b.total_samples, cfg.run.stage_count, b.settings.init_count
                )));
            }
            if b.settings.pool_size == 0 {
                return Err(ConfigError::Invalid("pool_size must be positive".into()));
            }
        }
    }
    Ok(())
}

pub fn load_config(path: impl AsRef<Path>, profile: Option<Profile>) -> Result<LoadedConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path, profile)
}
