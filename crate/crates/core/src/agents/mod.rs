//! Coordinator and coder agents.
//!
//! The coordinator reflects on the execution records of the stages run so
//! far and emits a goal for the next stage; each coder owns one component
//! and writes its code. The global operators ask each coder for a complete
//! multi-stage listing in one call.

pub mod extract;
pub mod provider;
pub mod template;

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ComponentSpec;
use crate::population::{AlgorithmIndividual, ExecutionInfo, Metrics, StageFragment, StageRecord};

use self::extract::{braced_thought, extract_code, prose_before_code, split_stages};
use self::provider::{AgentRole, ChatMessage, ChatRequest, LlmProvider, ProviderError, RequestKey};
use self::template::{render_prompt, PromptTemplate, TemplateError, TemplateSet};

const RETRY_NOTE: &str = "Return only code in one fenced block.";
const THOUGHT_NOTE: &str =
    "Before the code block, describe the idea of your design in one sentence inside braces {}.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unusable response from {role} after {attempts} attempts: {detail}")]
    Malformed {
        role: AgentRole,
        attempts: usize,
        detail: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub role: AgentRole,
    pub model_name: String,
    pub temperature: f64,
}

impl AgentConfig {
    pub fn new(role: AgentRole, model_name: impl Into<String>, temperature: f64) -> Result<Self, AgentError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(AgentError::Config(format!("temperature {temperature} outside [0, 2]")));
        }
        Ok(Self {
            role,
            model_name: model_name.into(),
            temperature,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub coordinator_model: String,
    pub coordinator_temperature: f64,
    pub coder_model: String,
    pub coder_temperature: f64,
    pub thoughts_of_code: bool,
    /// Extra attempts after a malformed response.
    pub max_retries: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            coordinator_model: "gpt-4o".into(),
            coordinator_temperature: 0.7,
            coder_model: "gpt-4o".into(),
            coder_temperature: 0.2,
            thoughts_of_code: false,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGoal {
    pub stage_index: usize,
    pub goal_text: String,
    pub reflection_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub source: String,
    pub raw_response: String,
    pub thought: Option<String>,
}

/// One coder's complete multi-stage listing from a global operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStageArtifact {
    pub component_id: String,
    pub stages: Vec<String>,
    pub raw_response: String,
    pub thought: Option<String>,
}

/// Per-call context: which generation and offspring slot the call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallContext {
    pub generation_index: usize,
    pub offspring_index: usize,
}

/// What was sent to the provider, for auditing temperatures and prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRequest {
    pub key: RequestKey,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
}

/// The agent team bound to one provider.
pub struct Agents<'p> {
    provider: &'p dyn LlmProvider,
    coordinator: AgentConfig,
    coder_model: String,
    coder_temperature: f64,
    thoughts_of_code: bool,
    max_retries: usize,
    templates: TemplateSet,
    log: Mutex<Vec<LoggedRequest>>,
}

impl<'p> Agents<'p> {
    pub fn new(provider: &'p dyn LlmProvider, settings: &AgentSettings) -> Result<Self, AgentError> {
        let coordinator = AgentConfig::new(
            AgentRole::Coordinator,
            settings.coordinator_model.clone(),
            settings.coordinator_temperature,
        )?;
        // Validates the coder temperature once for all components.
        AgentConfig::new(AgentRole::Coder(String::new()), settings.coder_model.clone(), settings.coder_temperature)?;
        Ok(Self {
            provider,
            coordinator,
            coder_model: settings.coder_model.clone(),
            coder_temperature: settings.coder_temperature,
            thoughts_of_code: settings.thoughts_of_code,
            max_retries: settings.max_retries,
            templates: TemplateSet::default(),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn coder_config(&self, component_id: &str) -> AgentConfig {
        AgentConfig {
            role: AgentRole::Coder(component_id.to_string()),
            model_name: self.coder_model.clone(),
            temperature: self.coder_temperature,
        }
    }

    pub fn coordinator_config(&self) -> &AgentConfig {
        &self.coordinator
    }

    /// Snapshot of every request sent so far.
    pub fn request_log(&self) -> Vec<LoggedRequest> {
        self.log.lock().expect("request log poisoned").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("request log poisoned").clear();
    }

    /// Renders `template`, calls the provider and parses the reply, retrying
    /// on unusable output.
    fn ask<T>(
        &self,
        cfg: &AgentConfig,
        template: &PromptTemplate,
        bindings: &BTreeMap<&str, String>,
        suffix: Option<&str>,
        stage_index: usize,
        ctx: &CallContext,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, AgentError> {
        let mut prompt = render_prompt(template, bindings)?;
        if let Some(s) = suffix {
            prompt.push('\n');
            prompt.push_str(s);
            prompt.push('\n');
        }
        let mut last_detail = String::new();
        for attempt in 0..=self.max_retries {
            let mut content = prompt.clone();
            if attempt > 0 {
                content.push_str(&format!(
                    "\nYour previous answer could not be used ({last_detail}). {RETRY_NOTE}\n"
                ));
            }
            let request = ChatRequest {
                key: RequestKey {
                    role: cfg.role.clone(),
                    template_id: template.template_id.clone(),
                    stage_index,
                    generation_index: ctx.generation_index,
                    offspring_index: ctx.offspring_index,
                    attempt,
                },
                model: cfg.model_name.clone(),
                temperature: cfg.temperature,
                messages: vec![ChatMessage::user(content.clone())],
            };
            self.log.lock().expect("request log poisoned").push(LoggedRequest {
                key: request.key.clone(),
                model: request.model.clone(),
                temperature: request.temperature,
                prompt: content,
            });
            let reply = self.provider.complete(&request)?;
            match parse(&reply) {
                Ok(value) => return Ok(value),
                Err(detail) => {
                    tracing::debug!(role = %cfg.role, attempt, %detail, "unusable agent response");
                    last_detail = detail;
                }
            }
        }
        Err(AgentError::Malformed {
            role: cfg.role.clone(),
            attempts: self.max_retries + 1,
            detail: last_detail,
        })
    }

    /// Goal for `stage_index` from the records of stages `0..stage_index`.
    pub fn coordinator_reflect(
        &self,
        ctx: &CallContext,
        task_description: &str,
        history: &ExecutionInfo,
        stage_index: usize,
    ) -> Result<StageGoal, AgentError> {
        let stages = &history.stages[..stage_index.min(history.stages.len())];
        let bindings = BTreeMap::from([
            ("task_description", task_description.to_string()),
            ("history_info", format_history(&history.initial, stages)),
            ("stage_index", stage_index.to_string()),
        ]);
        let cfg = self.coordinator.clone();
        self.ask(&cfg, &self.templates.coordinator, &bindings, None, stage_index, ctx, |reply| {
            parse_goal(reply, stage_index)
        })
    }

    /// Fragment for `stage_index` of one component, extending `prior_stages`.
    pub fn coder_generate(
        &self,
        ctx: &CallContext,
        task_description: &str,
        spec: &ComponentSpec,
        stage_count: usize,
        goal: &StageGoal,
        prior_stages: &[StageFragment],
    ) -> Result<CodeArtifact, AgentError> {
        let stage_index = goal.stage_index;
        let mut bindings = BTreeMap::from([
            ("task_description", task_description.to_string()),
            ("component_spec", spec.prompt_text(stage_count, false)),
            ("stage_index", stage_index.to_string()),
            ("goal", goal.goal_text.clone()),
        ]);
        let template = if prior_stages.is_empty() {
            &self.templates.coder_initial
        } else {
            bindings.insert("history_info", format_prior_fragments(prior_stages));
            &self.templates.coder_stage
        };
        let cfg = self.coder_config(&spec.id);
        let thoughts = self.thoughts_of_code;
        self.ask(&cfg, template, &bindings, thoughts.then_some(THOUGHT_NOTE), stage_index, ctx, |reply| {
            let source = extract_code(reply).map_err(|e| e.to_string())?;
            Ok(CodeArtifact {
                source,
                raw_response: reply.to_string(),
                thought: if thoughts { extract_thought(reply) } else { None },
            })
        })
    }

    /// New designs intended to differ in form from the `references`.
    pub fn global_explore(
        &self,
        ctx: &CallContext,
        task_description: &str,
        specs: &[ComponentSpec],
        stage_count: usize,
        references: &[&AlgorithmIndividual],
    ) -> Result<Vec<MultiStageArtifact>, AgentError> {
        if references.is_empty() {
            return Err(AgentError::Config("global explore needs at least one reference".into()));
        }
        let template = self.templates.global_explore.clone();
        self.one_shot(ctx, task_description, specs, stage_count, &template, |spec| {
            let text = references
                .iter()
                .enumerate()
                .map(|(i, r)| format_reference(i + 1, r, &spec.id))
                .collect::<Vec<_>>()
                .join("\n");
            BTreeMap::from([("references", text)])
        })
    }

    /// A lightly modified version of one reference.
    pub fn global_enhance(
        &self,
        ctx: &CallContext,
        task_description: &str,
        specs: &[ComponentSpec],
        stage_count: usize,
        reference: &AlgorithmIndividual,
    ) -> Result<Vec<MultiStageArtifact>, AgentError> {
        let template = self.templates.global_enhance.clone();
        self.one_shot(ctx, task_description, specs, stage_count, &template, |spec| {
            BTreeMap::from([
                ("references", format_reference(1, reference, &spec.id)),
                ("reference_info", format_outcome(reference)),
            ])
        })
    }

    fn one_shot(
        &self,
        ctx: &CallContext,
        task_description: &str,
        specs: &[ComponentSpec],
        stage_count: usize,
        template: &PromptTemplate,
        extra: impl Fn(&ComponentSpec) -> BTreeMap<&'static str, String>,
    ) -> Result<Vec<MultiStageArtifact>, AgentError> {
        let thoughts = self.thoughts_of_code;
        specs
            .iter()
            .map(|spec| {
                let mut bindings = BTreeMap::from([
                    ("task_description", task_description.to_string()),
                    ("component_spec", spec.prompt_text(stage_count, true)),
                ]);
                bindings.extend(extra(spec));
                let cfg = self.coder_config(&spec.id);
                self.ask(&cfg, template, &bindings, thoughts.then_some(THOUGHT_NOTE), 0, ctx, |reply| {
                    let code = extract_code(reply).map_err(|e| e.to_string())?;
                    let stages = split_stages(&code, stage_count).map_err(|e| e.to_string())?;
                    Ok(MultiStageArtifact {
                        component_id: spec.id.clone(),
                        stages,
                        raw_response: reply.to_string(),
                        thought: if thoughts { extract_thought(reply) } else { None },
                    })
                })
            })
            .collect()
    }
}

fn extract_thought(reply: &str) -> Option<String> {
    let prose = prose_before_code(reply);
    braced_thought(prose).or_else(|| {
        let p = prose.trim();
        (!p.is_empty()).then(|| p.to_string())
    })
}

/// Splits a coordinator reply into reflection and goal. Without a `Goal:`
/// marker the whole reply is the goal.
fn parse_goal(reply: &str, stage_index: usize) -> Result<StageGoal, String> {
    let text = reply.trim();
    if text.is_empty() {
        return Err("empty coordinator response".into());
    }
    let lower = text.to_ascii_lowercase();
    let marker = ["\ngoal:", "\n**goal**:", "\n**goal:**"]
        .iter()
        .filter_map(|m| lower.find(m).map(|i| (i, m.len())))
        .min()
        .or_else(|| lower.starts_with("goal:").then_some((0, "goal:".len())));
    let (reflection, goal) = match marker {
        Some((i, len)) => (&text[..i], &text[i + len..]),
        None => ("", text),
    };
    let reflection = reflection.trim();
    let reflection = reflection
        .strip_prefix("Reflection:")
        .or_else(|| reflection.strip_prefix("**Reflection**:"))
        .unwrap_or(reflection)
        .trim();
    let goal = goal.trim();
    if goal.is_empty() {
        return Err("coordinator response has an empty goal".into());
    }
    Ok(StageGoal {
        stage_index,
        goal_text: goal.to_string(),
        reflection_text: reflection.to_string(),
    })
}

/// Fixed-precision metric rendering so prompts are byte-stable.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e5 || v.abs() < 1e-3 {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

pub fn format_metrics(metrics: &Metrics) -> String {
    metrics
        .iter()
        .map(|(k, v)| format!("{k}={}", format_value(*v)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn format_record(label: &str, record: &StageRecord) -> String {
    let mut out = format!("## {label}\n");
    if !record.summary.is_empty() {
        out.push_str(record.summary.trim());
        out.push('\n');
    }
    if !record.metrics.is_empty() {
        out.push_str(&format!("Metrics: {}\n", format_metrics(&record.metrics)));
    }
    out
}

fn format_history(initial: &StageRecord, stages: &[StageRecord]) -> String {
    let mut out = format_record("Initial information", initial);
    if stages.is_empty() {
        out.push_str("\nNo stage has been executed yet.\n");
    }
    for (i, record) in stages.iter().enumerate() {
        out.push('\n');
        out.push_str(&format_record(&format!("Stage {i} record"), record));
    }
    out
}

fn format_prior_fragments(prior: &[StageFragment]) -> String {
    prior
        .iter()
        .map(|f| {
            format!(
                "## Stage {} (goal: {})\n```python\n{}\n```\n",
                f.stage_index,
                f.goal_text.trim(),
                f.source.trim_end()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Per-stage table of goal, outcome and this component's code.
fn format_reference(number: usize, reference: &AlgorithmIndividual, component_id: &str) -> String {
    let score = reference.score.map_or_else(|| "n/a".to_string(), format_value);
    let mut out = format!("### Reference {number} (score: {score})\n");
    if let Some(component) = reference.component(component_id) {
        if let Some(d) = &component.description {
            out.push_str(&format!("Idea: {d}\n"));
        }
        for fragment in &component.stages {
            let i = fragment.stage_index;
            out.push_str(&format!("#### Stage {i}\nGoal: {}\n", fragment.goal_text.trim()));
            if let Some(record) = reference.info.stages.get(i) {
                if !record.summary.is_empty() {
                    out.push_str(&format!("Outcome: {}\n", record.summary.trim()));
                }
                out.push_str(&format!("Metrics: {}\n", format_metrics(&record.metrics)));
            }
            out.push_str(&format!("```python\n{}\n```\n", fragment.source.trim_end()));
        }
    }
    if !reference.info.final_metrics.is_empty() {
        out.push_str(&format!("Final metrics: {}\n", format_metrics(&reference.info.final_metrics)));
    }
    out
}

fn format_outcome(reference: &AlgorithmIndividual) -> String {
    let score = reference.score.map_or_else(|| "n/a".to_string(), format_value);
    let mut out = format!("Final score: {score}\n");
    for (i, record) in reference.info.stages.iter().enumerate() {
        out.push_str(&format!("Stage {i}: {}\n", format_metrics(&record.metrics)));
    }
    out
}
