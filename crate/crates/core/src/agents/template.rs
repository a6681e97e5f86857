//! Prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Anything between braces that is
//! not a lowercase identifier is left untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("missing placeholder bindings: {}", .0.join(", "))]
    Missing(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            template_id: template_id.into(),
            body: body.into(),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        for token in tokenize(&self.body) {
            if let Token::Placeholder(name) = token {
                if !out.iter().any(|n: &String| n == name) {
                    out.push(name.to_string());
                }
            }
        }
        out
    }
}

enum Token<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && s.chars().next().is_some_and(|c| c.is_ascii_lowercase())
}

fn tokenize(body: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut rest = body;
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix("{{") {
            tokens.push(Token::Text("{"));
            rest = tail;
            continue;
        }
        if let Some(tail) = rest.strip_prefix("}}") {
            tokens.push(Token::Text("}"));
            rest = tail;
            continue;
        }
        if rest.starts_with('{') {
            if let Some(end) = rest.find('}') {
                let name = &rest[1..end];
                if is_ident(name) {
                    tokens.push(Token::Placeholder(name));
                    rest = &rest[end + 1..];
                    continue;
                }
            }
            tokens.push(Token::Text(&rest[..1]));
            rest = &rest[1..];
            continue;
        }
        let next = rest
            .char_indices()
            .skip(1)
            .find(|&(_, c)| c == '{' || c == '}')
            .map_or(rest.len(), |(i, _)| i);
        // A lone '}' that is not part of "}}" is literal text.
        let next = if rest.starts_with('}') { 1.max(next) } else { next };
        tokens.push(Token::Text(&rest[..next]));
        rest = &rest[next..];
    }
    tokens
}

/// Substitutes every placeholder literally. Bound values are not re-scanned,
/// so code containing braces passes through unchanged.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<&str, String>,
) -> Result<String, TemplateError> {
    let tokens = tokenize(&template.body);
    let mut missing = Vec::new();
    for token in &tokens {
        if let Token::Placeholder(name) = token {
            if !bindings.contains_key(name) && !missing.iter().any(|m: &String| m == name) {
                missing.push(name.to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(TemplateError::Missing(missing));
    }
    let mut out = String::with_capacity(template.body.len());
    for token in tokens {
        match token {
            Token::Text(t) => out.push_str(t),
            Token::Placeholder(name) => out.push_str(&bindings[name]),
        }
    }
    Ok(out)
}

pub const COORDINATOR: &str = "coordinator";
pub const CODER_INITIAL: &str = "coder_initial";
pub const CODER_STAGE: &str = "coder_stage";
pub const GLOBAL_EXPLORE: &str = "global_explore";
pub const GLOBAL_ENHANCE: &str = "global_enhance";

/// The five prompts used by the operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub coordinator: PromptTemplate,
    pub coder_initial: PromptTemplate,
    pub coder_stage: PromptTemplate,
    pub global_explore: PromptTemplate,
    pub global_enhance: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            coordinator: PromptTemplate::new(COORDINATOR, COORDINATOR_BODY),
            coder_initial: PromptTemplate::new(CODER_INITIAL, CODER_INITIAL_BODY),
            coder_stage: PromptTemplate::new(CODER_STAGE, CODER_STAGE_BODY),
            global_explore: PromptTemplate::new(GLOBAL_EXPLORE, GLOBAL_EXPLORE_BODY),
            global_enhance: PromptTemplate::new(GLOBAL_ENHANCE, GLOBAL_ENHANCE_BODY),
        }
    }
}

const COORDINATOR_BODY: &str = "\
You are the coordinator of a team of algorithm designers. The algorithm is \
designed and executed stage by stage; after each stage you receive the \
execution information of the stages run so far.

# Task
{task_description}

# Execution information so far
{history_info}

# Your job
First analyze how the partial algorithm of the previous stages affected the \
optimization (what improved, what stalled, what went wrong and why). Then give \
concrete design guidance for stage {stage_index}, which every component \
designer will follow.

Answer in exactly this layout:
Reflection: <your analysis of the previous stages>
Goal: <the design goal and concrete guidance for stage {stage_index}>
";

const CODER_INITIAL_BODY: &str = "\
You are an expert algorithm designer responsible for one component of a \
multi-stage algorithm.

# Task
{task_description}

# Your component
{component_spec}

# Stage {stage_index} goal from the coordinator
{goal}

Write the code of your component for stage {stage_index}. It is executed \
until the end of this stage, then you will receive feedback and design the \
next stage. Return only the code in one fenced code block.
";

const CODER_STAGE_BODY: &str = "\
You are an expert algorithm designer responsible for one component of a \
multi-stage algorithm.

# Task
{task_description}

# Your component
{component_spec}

# Your code for the previous stages
{history_info}

# Stage {stage_index} goal from the coordinator
{goal}

Write the code of your component for stage {stage_index}. It is appended \
after the previous stages' code, so a new definition of the entry function \
replaces the earlier one from this stage on. Return only the code in one \
fenced code block.
";

const GLOBAL_EXPLORE_BODY: &str = "\
You are an expert algorithm designer responsible for one component of a \
multi-stage algorithm.

# Task
{task_description}

# Your component
{component_spec}

# Reference designs
Each reference lists, stage by stage, the goal it followed, what happened \
during execution and the code of every component.
{references}

Design a new multi-stage heuristic whose idea has a different form from all \
the references above. It may be motivated by them or be totally different. \
Return the full multi-stage code for your component in one fenced code block.
";

const GLOBAL_ENHANCE_BODY: &str = "\
You are an expert algorithm designer responsible for one component of a \
multi-stage algorithm.

# Task
{task_description}

# Your component
{component_spec}

# Reference design
{references}

# Outcome of the reference
{reference_info}

Enhance the performance of this reference by making a few modifications to \
it, for example by changing its parameters. Return the full multi-stage code \
for your component in one fenced code block.
";

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_goal() {
        let t = PromptTemplate::new("t", "Goal: {goal}");
        assert_eq!(render_prompt(&t, &bind(&[("goal", "reduce overflow")])).unwrap(), "Goal: reduce overflow");
    }

    #[test]
    fn no_placeholders_unchanged() {
        let t = PromptTemplate::new("t", "plain text, nothing to fill");
        assert_eq!(render_prompt(&t, &BTreeMap::new()).unwrap(), t.body);
    }

    #[test]
    fn missing_binding_named() {
        let t = PromptTemplate::new("t", "{goal} / {history_info}");
        let err = render_prompt(&t, &bind(&[("goal", "g")])).unwrap_err();
        assert_eq!(err, TemplateError::Missing(vec!["history_info".into()]));
        assert!(err.to_string().contains("history_info"));
    }

    #[test]
    fn escapes_and_non_identifiers_are_literal() {
        let t = PromptTemplate::new("t", "{{goal}} {goal} {Not An Ident} { } }");
        let out = render_prompt(&t, &bind(&[("goal", "x")])).unwrap();
        assert_eq!(out, "{goal} x {Not An Ident} { } }");
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let t = PromptTemplate::new("t", "{goal}");
        let out = render_prompt(&t, &bind(&[("goal", "d = {stage_index}")])).unwrap();
        assert_eq!(out, "d = {stage_index}");
    }

    #[test]
    fn builtin_templates_use_known_placeholders() {
        let known = [
            "task_description",
            "component_spec",
            "stage_index",
            "history_info",
            "goal",
            "references",
            "reference_info",
        ];
        let set = TemplateSet::default();
        for t in [
            &set.coordinator,
            &set.coder_initial,
            &set.coder_stage,
            &set.global_explore,
            &set.global_enhance,
        ] {
            for p in t.placeholders() {
                assert!(known.contains(&p.as_str()), "{} uses {p}", t.template_id);
            }
        }
    }
}
