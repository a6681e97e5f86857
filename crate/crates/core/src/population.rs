//! Multi-stage heuristic population: the individuals the engine evolves,
//! their execution feedback, rank-based parent selection and top-M survival.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::OperatorKind;

/// Named scalar metrics. Ordered so serialized records are byte-stable.
pub type Metrics = BTreeMap<String, f64>;

#[derive(Debug, Error, PartialEq)]
pub enum PopulationError {
    #[error("no selectable individuals")]
    Empty,
    #[error("selection count must be at least 1")]
    ZeroSelection,
    #[error("stage-count mismatch: component '{component}' has {found} stages, expected {expected}")]
    StageCountMismatch {
        component: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate component id '{0}'")]
    DuplicateComponent(String),
    #[error("no components supplied")]
    NoComponents,
    #[error("invalid heuristic '{component}': {reason}")]
    InvalidHeuristic { component: String, reason: String },
}

/// One stage's worth of candidate code, produced against a stage goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFragment {
    pub stage_index: usize,
    pub source: String,
    pub goal_text: String,
}

/// An algorithm component split into K ordered stage fragments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStageHeuristic {
    pub component_id: String,
    pub stages: Vec<StageFragment>,
    /// Natural-language "thought" attached to the code, when enabled.
    #[serde(default)]
    pub description: Option<String>,
}

impl MultiStageHeuristic {
    pub fn new(component_id: impl Into<String>, stages: Vec<StageFragment>) -> Self {
        Self {
            component_id: component_id.into(),
            stages,
            description: None,
        }
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Checks that stage indices are exactly `0..K` and every fragment has source.
    pub fn validate(&self) -> Result<(), PopulationError> {
        for (expected, stage) in self.stages.iter().enumerate() {
            if stage.stage_index != expected {
                return Err(PopulationError::InvalidHeuristic {
                    component: self.component_id.clone(),
                    reason: format!(
                        "stage index {} found at position {expected}",
                        stage.stage_index
                    ),
                });
            }
            if stage.source.trim().is_empty() {
                return Err(PopulationError::InvalidHeuristic {
                    component: self.component_id.clone(),
                    reason: format!("stage {expected} has empty source"),
                });
            }
        }
        Ok(())
    }

    /// Source of the partial program that runs during `stage`: fragments
    /// `0..=stage` joined in order, so later fragments extend or override
    /// earlier definitions.
    pub fn cumulative_source(&self, stage: usize) -> String {
        let mut out = String::new();
        for fragment in self.stages.iter().take(stage + 1) {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("# --- stage {} ---\n", fragment.stage_index));
            out.push_str(fragment.source.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Feedback for one stage: finite metrics and a prose summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub metrics: Metrics,
    pub summary: String,
}

impl StageRecord {
    pub fn new(summary: impl Into<String>) -> Self {
        Self {
            metrics: Metrics::new(),
            summary: summary.into(),
        }
    }

    pub fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn all_finite(&self) -> bool {
        self.metrics.values().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionInfo {
    /// Task description and starting metrics (I_0).
    pub initial: StageRecord,
    /// One record per executed stage; truncated at the failing stage.
    pub stages: Vec<StageRecord>,
    pub final_metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Legality {
    Unevaluated,
    Pass,
    IllegalCode,
    RuntimeFailure,
    Timeout,
    NonFinite,
    TargetMissed,
}

impl Legality {
    pub fn is_pass(self) -> bool {
        self == Legality::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Legality::Unevaluated => "Unevaluated",
            Legality::Pass => "Pass",
            Legality::IllegalCode => "IllegalCode",
            Legality::RuntimeFailure => "RuntimeFailure",
            Legality::Timeout => "Timeout",
            Legality::NonFinite => "NonFinite",
            Legality::TargetMissed => "TargetMissed",
        }
    }
}

impl fmt::Display for Legality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub operator: Option<OperatorKind>,
    pub parent_ids: Vec<u64>,
    pub generation_index: usize,
}

/// N component heuristics assembled into one evaluable algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmIndividual {
    pub id: u64,
    pub components: Vec<MultiStageHeuristic>,
    /// Fitness, higher is better. Present iff `legality` is `Pass`.
    pub score: Option<f64>,
    pub legality: Legality,
    #[serde(default)]
    pub legality_detail: String,
    pub info: ExecutionInfo,
    pub lineage: Lineage,
}

impl AlgorithmIndividual {
    pub fn stage_count(&self) -> usize {
        self.components.first().map_or(0, |c| c.stage_count())
    }

    pub fn component(&self, id: &str) -> Option<&MultiStageHeuristic> {
        self.components.iter().find(|c| c.component_id == id)
    }

    /// Records a verdict. Keeps the score/legality pairing consistent: a
    /// non-finite score can never be recorded as passing.
    pub fn set_outcome(&mut self, legality: Legality, score: Option<f64>, detail: impl Into<String>) {
        let detail = detail.into();
        match (legality, score) {
            (Legality::Pass, Some(s)) if s.is_finite() => {
                self.legality = Legality::Pass;
                self.score = Some(s);
                self.legality_detail = detail;
            }
            (Legality::Pass, _) => {
                self.legality = Legality::NonFinite;
                self.score = None;
                self.legality_detail = format!("non-finite score {score:?}");
            }
            (other, _) => {
                self.legality = other;
                self.score = None;
                self.legality_detail = detail;
            }
        }
    }
}

/// Builds an unscored individual from one heuristic per component slot.
pub fn assemble_algorithm(
    components: Vec<MultiStageHeuristic>,
) -> Result<AlgorithmIndividual, PopulationError> {
    let first = components.first().ok_or(PopulationError::NoComponents)?;
    let expected = first.stage_count();
    let mut seen = HashSet::new();
    for component in &components {
        if !seen.insert(component.component_id.as_str()) {
            return Err(PopulationError::DuplicateComponent(component.component_id.clone()));
        }
        if component.stage_count() != expected {
            return Err(PopulationError::StageCountMismatch {
                component: component.component_id.clone(),
                expected,
                found: component.stage_count(),
            });
        }
        component.validate()?;
    }
    Ok(AlgorithmIndividual {
        id: 0,
        components,
        score: None,
        legality: Legality::Unevaluated,
        legality_detail: String::new(),
        info: ExecutionInfo::default(),
        lineage: Lineage::default(),
    })
}

/// Top-M pool of passing individuals, sorted by score descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    capacity: usize,
    entries: Vec<AlgorithmIndividual>,
}

impl Population {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "population capacity must be positive");
        Self {
            capacity,
            entries: Vec::new(),
        }
    }

    /// Rebuilds a population from stored entries, re-applying the ordering
    /// and capacity rules.
    pub fn from_entries(capacity: usize, entries: Vec<AlgorithmIndividual>) -> Self {
        update_population(Self::new(capacity), entries)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[AlgorithmIndividual] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&AlgorithmIndividual> {
        self.entries.first()
    }

    /// Selection probability of each entry, in rank order.
    pub fn selection_probabilities(&self) -> Vec<f64> {
        rank_weights(self.entries.len(), self.capacity)
    }
}

/// Unnormalised weights `1/(r + M)` for ranks `1..=n`, normalised to sum to one.
pub fn rank_weights(n: usize, capacity: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|r| 1.0 / (r + capacity) as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Entries paired with their 1-based rank.
pub fn rank_entries(population: &Population) -> Vec<(usize, &AlgorithmIndividual)> {
    population
        .entries
        .iter()
        .enumerate()
        .map(|(i, ind)| (i + 1, ind))
        .collect()
}

/// Draws `k` parents independently with replacement, rank `r` having
/// probability proportional to `1/(r + M)`.
pub fn select_parents<'a, R: Rng + ?Sized>(
    population: &'a Population,
    k: usize,
    rng: &mut R,
) -> Result<Vec<&'a AlgorithmIndividual>, PopulationError> {
    if population.is_empty() {
        return Err(PopulationError::Empty);
    }
    if k == 0 {
        return Err(PopulationError::ZeroSelection);
    }
    let weights = population.selection_probabilities();
    let dist = WeightedIndex::new(&weights).expect("rank weights are positive and finite");
    Ok((0..k).map(|_| &population.entries[dist.sample(rng)]).collect())
}

/// Keeps the top-M of incumbents plus passing offspring. The sort is stable,
/// so ties keep incumbents first and offspring in arrival order.
pub fn update_population(
    mut population: Population,
    offspring: impl IntoIterator<Item = AlgorithmIndividual>,
) -> Population {
    population.entries.extend(
        offspring
            .into_iter()
            .filter(|ind| ind.legality.is_pass() && ind.score.is_some_and(f64::is_finite)),
    );
    population.entries.sort_by(|a, b| {
        let (sa, sb) = (a.score.unwrap_or(f64::NEG_INFINITY), b.score.unwrap_or(f64::NEG_INFINITY));
        sb.partial_cmp(&sa).expect("population scores are finite")
    });
    population.entries.truncate(population.capacity);
    population
}
