//! Run outputs: convergence CSV, summary JSON, best-individual sources and
//! the full run record. Every call rewrites the files from scratch, so
//! emitting the same report twice gives byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AbortInfo, RunReport};
use crate::persist::{save_run, PersistError};
use crate::population::AlgorithmIndividual;

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUN_FILE: &str = "run.json";
pub const BEST_DIR: &str = "best";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub domain_id: String,
    pub seed: u64,
    pub evaluations: usize,
    pub initialization_evaluations: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub best_score: Option<f64>,
    pub best_individual_id: Option<u64>,
    pub operator_counts: BTreeMap<String, usize>,
    pub generations_completed: usize,
    pub aborted: Option<AbortInfo>,
}

pub fn summarize(report: &RunReport) -> Summary {
    Summary {
        domain_id: report.config.domain_id.clone(),
        seed: report.config.seed,
        evaluations: report.records.len(),
        initialization_evaluations: report.initialization.len(),
        passed: report.pass_rate.passed,
        pass_rate: report.pass_rate.rate,
        best_score: report.best_individual.as_ref().and_then(|b| b.score),
        best_individual_id: report.best_individual.as_ref().map(|b| b.id),
        operator_counts: report.operator_counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        generations_completed: report.generations_completed,
        aborted: report.aborted.clone(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per budgeted evaluation.
pub fn convergence_csv(report: &RunReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["evaluation_index", "generation", "operator", "individual_id", "legality", "score", "best_so_far"])?;
    for r in &report.records {
        w.write_record([
            r.evaluation_index.to_string(),
            r.generation.to_string(),
            r.operator.to_string(),
            r.individual_id.to_string(),
            r.legality.to_string(),
            opt(r.score),
            opt(r.best_so_far),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Full source of one component, stage by stage, with each stage goal.
pub fn component_listing(ind: &AlgorithmIndividual, component_id: &str) -> Option<String> {
    let c = ind.component(component_id)?;
    let mut out = format!("# individual {} component {}\n", ind.id, c.component_id);
    if let Some(score) = ind.score {
        let _ = writeln!(out, "# score {score}");
    }
    if let Some(d) = &c.description {
        for line in d.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for s in &c.stages {
        let _ = writeln!(out, "\n# --- stage {} ---", s.stage_index);
        for line in s.goal_text.lines() {
            let _ = writeln!(out, "# goal: {line}");
        }
        out.push_str(s.source.trim_end());
        out.push('\n');
    }
    Some(out)
}

fn write(path: PathBuf, text: &str) -> Result<(), ReportError> {
    std::fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
}

pub fn emit_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<(), ReportError> {
    let out = out_dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    write(out.join(CONVERGENCE_FILE), &convergence_csv(report)?)?;
    let mut summary = serde_json::to_string_pretty(&summarize(report)).expect("summary serializes");
    summary.push('\n');
    write(out.join(SUMMARY_FILE), &summary)?;
    save_run(report, out.join(RUN_FILE))?;

    let best_dir = out.join(BEST_DIR);
    if best_dir.exists() {
        std::fs::remove_dir_all(&best_dir).map_err(io(&best_dir))?;
    }
    if let Some(best) = &report.best_individual {
        std::fs::create_dir_all(&best_dir).map_err(io(&best_dir))?;
        for c in &best.components {
            let listing = component_listing(best, &c.component_id).expect("component exists");
            write(best_dir.join(format!("{}.py", c.component_id)), &listing)?;
        }
    }
    Ok(())
}
