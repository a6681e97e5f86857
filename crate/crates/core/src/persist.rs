//! Versioned JSON persistence for populations and finished runs.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RunConfig, RunReport};
use crate::population::Population;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON at byte {offset}: {message}")]
    Syntax {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u64,
        expected: u32,
    },
    #[error("{path}: {message}")]
    Structure { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedPopulation {
    pub schema_version: u32,
    pub config: RunConfig,
    /// Last completed generation; 0 right after initialization.
    pub generation: usize,
    pub population: Population,
}

impl PersistedPopulation {
    pub fn new(config: RunConfig, generation: usize, population: Population) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            generation,
            population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedRun {
    pub schema_version: u32,
    pub report: RunReport,
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PersistError> {
    let io = |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = serde_json::to_string_pretty(value).expect("persisted types serialize");
    text.push('\n');
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    std::fs::write(tmp.path(), text).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let text = std::fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| PersistError::Syntax {
        path: path.to_path_buf(),
        offset: byte_offset(&text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let found = value.get("schema_version").and_then(serde_json::Value::as_u64).ok_or_else(|| {
        PersistError::Structure {
            path: path.to_path_buf(),
            message: "missing schema_version".into(),
        }
    })?;
    if found != u64::from(SCHEMA_VERSION) {
        return Err(PersistError::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| PersistError::Structure {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Atomically replaces `path`.
pub fn save_population(population: &PersistedPopulation, path: impl AsRef<Path>) -> Result<(), PersistError> {
    write_json(population, path.as_ref())
}

pub fn load_population(path: impl AsRef<Path>) -> Result<PersistedPopulation, PersistError> {
    read_versioned(path.as_ref())
}

pub fn save_run(report: &RunReport, path: impl AsRef<Path>) -> Result<(), PersistError> {
    write_json(
        &PersistedRun {
            schema_version: SCHEMA_VERSION,
            report: report.clone(),
        },
        path.as_ref(),
    )
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RunReport, PersistError> {
    read_versioned::<PersistedRun>(path.as_ref()).map(|r| r.report)
}
