//! Out-of-process execution of generated candidates.
//!
//! Each candidate runs as a long-lived child process that speaks a
//! newline-delimited JSON protocol: a `hello` handshake on startup, then
//! strictly alternating request/response lines, and `bye` on shutdown.
//! Every read is bounded by a timeout and every failure mode maps to a
//! [`LegalityVerdict`]; the child is killed on any protocol error.
//!
//! Isolation is process-level only. Candidates are not jailed.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::population::Legality;

/// Source of the bundled Python runtime that hosts candidates.
pub const PYTHON_RUNTIME: &str = include_str!("../runtime/candidate_runtime.py");

const STDERR_CAP: usize = 64 * 1024;

static LIVE_CANDIDATES: AtomicUsize = AtomicUsize::new(0);

/// Number of candidate processes spawned by this process and not yet reaped.
pub fn live_candidate_count() -> usize {
    LIVE_CANDIDATES.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalityVerdict {
    pub tag: Legality,
    pub detail: String,
}

impl LegalityVerdict {
    pub fn new(tag: Legality, detail: impl Into<String>) -> Self {
        Self {
            tag,
            detail: detail.into(),
        }
    }

    pub fn pass() -> Self {
        Self::new(Legality::Pass, "")
    }
}

impl std::fmt::Display for LegalityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.tag)
        } else {
            write!(f, "{}: {}", self.tag, self.detail)
        }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    /// The runtime itself is misconfigured (missing interpreter, unwritable
    /// temp dir). Not attributable to the candidate.
    #[error("sandbox configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Verdict(LegalityVerdict),
}

/// Interpreter invocation for candidates. `{source}`, `{component}` and
/// `{entry}` in `args` are replaced at spawn time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl RuntimeCommand {
    /// `python3` hosting the bundled runtime.
    pub fn python() -> Self {
        Self::python_with("python3")
    }

    pub fn python_with(interpreter: &str) -> Self {
        Self {
            program: interpreter.to_string(),
            args: vec![
                "-u".into(),
                "-c".into(),
                PYTHON_RUNTIME.into(),
                "{source}".into(),
                "{component}".into(),
                "{entry}".into(),
            ],
        }
    }
}

impl Default for RuntimeCommand {
    fn default() -> Self {
        Self::python()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub call_timeout_ms: u64,
    pub startup_timeout_ms: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            call_timeout_ms: 2_000,
            startup_timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleState {
    Starting,
    Ready,
    Failed,
    Closed,
}

/// Request messages of the wire protocol. Serialized with `op` first and
/// fields in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CandidateRequest {
    LearningRate {
        step_num: i64,
        log_objective: f64,
        log_objective_prev: f64,
        overflow: f64,
        log_lambda: f64,
        learning_rate_prev: f64,
        log_gradient_norm: f64,
    },
    Steps {
        subproblem_index: i64,
        overflow: f64,
        log_lambda: f64,
    },
    Utility {
        stage_index: i64,
        iteration: i64,
        best_f: f64,
        points: Vec<PosteriorPoint>,
    },
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPoint {
    pub mu: f64,
    pub sigma: f64,
}

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    stdout_lines: Receiver<String>,
    stderr_buf: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
    reaped: bool,
}

impl ChildIo {
    fn stderr_text(&self) -> String {
        self.stderr_buf.lock().map(|s| s.clone()).unwrap_or_default()
    }

    fn kill(&mut self) {
        if self.reaped {
            return;
        }
        let _ = self.child.kill();
        self.reap();
    }

    fn reap(&mut self) {
        if self.reaped {
            return;
        }
        let _ = self.child.wait();
        if let Some(t) = self.stderr_thread.take() {
            let _ = t.join();
        }
        self.reaped = true;
        LIVE_CANDIDATES.fetch_sub(1, Ordering::SeqCst);
    }

    /// Waits briefly for a voluntary exit, then kills.
    fn finish(&mut self, grace: Duration) {
        if self.reaped {
            return;
        }
        let deadline = std::time::Instant::now() + grace;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if std::time::Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(2))
                }
                _ => {
                    let _ = self.child.kill();
                    break;
                }
            }
        }
        self.reap();
    }
}

/// One running candidate. Owned by a single evaluation; killed on drop.
pub struct CandidateHandle {
    io: ChildIo,
    pid: u32,
    component_id: String,
    limits: SandboxLimits,
    state: HandleState,
    _workdir: tempfile::TempDir,
}

impl std::fmt::Debug for CandidateHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CandidateHandle")
            .field("pid", &self.pid)
            .field("component_id", &self.component_id)
            .field("state", &self.state)
            .finish()
    }
}

/// Writes `source` to a temp file and starts it under `runtime`, waiting for
/// the handshake.
pub fn spawn_candidate(
    source: &str,
    runtime: &RuntimeCommand,
    component_id: &str,
    entry_point: &str,
    limits: SandboxLimits,
) -> Result<CandidateHandle, SandboxError> {
    let workdir = tempfile::Builder::new()
        .prefix("evostage-cand-")
        .tempdir()
        .map_err(|e| SandboxError::Config(format!("cannot create temp dir: {e}")))?;
    let source_path: PathBuf = workdir.path().join("candidate.py");
    std::fs::write(&source_path, source)
        .map_err(|e| SandboxError::Config(format!("cannot write candidate source: {e}")))?;
    let source_str = source_path.to_string_lossy().into_owned();

    let args: Vec<String> = runtime
        .args
        .iter()
        .map(|a| {
            a.replace("{source}", &source_str)
                .replace("{component}", component_id)
                .replace("{entry}", entry_point)
        })
        .collect();

    let mut child = Command::new(&runtime.program)
        .args(&args)
        .current_dir(workdir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SandboxError::Config(format!("cannot start '{}': {e}", runtime.program)))?;
    LIVE_CANDIDATES.fetch_add(1, Ordering::SeqCst);

    let pid = child.id();
    let stdin = child.stdin.take().expect("stdin piped");
    let stdout = child.stdout.take().expect("stdout piped");
    let mut stderr = child.stderr.take().expect("stderr piped");

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(stdout);
        for line in reader.lines() {
            match line {
                Ok(l) => {
                    if tx.send(l).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });

    let stderr_buf = Arc::new(Mutex::new(String::new()));
    let sink = Arc::clone(&stderr_buf);
    let stderr_thread = std::thread::spawn(move || {
        let mut chunk = [0u8; 4096];
        loop {
            match stderr.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if let Ok(mut buf) = sink.lock() {
                        if buf.len() < STDERR_CAP {
                            buf.push_str(&String::from_utf8_lossy(&chunk[..n]));
                        }
                    }
                }
            }
        }
    });

    let mut handle = CandidateHandle {
        io: ChildIo {
            child,
            stdin,
            stdout_lines: rx,
            stderr_buf,
            stderr_thread: Some(stderr_thread),
            reaped: false,
        },
        pid,
        component_id: component_id.to_string(),
        limits,
        state: HandleState::Starting,
        _workdir: workdir,
    };

    let startup = Duration::from_millis(limits.startup_timeout_ms);
    match handle.io.stdout_lines.recv_timeout(startup) {
        Ok(line) => {
            let expected = HelloMessage {
                op: "hello".into(),
                component: component_id.to_string(),
            };
            match serde_json::from_str::<HelloMessage>(&line) {
                Ok(hello) if hello == expected => {
                    handle.state = HandleState::Ready;
                    Ok(handle)
                }
                _ => Err(handle.fail_spawn(format!("bad handshake line: {line}"))),
            }
        }
        Err(RecvTimeoutError::Timeout) => Err(handle.fail_spawn(format!(
            "no handshake within {} ms",
            limits.startup_timeout_ms
        ))),
        Err(RecvTimeoutError::Disconnected) => {
            handle.io.reap();
            handle.state = HandleState::Failed;
            let stderr = handle.io.stderr_text();
            tracing::debug!(component = component_id, %stderr, "candidate failed to load");
            Err(SandboxError::Verdict(LegalityVerdict::new(
                Legality::IllegalCode,
                format!("candidate failed to load: {}", stderr.trim()),
            )))
        }
    }
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct HelloMessage {
    op: String,
    component: String,
}

impl CandidateHandle {
    pub fn pid(&self) -> u32 {
        self.pid
    }

    pub fn component_id(&self) -> &str {
        &self.component_id
    }

    pub fn state(&self) -> HandleState {
        self.state
    }

    pub fn stderr_text(&self) -> String {
        self.io.stderr_text()
    }

    fn fail_spawn(&mut self, detail: String) -> SandboxError {
        self.io.kill();
        self.state = HandleState::Failed;
        SandboxError::Verdict(LegalityVerdict::new(Legality::IllegalCode, detail))
    }

    fn fail(&mut self, tag: Legality, detail: String) -> LegalityVerdict {
        self.io.kill();
        self.state = HandleState::Failed;
        let stderr = self.io.stderr_text();
        if !stderr.trim().is_empty() {
            tracing::debug!(component = %self.component_id, %stderr, "candidate stderr");
        }
        let detail = if stderr.trim().is_empty() {
            detail
        } else {
            format!("{detail}; stderr: {}", last_lines(&stderr, 6))
        };
        LegalityVerdict::new(tag, detail)
    }

    /// Sends one request and reads one response line within the call timeout.
    pub fn call(&mut self, request: &CandidateRequest) -> Result<Map<String, Value>, LegalityVerdict> {
        if self.state != HandleState::Ready {
            return Err(LegalityVerdict::new(
                Legality::RuntimeFailure,
                format!("candidate not ready ({:?})", self.state),
            ));
        }
        let line = serde_json::to_string(request).expect("requests serialize");
        if writeln!(self.io.stdin, "{line}").and_then(|_| self.io.stdin.flush()).is_err() {
            return Err(self.fail(Legality::RuntimeFailure, "candidate closed its input".into()));
        }
        let timeout = Duration::from_millis(self.limits.call_timeout_ms);
        let reply = match self.io.stdout_lines.recv_timeout(timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                return Err(self.fail(
                    Legality::Timeout,
                    format!("no response within {} ms", self.limits.call_timeout_ms),
                ))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.io.reap();
                return Err(self.fail(Legality::RuntimeFailure, "candidate exited mid-call".into()));
            }
        };
        match parse_response(&reply) {
            Ok(map) => Ok(map),
            Err(verdict) => Err(self.fail(verdict.tag, verdict.detail)),
        }
    }

    /// Sends `bye` and reaps the child.
    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if self.io.reaped {
            self.state = HandleState::Closed;
            return;
        }
        if self.state == HandleState::Ready {
            let bye = serde_json::to_string(&CandidateRequest::Bye).expect("bye serializes");
            let _ = writeln!(self.io.stdin, "{bye}").and_then(|_| self.io.stdin.flush());
            self.io.finish(Duration::from_millis(500));
        } else {
            self.io.kill();
        }
        self.state = HandleState::Closed;
    }

    pub fn learning_rate(&mut self, request: &CandidateRequest) -> Result<f64, LegalityVerdict> {
        let map = self.call(request)?;
        self.number_field(&map, "learning_rate")
    }

    pub fn steps(&mut self, request: &CandidateRequest) -> Result<i64, LegalityVerdict> {
        let map = self.call(request)?;
        let value = self.number_field(&map, "steps")?;
        Ok(value.round() as i64)
    }

    pub fn utility(&mut self, request: &CandidateRequest) -> Result<Vec<f64>, LegalityVerdict> {
        let expected = match request {
            CandidateRequest::Utility { points, .. } => points.len(),
            _ => 0,
        };
        let map = self.call(request)?;
        let values = match map.get("utility").and_then(Value::as_array) {
            Some(values) => values,
            None => {
                return Err(self.fail(Legality::RuntimeFailure, "response lacks 'utility' array".into()))
            }
        };
        if values.len() != expected {
            return Err(self.fail(
                Legality::RuntimeFailure,
                format!("utility length {} != {expected} points", values.len()),
            ));
        }
        let mut out = Vec::with_capacity(values.len());
        for v in values {
            match v.as_f64() {
                Some(x) => out.push(x),
                None => return Err(self.fail(Legality::RuntimeFailure, format!("non-numeric utility {v}"))),
            }
        }
        Ok(out)
    }

    fn number_field(&mut self, map: &Map<String, Value>, key: &str) -> Result<f64, LegalityVerdict> {
        match map.get(key).and_then(Value::as_f64) {
            Some(x) => Ok(x),
            None => Err(self.fail(
                Legality::RuntimeFailure,
                format!("response lacks numeric '{key}'"),
            )),
        }
    }
}

impl Drop for CandidateHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn last_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.trim().lines().collect();
    lines[lines.len().saturating_sub(n)..].join(" | ")
}

/// Parses one response line. Non-finite literals (`NaN`, `Infinity`, or a
/// number overflowing f64) yield `NonFinite`; anything else unparsable is a
/// `RuntimeFailure`.
fn parse_response(line: &str) -> Result<Map<String, Value>, LegalityVerdict> {
    if contains_non_finite_literal(line) {
        return Err(LegalityVerdict::new(
            Legality::NonFinite,
            format!("non-finite value in response: {}", truncate(line, 200)),
        ));
    }
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(LegalityVerdict::new(
            Legality::RuntimeFailure,
            format!("response is not an object: {}", truncate(&other.to_string(), 200)),
        )),
        Err(e) if e.to_string().contains("out of range") => Err(LegalityVerdict::new(
            Legality::NonFinite,
            format!("number out of range: {}", truncate(line, 200)),
        )),
        Err(e) => Err(LegalityVerdict::new(
            Legality::RuntimeFailure,
            format!("malformed response ({e}): {}", truncate(line, 200)),
        )),
    }
}

fn contains_non_finite_literal(line: &str) -> bool {
    // Only bare tokens count; the words may legitimately appear inside strings.
    let mut in_string = false;
    let mut escaped = false;
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
        } else if b == b'"' {
            in_string = true;
        } else if line[i..].starts_with("NaN") || line[i..].starts_with("Infinity") {
            return true;
        }
        i += 1;
    }
    false
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// How a finished (or failed) run ended, before domain rules are applied.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecutionOutcome {
    Failed(LegalityVerdict),
    Completed {
        objective: f64,
        overflow: Option<f64>,
    },
}

/// Domain-specific pass conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainRules {
    /// Legal code is sufficient.
    LegalCode,
    /// Legal code that also meets a target constraint with a bounded objective.
    Target { target_overflow: f64, objective_cap: f64 },
}

pub fn classify_legality(outcome: &ExecutionOutcome, rules: DomainRules) -> LegalityVerdict {
    match outcome {
        ExecutionOutcome::Failed(verdict) => verdict.clone(),
        ExecutionOutcome::Completed { objective, overflow } => {
            if !objective.is_finite() || overflow.is_some_and(|o| !o.is_finite()) {
                return LegalityVerdict::new(Legality::NonFinite, "non-finite final metrics");
            }
            match rules {
                DomainRules::LegalCode => LegalityVerdict::pass(),
                DomainRules::Target {
                    target_overflow,
                    objective_cap,
                } => {
                    let overflow = overflow.unwrap_or(f64::INFINITY);
                    if overflow > target_overflow {
                        LegalityVerdict::new(
                            Legality::TargetMissed,
                            format!("overflow {overflow:.4} > target {target_overflow:.4}"),
                        )
                    } else if *objective >= objective_cap {
                        LegalityVerdict::new(
                            Legality::TargetMissed,
                            format!("objective {objective:.4e} not below cap {objective_cap:.1e}"),
                        )
                    } else {
                        LegalityVerdict::pass()
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassRate {
    pub rate: f64,
    pub passed: usize,
    pub total: usize,
    /// Set when there were no verdicts; `rate` is then 0 by definition.
    pub empty: bool,
}

pub fn pass_rate<I>(verdicts: I) -> PassRate
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Legality>,
{
    use std::borrow::Borrow;
    let (mut passed, mut total) = (0usize, 0usize);
    for v in verdicts {
        total += 1;
        if v.borrow().is_pass() {
            passed += 1;
        }
    }
    if total == 0 {
        tracing::warn!("pass rate requested over zero verdicts");
        return PassRate {
            rate: 0.0,
            passed: 0,
            total: 0,
            empty: true,
        };
    }
    PassRate {
        rate: passed as f64 / total as f64,
        passed,
        total,
        empty: false,
    }
}
