//! Fan-out of extraction tasks over local threads or remote workers.
//!
//! Results stream into an append-only output directory:
//! `samples.jsonl` (one sample per line) and `failures.jsonl`. Both files
//! double as the recovery log: a restarted job skips every path already
//! recorded in them.

mod coordinator;
mod protocol;
mod worker;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::extract::ExtractorRegistry;
use crate::sample::{serialize_sample, ExtractionMode, MultimodalSample};

pub use coordinator::{start_coordinator, CoordinatorConfig, CoordinatorHandle};
pub use protocol::{read_frame, write_frame, Envelope, Message, PROTOCOL_VERSION};
pub use worker::{run_worker, WorkerConfig, WorkerReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: u64,
    pub path: PathBuf,
    pub mode: ExtractionMode,
    #[serde(default)]
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskOutcome {
    Ok { sample: MultimodalSample },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: u64,
    pub path: PathBuf,
    pub worker_id: String,
    pub duration_ms: f64,
    #[serde(flatten)]
    pub outcome: TaskOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct JobConfig {
    pub workers_per_node: usize,
    /// Tasks handed out per lease request.
    pub batch_size: usize,
    /// Re-dispatches allowed after a lost lease or a crashed executor.
    pub max_retries: u32,
    pub heartbeat_ms: u64,
    /// Missed heartbeat intervals before a lease is reassigned.
    pub lease_timeout_intervals: u32,
    pub mode: ExtractionMode,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            workers_per_node: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            batch_size: 1,
            max_retries: 2,
            heartbeat_ms: 2000,
            lease_timeout_intervals: 3,
            mode: ExtractionMode::Default,
        }
    }
}

impl JobConfig {
    pub fn heartbeat(&self) -> Duration {
        Duration::from_millis(self.heartbeat_ms.max(1))
    }

    pub fn lease_timeout(&self) -> Duration {
        self.heartbeat() * self.lease_timeout_intervals.max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
    /// Tasks already present in the output log when the job started.
    pub recovered: usize,
    pub elapsed_ms: f64,
    pub per_worker: BTreeMap<String, usize>,
}

/// Turns a task into a sample.
pub trait TaskExecutor: Send + Sync {
    fn execute(&self, task: &Task) -> Result<MultimodalSample, String>;
}

pub struct ExtractExecutor {
    pub registry: ExtractorRegistry,
}

impl TaskExecutor for ExtractExecutor {
    fn execute(&self, task: &Task) -> Result<MultimodalSample, String> {
        self.registry.extract(&task.path, task.mode).map_err(|e| e.to_string())
    }
}

/// CPU-bound stand-in for extraction: `rounds` chained SHA-256 hashes of
/// the path. Never touches the filesystem.
#[derive(Debug, Clone, Copy)]
pub struct SpinExecutor {
    pub rounds: u32,
}

impl TaskExecutor for SpinExecutor {
    fn execute(&self, task: &Task) -> Result<MultimodalSample, String> {
        let mut digest = Sha256::digest(task.path.to_string_lossy().as_bytes());
        for _ in 0..self.rounds {
            digest = Sha256::digest(digest);
        }
        let mut s = MultimodalSample::new(hex::encode(digest), Vec::new());
        s.source_path = task.path.to_string_lossy().into_owned();
        s.doc_id = crate::sample::derive_doc_id(task.path.to_string_lossy().as_bytes(), task.mode);
        Ok(s)
    }
}

/// Runs the executor, turning panics into errors so one bad file cannot
/// take a worker down.
pub(crate) fn execute_guarded(exec: &dyn TaskExecutor, task: &Task, worker_id: &str) -> TaskResult {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(|| exec.execute(task))) {
        Ok(Ok(sample)) => TaskOutcome::Ok { sample },
        Ok(Err(error)) => TaskOutcome::Failed { error },
        Err(_) => TaskOutcome::Failed { error: "extractor panicked".into() },
    };
    TaskResult {
        task_id: task.task_id,
        path: task.path.clone(),
        worker_id: worker_id.to_string(),
        duration_ms: start.elapsed().as_secs_f64() * 1e3,
        outcome,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FailureRecord {
    path: PathBuf,
    error: String,
}

/// Append-only job output with crash recovery.
pub struct OutputLog {
    samples: File,
    failures: File,
    dir: PathBuf,
}

/// Reads complete JSONL records, truncating a torn final line left by a
/// crash mid-write.
fn recover_lines(path: &Path) -> io::Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut good = Vec::new();
    let mut valid_len = 0u64;
    for line in reader.split(b'\n') {
        let line = line?;
        match std::str::from_utf8(&line).ok().filter(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()) {
            Some(l) => {
                valid_len += line.len() as u64 + 1;
                good.push(l.to_string());
            }
            None => break,
        }
    }
    let actual = fs::metadata(path)?.len();
    if actual != valid_len {
        OpenOptions::new().write(true).open(path)?.set_len(valid_len.min(actual))?;
    }
    Ok(good)
}

impl OutputLog {
    /// Opens (or creates) the log in `dir`; returns it with the set of
    /// source paths already recorded.
    pub fn open(dir: &Path) -> io::Result<(Self, BTreeSet<PathBuf>)> {
        fs::create_dir_all(dir)?;
        let sp = dir.join("samples.jsonl");
        let fp = dir.join("failures.jsonl");
        let mut done = BTreeSet::new();
        for line in recover_lines(&sp)? {
            if let Ok(s) = serde_json::from_str::<MultimodalSample>(&line) {
                done.insert(PathBuf::from(s.source_path));
            }
        }
        for line in recover_lines(&fp)? {
            if let Ok(f) = serde_json::from_str::<FailureRecord>(&line) {
                done.insert(f.path);
            }
        }
        let open = |p: &Path| OpenOptions::new().create(true).append(true).open(p);
        Ok((Self { samples: open(&sp)?, failures: open(&fp)?, dir: dir.to_path_buf() }, done))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Appends one record and flushes it to the OS before returning.
    pub fn record(&mut self, result: &TaskResult) -> io::Result<()> {
        match &result.outcome {
            TaskOutcome::Ok { sample } => {
                let mut line = serialize_sample(sample);
                line.push(b'\n');
                self.samples.write_all(&line)?;
                self.samples.sync_data()
            }
            TaskOutcome::Failed { error } => {
                let rec = FailureRecord { path: result.path.clone(), error: error.clone() };
                let mut line = serde_json::to_vec(&rec).map_err(io::Error::from)?;
                line.push(b'\n');
                self.failures.write_all(&line)?;
                self.failures.sync_data()
            }
        }
    }
}

/// Builds tasks for `paths`, numbering them in order.
pub fn make_tasks(paths: &[PathBuf], mode: ExtractionMode) -> Vec<Task> {
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| Task { task_id: i as u64, path: p.clone(), mode, attempt: 0 })
        .collect()
}

/// Expands inputs into a sorted, de-duplicated file list. Directories are
/// walked recursively; arguments containing `*`, `?` or `[` are globbed.
pub fn collect_files(inputs: &[PathBuf]) -> io::Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut BTreeSet<PathBuf>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.insert(path);
            }
        }
        Ok(())
    }
    let mut out = BTreeSet::new();
    for input in inputs {
        let s = input.to_string_lossy();
        if s.contains(['*', '?', '[']) {
            let paths = glob::glob(&s).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            out.extend(paths.filter_map(Result::ok).filter(|p| p.is_file()));
        } else if input.is_dir() {
            walk(input, &mut out)?;
        } else if input.exists() {
            out.insert(input.clone());
        } else {
            return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} does not exist", input.display())));
        }
    }
    Ok(out.into_iter().collect())
}

/// Single-node pool: `workers` threads pull tasks from a shared queue and
/// results are handed to `on_result` on the calling thread as they finish.
pub fn run_local(
    tasks: Vec<Task>,
    executor: Arc<dyn TaskExecutor>,
    workers: usize,
    mut on_result: impl FnMut(&TaskResult),
) -> JobSummary {
    let start = Instant::now();
    let total = tasks.len();
    let (task_tx, task_rx) = crossbeam_channel::unbounded::<Task>();
    let (res_tx, res_rx) = crossbeam_channel::unbounded::<TaskResult>();
    for t in tasks {
        task_tx.send(t).expect("receiver alive");
    }
    drop(task_tx);

    let handles: Vec<_> = (0..workers.max(1))
        .map(|i| {
            let rx = task_rx.clone();
            let tx = res_tx.clone();
            let exec = Arc::clone(&executor);
            thread::spawn(move || {
                let id = format!("local-{i}");
                for task in rx.iter() {
                    if tx.send(execute_guarded(exec.as_ref(), &task, &id)).is_err() {
                        break;
                    }
                }
            })
        })
        .collect();
    drop(res_tx);

    let mut summary = JobSummary { total, ..JobSummary::default() };
    for r in res_rx.iter() {
        match r.outcome {
            TaskOutcome::Ok { .. } => summary.ok += 1,
            TaskOutcome::Failed { .. } => summary.failed += 1,
        }
        *summary.per_worker.entry(r.worker_id.clone()).or_default() += 1;
        on_result(&r);
    }
    for h in handles {
        let _ = h.join();
    }
    summary.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    summary
}

/// Local job with a recoverable output directory: paths already in the log
/// are skipped, the rest are extracted and appended.
pub fn run_local_job(
    paths: &[PathBuf],
    executor: Arc<dyn TaskExecutor>,
    config: &JobConfig,
    out_dir: &Path,
) -> io::Result<JobSummary> {
    let (mut log, done) = OutputLog::open(out_dir)?;
    let todo: Vec<PathBuf> = paths.iter().filter(|p| !done.contains(*p)).cloned().collect();
    let recovered = paths.len() - todo.len();
    let mut write_err = None;
    let mut summary = run_local(make_tasks(&todo, config.mode), executor, config.workers_per_node, |r| {
        if write_err.is_none() {
            if let Err(e) = log.record(r) {
                write_err = Some(e);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    summary.total = paths.len();
    summary.recovered = recovered;
    Ok(summary)
}
