use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use mmore_core::dispatch::{
    make_tasks, run_worker, start_coordinator, CoordinatorConfig, JobConfig, SpinExecutor, Task, TaskExecutor,
    WorkerConfig,
};
use mmore_core::{ExtractionMode, MultimodalSample};

fn job() -> JobConfig {
    JobConfig { heartbeat_ms: 40, batch_size: 1, mode: ExtractionMode::Fast, ..JobConfig::default() }
}

fn paths(n: usize) -> Vec<PathBuf> {
    (0..n).map(|i| PathBuf::from(format!("/virtual/doc{i:03}.txt"))).collect()
}

fn sample_counts(out: &Path) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for line in fs::read_to_string(out.join("samples.jsonl")).unwrap().lines() {
        let s: MultimodalSample = serde_json::from_str(line).unwrap();
        *counts.entry(s.source_path).or_insert(0) += 1;
    }
    counts
}

fn worker_cfg(id: &str, kill: Option<Arc<AtomicBool>>) -> WorkerConfig {
    WorkerConfig {
        heartbeat: Duration::from_millis(40),
        reconnect_timeout: Duration::from_secs(5),
        kill_switch: kill,
        ..WorkerConfig::new(id)
    }
}

/// Flips the kill switch while executing its `after`-th task, so that task's
/// result is never delivered.
struct DyingExecutor {
    inner: SpinExecutor,
    seen: AtomicUsize,
    after: usize,
    switch: Arc<AtomicBool>,
}

impl TaskExecutor for DyingExecutor {
    fn execute(&self, task: &Task) -> Result<MultimodalSample, String> {
        if self.seen.fetch_add(1, Ordering::SeqCst) + 1 >= self.after {
            self.switch.store(true, Ordering::SeqCst);
        }
        self.inner.execute(task)
    }
}

#[test]
fn three_workers_finish_every_task_once() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = make_tasks(&paths(30), ExtractionMode::Fast);
    let coord = start_coordinator(
        tasks,
        CoordinatorConfig { bind: "127.0.0.1:0".into(), out_dir: dir.path().to_path_buf(), job: job() },
    )
    .unwrap();
    let addr = coord.addr().to_string();
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let addr = addr.clone();
            thread::spawn(move || run_worker(&addr, Arc::new(SpinExecutor { rounds: 200 }), worker_cfg(&format!("w{i}"), None)))
        })
        .collect();
    let summary = coord.wait(Duration::from_secs(30)).expect("job finished");
    for h in handles {
        h.join().unwrap().unwrap();
    }
    assert_eq!((summary.ok, summary.failed), (30, 0));
    let counts = sample_counts(dir.path());
    assert_eq!(counts.len(), 30);
    assert!(counts.values().all(|&c| c == 1));
}

#[test]
fn killed_worker_lease_is_reassigned() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = make_tasks(&paths(20), ExtractionMode::Fast);
    let coord = start_coordinator(
        tasks,
        CoordinatorConfig { bind: "127.0.0.1:0".into(), out_dir: dir.path().to_path_buf(), job: job() },
    )
    .unwrap();
    let addr = coord.addr().to_string();
    let switch = Arc::new(AtomicBool::new(false));
    let dying = Arc::new(DyingExecutor {
        inner: SpinExecutor { rounds: 200 },
        seen: AtomicUsize::new(0),
        after: 3,
        switch: Arc::clone(&switch),
    });
    let victim = {
        let addr = addr.clone();
        let sw = Arc::clone(&switch);
        thread::spawn(move || run_worker(&addr, dying, worker_cfg("victim", Some(sw))))
    };
    let others: Vec<_> = (0..2)
        .map(|i| {
            let addr = addr.clone();
            thread::spawn(move || run_worker(&addr, Arc::new(SpinExecutor { rounds: 200 }), worker_cfg(&format!("ok{i}"), None)))
        })
        .collect();
    let summary = coord.wait(Duration::from_secs(30)).expect("job finished");
    let v = victim.join().unwrap().unwrap();
    assert!(v.killed);
    assert_eq!(v.completed, 2);
    for h in others {
        h.join().unwrap().unwrap();
    }
    assert_eq!(summary.ok, 20);
    let counts = sample_counts(dir.path());
    assert_eq!(counts.len(), 20);
    assert!(counts.values().all(|&c| c == 1));
}

#[test]
fn restarted_coordinator_resumes_from_log() {
    let dir = tempfile::tempdir().unwrap();
    let all = paths(12);
    let cfg = || CoordinatorConfig { bind: "127.0.0.1:0".into(), out_dir: dir.path().to_path_buf(), job: job() };

    // First run: a single worker dies after 5 tasks, then the coordinator goes down.
    let first = start_coordinator(make_tasks(&all, ExtractionMode::Fast), cfg()).unwrap();
    let switch = Arc::new(AtomicBool::new(false));
    let dying = Arc::new(DyingExecutor {
        inner: SpinExecutor { rounds: 10 },
        seen: AtomicUsize::new(0),
        after: 6,
        switch: Arc::clone(&switch),
    });
    let report = run_worker(&first.addr().to_string(), dying, worker_cfg("w", Some(switch))).unwrap();
    assert_eq!(report.completed, 5);
    first.shutdown();

    let second = start_coordinator(make_tasks(&all, ExtractionMode::Fast), cfg()).unwrap();
    assert_eq!(second.summary().recovered, 5);
    run_worker(&second.addr().to_string(), Arc::new(SpinExecutor { rounds: 10 }), worker_cfg("w2", None)).unwrap();
    let summary = second.wait(Duration::from_secs(10)).unwrap();
    assert_eq!(summary.ok, 7);
    let counts = sample_counts(dir.path());
    assert_eq!(counts.len(), 12);
    assert!(counts.values().all(|&c| c == 1));
}

#[test]
fn worker_survives_coordinator_restart_mid_job() {
    let dir = tempfile::tempdir().unwrap();
    let all = paths(40);
    let out = dir.path().to_path_buf();
    let first = start_coordinator(
        make_tasks(&all, ExtractionMode::Fast),
        CoordinatorConfig { bind: "127.0.0.1:0".into(), out_dir: out.clone(), job: job() },
    )
    .unwrap();
    let addr = first.addr();
    let worker = thread::spawn(move || {
        run_worker(&addr.to_string(), Arc::new(SpinExecutor { rounds: 3000 }), worker_cfg("w", None))
    });
    thread::sleep(Duration::from_millis(100));
    first.shutdown();
    let second = start_coordinator(
        make_tasks(&all, ExtractionMode::Fast),
        CoordinatorConfig { bind: addr.to_string(), out_dir: out.clone(), job: job() },
    )
    .unwrap();
    second.wait(Duration::from_secs(30)).expect("job finished");
    let report = worker.join().unwrap().unwrap();
    assert!(report.reconnects >= 1);
    let counts = sample_counts(&out);
    assert_eq!(counts.len(), 40);
    assert!(counts.values().all(|&c| c == 1));
}

#[test]
fn lease_lost_too_often_marks_task_failed() {
    let dir = tempfile::tempdir().unwrap();
    let job = JobConfig { max_retries: 0, ..job() };
    let coord = start_coordinator(
        make_tasks(&paths(1), ExtractionMode::Fast),
        CoordinatorConfig { bind: "127.0.0.1:0".into(), out_dir: dir.path().to_path_buf(), job },
    )
    .unwrap();
    let switch = Arc::new(AtomicBool::new(false));
    let dying = Arc::new(DyingExecutor {
        inner: SpinExecutor { rounds: 1 },
        seen: AtomicUsize::new(0),
        after: 1,
        switch: Arc::clone(&switch),
    });
    run_worker(&coord.addr().to_string(), dying, worker_cfg("w", Some(switch))).unwrap();
    let summary = coord.wait(Duration::from_secs(5)).expect("finished by failure");
    assert_eq!((summary.ok, summary.failed), (0, 1));
    let failures = fs::read_to_string(dir.path().join("failures.jsonl")).unwrap();
    assert!(failures.contains("lease lost"));
}
