//! Pull-based task coordinator.
//!
//! Workers ask for leases; a lease stays valid while its worker keeps
//! sending heartbeats. A worker silent for the lease timeout loses all its
//! leases, which go back to the front of the queue. The first result for a
//! task wins and is appended to the output log before it is acknowledged.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::protocol::{read_frame, write_frame, Message};
use super::{JobConfig, JobSummary, OutputLog, Task, TaskOutcome, TaskResult};

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    /// Address to listen on, e.g. `127.0.0.1:0`.
    pub bind: String,
    pub out_dir: PathBuf,
    pub job: JobConfig,
}

struct State {
    pending: VecDeque<Task>,
    leased: HashMap<u64, (String, Task)>,
    last_seen: HashMap<String, Instant>,
    finished: HashSet<u64>,
    todo: usize,
    summary: JobSummary,
    log: OutputLog,
    start: Instant,
}

impl State {
    fn done(&self) -> bool {
        self.finished.len() >= self.todo
    }

    fn touch(&mut self, worker: &str) {
        self.last_seen.insert(worker.to_string(), Instant::now());
    }

    fn finish(&mut self, result: &TaskResult) -> io::Result<()> {
        self.log.record(result)?;
        self.finished.insert(result.task_id);
        self.leased.remove(&result.task_id);
        self.pending.retain(|t| t.task_id != result.task_id);
        match result.outcome {
            TaskOutcome::Ok { .. } => self.summary.ok += 1,
            TaskOutcome::Failed { .. } => self.summary.failed += 1,
        }
        *self.summary.per_worker.entry(result.worker_id.clone()).or_default() += 1;
        Ok(())
    }

    fn snapshot(&self) -> JobSummary {
        let mut s = self.summary.clone();
        s.elapsed_ms = self.start.elapsed().as_secs_f64() * 1e3;
        s
    }
}

struct Shared {
    state: Mutex<State>,
    done_cv: Condvar,
    shutdown: AtomicBool,
    job: JobConfig,
    conns: Mutex<Vec<TcpStream>>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn handle(&self, msg: Message) -> Message {
        let mut st = self.lock();
        match msg {
            Message::LeaseReq { worker_id, max } => {
                st.touch(&worker_id);
                if st.done() {
                    return Message::JobDone;
                }
                let n = max.clamp(1, self.job.batch_size.max(1));
                let mut tasks = Vec::new();
                while tasks.len() < n {
                    let Some(t) = st.pending.pop_front() else { break };
                    st.leased.insert(t.task_id, (worker_id.clone(), t.clone()));
                    tasks.push(t);
                }
                if tasks.is_empty() {
                    Message::NoWork { retry_after_ms: (self.job.heartbeat_ms / 2).max(5) }
                } else {
                    debug!("leased {:?} to {worker_id}", tasks.iter().map(|t| t.task_id).collect::<Vec<_>>());
                    Message::Lease { tasks }
                }
            }
            Message::Result { result } => {
                st.touch(&result.worker_id);
                if st.finished.contains(&result.task_id) {
                    debug!("duplicate result for task {} ignored", result.task_id);
                    return Message::Ack;
                }
                if let Err(e) = st.finish(&result) {
                    warn!("cannot record task {}: {e}", result.task_id);
                    return Message::Error { message: format!("output log write failed: {e}") };
                }
                if st.done() {
                    info!("job complete");
                    self.done_cv.notify_all();
                }
                Message::Ack
            }
            Message::Heartbeat { worker_id } => {
                st.touch(&worker_id);
                Message::Ack
            }
            other => Message::Error { message: format!("unexpected message {other:?}") },
        }
    }

    /// Requeues leases held by silent workers.
    fn reap(&self) {
        let timeout = self.job.lease_timeout();
        let mut st = self.lock();
        let now = Instant::now();
        let expired: Vec<u64> = st
            .leased
            .iter()
            .filter(|(_, (w, _))| st.last_seen.get(w).is_none_or(|t| now.duration_since(*t) > timeout))
            .map(|(id, _)| *id)
            .collect();
        let mut requeue = Vec::new();
        for id in expired {
            let Some((worker, mut task)) = st.leased.remove(&id) else { continue };
            task.attempt += 1;
            warn!("lease on task {id} held by {worker} expired (attempt {})", task.attempt);
            if task.attempt > self.job.max_retries {
                let result = TaskResult {
                    task_id: id,
                    path: task.path.clone(),
                    worker_id: worker,
                    duration_ms: 0.0,
                    outcome: TaskOutcome::Failed { error: format!("lease lost {} times", task.attempt) },
                };
                if let Err(e) = st.finish(&result) {
                    warn!("cannot record failure of task {id}: {e}");
                }
            } else {
                requeue.push(task);
            }
        }
        requeue.sort_by_key(|t| std::cmp::Reverse(t.task_id));
        for t in requeue {
            st.pending.push_front(t);
        }
        if st.done() {
            self.done_cv.notify_all();
        }
    }
}

pub struct CoordinatorHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

fn serve_conn(shared: Arc<Shared>, stream: TcpStream) {
    let mut reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut writer = BufWriter::new(stream);
    while !shared.shutdown.load(Ordering::SeqCst) {
        let msg = match read_frame(&mut reader) {
            Ok(m) => m,
            Err(e) => {
                debug!("connection closed: {e}");
                return;
            }
        };
        let reply = shared.handle(msg);
        if write_frame(&mut writer, &reply).is_err() {
            return;
        }
    }
}

/// Starts listening and serving leases for `tasks`. Tasks whose path is
/// already in the output log are counted as recovered and not re-run.
pub fn start_coordinator(tasks: Vec<Task>, cfg: CoordinatorConfig) -> io::Result<CoordinatorHandle> {
    let (log, done) = OutputLog::open(&cfg.out_dir)?;
    let total = tasks.len();
    let pending: VecDeque<Task> = tasks.into_iter().filter(|t| !done.contains(&t.path)).collect();
    let recovered = total - pending.len();
    if recovered > 0 {
        info!("recovered {recovered} finished tasks from {}", cfg.out_dir.display());
    }
    let state = State {
        todo: pending.len(),
        pending,
        leased: HashMap::new(),
        last_seen: HashMap::new(),
        finished: HashSet::new(),
        summary: JobSummary { total, recovered, per_worker: BTreeMap::new(), ..JobSummary::default() },
        log,
        start: Instant::now(),
    };
    let listener = TcpListener::bind(&cfg.bind)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        state: Mutex::new(state),
        done_cv: Condvar::new(),
        shutdown: AtomicBool::new(false),
        job: cfg.job.clone(),
        conns: Mutex::new(Vec::new()),
    });

    let accept = {
        let shared = Arc::clone(&shared);
        thread::spawn(move || {
            for stream in listener.incoming() {
                if shared.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let _ = stream.set_nodelay(true);
                if let Ok(c) = stream.try_clone() {
                    shared.conns.lock().unwrap_or_else(|p| p.into_inner()).push(c);
                }
                let s = Arc::clone(&shared);
                thread::spawn(move || serve_conn(s, stream));
            }
        })
    };
    let reaper = {
        let shared = Arc::clone(&shared);
        let tick = shared.job.heartbeat() / 2;
        thread::spawn(move || {
            while !shared.shutdown.load(Ordering::SeqCst) {
                thread::sleep(tick.max(Duration::from_millis(1)));
                shared.reap();
            }
        })
    };
    info!("coordinator listening on {addr}");
    Ok(CoordinatorHandle { addr, shared, threads: vec![accept, reaper] })
}

impl CoordinatorHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn summary(&self) -> JobSummary {
        self.shared.lock().snapshot()
    }

    pub fn is_done(&self) -> bool {
        self.shared.lock().done()
    }

    /// Blocks until every task is finished or `timeout` passes.
    pub fn wait(&self, timeout: Duration) -> Option<JobSummary> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.lock();
        while !st.done() {
            let left = deadline.checked_duration_since(Instant::now())?;
            st = self.shared.done_cv.wait_timeout(st, left).unwrap_or_else(|p| p.into_inner()).0;
        }
        Some(st.snapshot())
    }

    /// Stops accepting, drops every worker connection and joins the
    /// service threads.
    pub fn shutdown(mut self) -> JobSummary {
        self.stop();
        self.summary()
    }

    fn stop(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for c in self.shared.conns.lock().unwrap_or_else(|p| p.into_inner()).drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for CoordinatorHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
