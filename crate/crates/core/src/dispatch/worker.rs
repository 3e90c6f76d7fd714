use std::io::{self, BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::protocol::{read_frame, write_frame, Message};
use super::{execute_guarded, TaskExecutor};

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub worker_id: String,
    pub heartbeat: Duration,
    /// Tasks requested per lease.
    pub batch: usize,
    /// How long to keep retrying a lost coordinator before giving up.
    pub reconnect_timeout: Duration,
    /// When set, the worker stops dead: no further heartbeats or results.
    pub kill_switch: Option<Arc<AtomicBool>>,
}

impl WorkerConfig {
    pub fn new(worker_id: impl Into<String>) -> Self {
        Self {
            worker_id: worker_id.into(),
            heartbeat: Duration::from_secs(2),
            batch: 1,
            reconnect_timeout: Duration::from_secs(30),
            kill_switch: None,
        }
    }

    fn killed(&self) -> bool {
        self.kill_switch.as_ref().is_some_and(|k| k.load(Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub completed: usize,
    pub reconnects: usize,
    pub killed: bool,
}

type Conn = (BufReader<TcpStream>, BufWriter<TcpStream>);

struct Link {
    addr: String,
    conn: Mutex<Option<Conn>>,
}

impl Link {
    fn request(&self, msg: &Message) -> io::Result<Message> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let Some((r, w)) = guard.as_mut() else {
            return Err(io::Error::new(io::ErrorKind::NotConnected, "not connected"));
        };
        let reply = write_frame(w, msg).and_then(|_| read_frame(r));
        if reply.is_err() {
            *guard = None;
        }
        reply
    }

    fn connected(&self) -> bool {
        self.conn.lock().unwrap_or_else(|p| p.into_inner()).is_some()
    }

    /// Connects with exponential backoff until `timeout` elapses.
    fn connect(&self, timeout: Duration, killed: impl Fn() -> bool) -> io::Result<()> {
        let deadline = Instant::now() + timeout;
        let mut backoff = Duration::from_millis(20);
        loop {
            match TcpStream::connect(&self.addr) {
                Ok(s) => {
                    let _ = s.set_nodelay(true);
                    let r = BufReader::new(s.try_clone()?);
                    *self.conn.lock().unwrap_or_else(|p| p.into_inner()) = Some((r, BufWriter::new(s)));
                    return Ok(());
                }
                Err(e) if Instant::now() >= deadline || killed() => return Err(e),
                Err(e) => {
                    debug!("connect to {} failed: {e}; retrying in {backoff:?}", self.addr);
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(Duration::from_secs(1));
                }
            }
        }
    }
}

/// Pulls leases from the coordinator at `addr` until it reports the job
/// done. Results are re-sent after a reconnect until acknowledged.
pub fn run_worker(addr: &str, executor: Arc<dyn TaskExecutor>, cfg: WorkerConfig) -> io::Result<WorkerReport> {
    let link = Arc::new(Link { addr: addr.to_string(), conn: Mutex::new(None) });
    let stop = Arc::new(AtomicBool::new(false));
    let mut report = WorkerReport::default();
    link.connect(cfg.reconnect_timeout, || cfg.killed())?;

    let beat = {
        let link = Arc::clone(&link);
        let stop = Arc::clone(&stop);
        let cfg = cfg.clone();
        thread::spawn(move || {
            let msg = Message::Heartbeat { worker_id: cfg.worker_id.clone() };
            while !stop.load(Ordering::SeqCst) && !cfg.killed() {
                thread::sleep(cfg.heartbeat);
                if stop.load(Ordering::SeqCst) || cfg.killed() {
                    break;
                }
                let _ = link.request(&msg);
            }
        })
    };

    let ensure = |report: &mut WorkerReport| -> io::Result<()> {
        if !link.connected() {
            report.reconnects += 1;
            link.connect(cfg.reconnect_timeout, || cfg.killed())?;
        }
        Ok(())
    };

    let outcome = (|| -> io::Result<()> {
        loop {
            if cfg.killed() {
                report.killed = true;
                return Ok(());
            }
            ensure(&mut report)?;
            let reply = match link.request(&Message::LeaseReq { worker_id: cfg.worker_id.clone(), max: cfg.batch }) {
                Ok(r) => r,
                Err(e) => {
                    warn!("{}: lease request failed: {e}", cfg.worker_id);
                    continue;
                }
            };
            match reply {
                Message::JobDone => return Ok(()),
                Message::NoWork { retry_after_ms } => thread::sleep(Duration::from_millis(retry_after_ms)),
                Message::Lease { tasks } => {
                    for task in tasks {
                        if cfg.killed() {
                            report.killed = true;
                            return Ok(());
                        }
                        let result = execute_guarded(executor.as_ref(), &task, &cfg.worker_id);
                        loop {
                            if cfg.killed() {
                                report.killed = true;
                                return Ok(());
                            }
                            ensure(&mut report)?;
                            match link.request(&Message::Result { result: result.clone() }) {
                                Ok(Message::Ack) => break,
                                Ok(Message::Error { message }) => {
                                    warn!("{}: coordinator rejected result: {message}", cfg.worker_id);
                                    thread::sleep(cfg.heartbeat);
                                }
                                Ok(other) => {
                                    return Err(io::Error::new(
                                        io::ErrorKind::InvalidData,
                                        format!("unexpected reply {other:?}"),
                                    ))
                                }
                                Err(e) => warn!("{}: result delivery failed: {e}", cfg.worker_id),
                            }
                        }
                        report.completed += 1;
                    }
                }
                Message::Error { message } => warn!("{}: coordinator error: {message}", cfg.worker_id),
                other => {
                    return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unexpected reply {other:?}")))
                }
            }
        }
    })();

    stop.store(true, Ordering::SeqCst);
    *link.conn.lock().unwrap_or_else(|p| p.into_inner()) = None;
    let _ = beat.join();
    info!("{} finished: {report:?}", cfg.worker_id);
    outcome.map(|()| report)
}
