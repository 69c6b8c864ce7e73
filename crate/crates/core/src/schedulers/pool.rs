//! Worker pools that run [`BlockTask`]s.
//!
//! Task `k` always runs on worker `k mod c`, and results are merged by task
//! index, so placement never changes the numbers. Two backends share that
//! contract: scoped threads inside this process, and child processes that talk
//! to the orchestrator over loopback TCP using the frames in [`super::wire`].

use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use faer::{Mat, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, TargetMatrix};

use super::block::{run_block, BlockOutcome, BlockTask, CvSettings};
use super::wire::{self, Message};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Threads,
    Processes,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Threads => "threads",
            Backend::Processes => "processes",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threads" => Ok(Backend::Threads),
            "processes" => Ok(Backend::Processes),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkerPool {
    workers: usize,
    threads_per_worker: usize,
    backend: Backend,
    worker_exe: Option<PathBuf>,
    time_budget: Option<Duration>,
}

/// faer parallelism for a per-worker thread budget.
pub fn par_for(threads: usize) -> Par {
    if threads <= 1 {
        Par::Seq
    } else {
        Par::rayon(threads)
    }
}

impl WorkerPool {
    /// In-process pool with `workers` concurrent workers.
    pub fn new(workers: usize, threads_per_worker: usize) -> Result<Self> {
        if workers == 0 || threads_per_worker == 0 {
            return Err(Error::Config(format!(
                "worker count and threads per worker must be >= 1, got {workers} and {threads_per_worker}"
            )));
        }
        Ok(Self { workers, threads_per_worker, backend: Backend::Threads, worker_exe: None, time_budget: None })
    }

    pub fn single() -> Self {
        Self::new(1, 1).unwrap()
    }

    /// Pool of child processes running `worker_exe worker --connect ADDR --id K`.
    pub fn processes(workers: usize, threads_per_worker: usize, worker_exe: impl Into<PathBuf>) -> Result<Self> {
        let mut pool = Self::new(workers, threads_per_worker)?;
        pool.backend = Backend::Processes;
        pool.worker_exe = Some(worker_exe.into());
        Ok(pool)
    }

    /// Tasks not yet started when the budget runs out are abandoned and the
    /// run fails with [`Error::Timeout`].
    pub fn with_time_budget(mut self, budget: Duration) -> Self {
        self.time_budget = Some(budget);
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn threads_per_worker(&self) -> usize {
        self.threads_per_worker
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn time_budget(&self) -> Option<Duration> {
        self.time_budget
    }

    /// Worker index for each of `n_tasks` tasks.
    pub fn assignment(&self, n_tasks: usize) -> Vec<usize> {
        (0..n_tasks).map(|k| k % self.workers).collect()
    }

    /// Pins the intra-worker thread budget for linear algebra and warns, once
    /// per process, when the total exceeds the host.
    pub(crate) fn apply_thread_budget(&self, active_workers: usize) {
        faer::set_global_parallelism(par_for(self.threads_per_worker));
        let total = active_workers * self.threads_per_worker;
        let host = thread::available_parallelism().map_or(1, |n| n.get());
        static WARNED: std::sync::atomic::AtomicBool = std::sync::atomic::AtomicBool::new(false);
        if total > host && !WARNED.swap(true, std::sync::atomic::Ordering::Relaxed) {
            log::warn!(
                "{active_workers} workers x {} threads = {total} threads on a host with {host} cpus",
                self.threads_per_worker
            );
        }
    }

    /// Runs every task and returns the outcomes in task order.
    pub fn execute(
        &self,
        x: &FeatureMatrix,
        y: &TargetMatrix,
        settings: &CvSettings,
        tasks: &[BlockTask],
        label: &'static str,
    ) -> Result<Vec<BlockOutcome>> {
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "features have {} rows but targets have {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if let Some(bad) = tasks.iter().find(|t| t.cols.end > y.ncols() || t.cols.start > t.cols.end) {
            return Err(Error::Shape(format!(
                "task {} covers columns {:?} of a {}-column target matrix",
                bad.id,
                bad.cols,
                y.ncols()
            )));
        }
        if tasks.is_empty() {
            return Ok(Vec::new());
        }
        let active = self.workers.min(tasks.len());
        self.apply_thread_budget(active);
        let state = RunState::new(self.time_budget, tasks.len());
        let results = match self.backend {
            Backend::Threads => self.run_threads(x, y, settings, tasks, active, &state),
            Backend::Processes => self.run_processes(x, y, settings, tasks, active, &state),
        }?;
        state.collect(results, label)
    }

    fn run_threads(
        &self,
        x: &FeatureMatrix,
        y: &TargetMatrix,
        settings: &CvSettings,
        tasks: &[BlockTask],
        active: usize,
        state: &RunState,
    ) -> Result<Vec<(usize, Result<BlockOutcome>)>> {
        let (tx, rx) = mpsc::channel();
        thread::scope(|s| {
            for w in 0..active {
                let tx = tx.clone();
                s.spawn(move || {
                    for k in (w..tasks.len()).step_by(self.workers) {
                        if !state.may_start() {
                            break;
                        }
                        let task = &tasks[k];
                        let block = y.as_mat().subcols(task.cols.start, task.cols.len());
                        let res = run_block(task.id, x.as_mat(), block, settings, task.job);
                        state.finished(res.is_ok());
                        let _ = tx.send((k, res));
                    }
                });
            }
        });
        drop(tx);
        Ok(rx.into_iter().collect())
    }

    fn run_processes(
        &self,
        x: &FeatureMatrix,
        y: &TargetMatrix,
        settings: &CvSettings,
        tasks: &[BlockTask],
        active: usize,
        state: &RunState,
    ) -> Result<Vec<(usize, Result<BlockOutcome>)>> {
        let exe = self
            .worker_exe
            .as_ref()
            .ok_or_else(|| Error::Config("process backend needs a worker executable".into()))?;
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let mut children = ChildGuard(Vec::with_capacity(active));
        for w in 0..active {
            let child = Command::new(exe)
                .args(["worker", "--connect", &addr, "--id", &w.to_string()])
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::io(exe, e))?;
            children.0.push(child);
        }
        let mut streams = accept_workers(&listener, &mut children, active)?;

        let x_frame = wire::encode(&Message::Features {
            threads: self.threads_per_worker as u64,
            x: x.as_mat().to_owned(),
        });

        let (tx, rx) = mpsc::channel();
        thread::scope(|s| {
            for (w, stream) in streams.iter_mut().enumerate() {
                let tx = tx.clone();
                let x_frame = &x_frame;
                s.spawn(move || {
                    if let Err(e) = wire::write_frame(stream, x_frame) {
                        let _ = tx.send((w, Err(e)));
                        state.finished(false);
                        return;
                    }
                    for k in (w..tasks.len()).step_by(self.workers) {
                        if !state.may_start() {
                            break;
                        }
                        let task = &tasks[k];
                        let block = y.as_mat().subcols(task.cols.start, task.cols.len());
                        let res = wire::write_frame(stream, &wire::encode_task(task, settings, block))
                            .and_then(|_| wire::recv(stream))
                            .and_then(|reply| match reply {
                                Message::Result(out) if out.id == task.id => Ok(out),
                                Message::Error { usage: true, message, .. } => Err(Error::Config(message)),
                                Message::Error { message, .. } => Err(Error::Remote(message)),
                                other => Err(Error::Protocol(format!("unexpected reply {other:?}"))),
                            });
                        state.finished(res.is_ok());
                        let _ = tx.send((k, res));
                    }
                    let _ = wire::send(stream, &Message::Shutdown);
                });
            }
        });
        drop(tx);
        drop(streams);
        children.wait_all();
        Ok(rx.into_iter().collect())
    }
}

struct ChildGuard(Vec<Child>);

impl ChildGuard {
    fn wait_all(&mut self) {
        let deadline = Instant::now() + Duration::from_secs(10);
        for child in &mut self.0 {
            loop {
                match child.try_wait() {
                    Ok(Some(_)) | Err(_) => break,
                    Ok(None) if Instant::now() > deadline => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                    Ok(None) => thread::sleep(Duration::from_millis(5)),
                }
            }
        }
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        for child in &mut self.0 {
            if let Ok(None) = child.try_wait() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

fn accept_workers(listener: &TcpListener, children: &mut ChildGuard, count: usize) -> Result<Vec<TcpStream>> {
    listener.set_nonblocking(true)?;
    let started = Instant::now();
    let mut slots: Vec<Option<TcpStream>> = (0..count).map(|_| None).collect();
    let mut connected = 0;
    while connected < count {
        match listener.accept() {
            Ok((mut stream, _)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                let id = match wire::recv(&mut stream)? {
                    Message::Hello { worker_id } => worker_id as usize,
                    other => return Err(Error::Protocol(format!("expected HELLO, got {other:?}"))),
                };
                match slots.get_mut(id) {
                    Some(slot @ None) => *slot = Some(stream),
                    _ => return Err(Error::Protocol(format!("unexpected worker id {id}"))),
                }
                connected += 1;
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                for (w, child) in children.0.iter_mut().enumerate() {
                    if let Ok(Some(status)) = child.try_wait() {
                        return Err(Error::Protocol(format!("worker {w} exited before connecting ({status})")));
                    }
                }
                if started.elapsed() > CONNECT_TIMEOUT {
                    return Err(Error::Protocol(format!("only {connected} of {count} workers connected")));
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(slots.into_iter().map(Option::unwrap).collect())
}

struct RunState {
    started: Instant,
    budget: Option<Duration>,
    total: usize,
    abort: AtomicBool,
    timed_out: AtomicBool,
    completed: AtomicUsize,
}

impl RunState {
    fn new(budget: Option<Duration>, total: usize) -> Self {
        Self {
            started: Instant::now(),
            budget,
            total,
            abort: AtomicBool::new(false),
            timed_out: AtomicBool::new(false),
            completed: AtomicUsize::new(0),
        }
    }

    fn may_start(&self) -> bool {
        if self.abort.load(Ordering::SeqCst) {
            return false;
        }
        if self.budget.is_some_and(|b| self.started.elapsed() > b) {
            self.timed_out.store(true, Ordering::SeqCst);
            self.abort.store(true, Ordering::SeqCst);
            return false;
        }
        true
    }

    fn finished(&self, ok: bool) {
        if ok {
            self.completed.fetch_add(1, Ordering::SeqCst);
        } else {
            self.abort.store(true, Ordering::SeqCst);
        }
    }

    fn collect(&self, results: Vec<(usize, Result<BlockOutcome>)>, label: &'static str) -> Result<Vec<BlockOutcome>> {
        let mut slots: Vec<Option<BlockOutcome>> = (0..self.total).map(|_| None).collect();
        let mut first_err: Option<(usize, Error)> = None;
        for (k, res) in results {
            match res {
                Ok(out) => slots[k] = Some(out),
                Err(e) => {
                    if first_err.as_ref().is_none_or(|(j, _)| k < *j) {
                        first_err = Some((k, e));
                    }
                }
            }
        }
        if let Some((index, source)) = first_err {
            return Err(Error::Task { context: label, index, source: Box::new(source) });
        }
        if self.timed_out.load(Ordering::SeqCst) || slots.iter().any(Option::is_none) {
            return Err(Error::Timeout {
                budget_s: self.budget.map_or(f64::NAN, |b| b.as_secs_f64()),
                completed: self.completed.load(Ordering::SeqCst),
                total: self.total,
            });
        }
        Ok(slots.into_iter().map(Option::unwrap).collect())
    }
}

/// Serves one orchestrator connection until SHUTDOWN. Used by the CLI's
/// `worker` subcommand.
pub fn serve_worker(addr: &str, worker_id: u64) -> Result<()> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    wire::send(&mut stream, &Message::Hello { worker_id })?;
    let mut features: Option<Mat<f64>> = None;
    loop {
        match wire::recv(&mut stream)? {
            Message::Features { threads, x } => {
                faer::set_global_parallelism(par_for(threads as usize));
                features = Some(x);
            }
            Message::Task { task, settings, y_block } => {
                let reply = match &features {
                    None => Message::Error {
                        task_id: task.id,
                        usage: false,
                        message: "task received before features".into(),
                    },
                    Some(x) => match run_block(task.id, x.as_ref(), y_block.as_ref(), &settings, task.job) {
                        Ok(out) => Message::Result(out),
                        Err(e) => Message::Error { task_id: task.id, usage: e.is_usage(), message: e.to_string() },
                    },
                };
                wire::send(&mut stream, &reply)?;
            }
            Message::Shutdown => return Ok(()),
            other => return Err(Error::Protocol(format!("worker got unexpected {other:?}"))),
        }
    }
}
