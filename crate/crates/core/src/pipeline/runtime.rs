//! Threaded streaming runtime: ingestion → processing → broadcast.
//!
//! Ingestion never waits on processing: frames land in the shared ring
//! buffer, which drops its oldest frame when full. Processing takes
//! disjoint `M`-frame batches and applies staged config patches only between
//! batches. The broadcaster fans each result out to subscribers through
//! bounded queues and disconnects any subscriber whose queue is full.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};

use crate::config::SensingConfig;
use crate::error::ConfigError;

use super::engine::{BatchProcessor, BatchResult, Ingest};
use super::source::FrameSource;

/// Config patches are validated here and picked up by the processing
/// thread at the next batch boundary.
#[derive(Debug, Clone)]
pub struct ControlHandle {
    inner: Arc<Mutex<ControlState>>,
}

#[derive(Debug)]
struct ControlState {
    active: SensingConfig,
    active_id: u64,
    staged: Option<(SensingConfig, u64)>,
}

impl ControlHandle {
    fn new(config: SensingConfig) -> Self {
        Self {
            inner: Arc::new(Mutex::new(ControlState {
                active: config,
                active_id: 0,
                staged: None,
            })),
        }
    }

    /// Config and id currently used for processing.
    pub fn active(&self) -> (SensingConfig, u64) {
        let s = self.inner.lock().expect("control lock");
        (s.active.clone(), s.active_id)
    }

    /// Newest config including anything staged.
    pub fn latest(&self) -> (SensingConfig, u64) {
        let s = self.inner.lock().expect("control lock");
        match &s.staged {
            Some((c, id)) => (c.clone(), *id),
            None => (s.active.clone(), s.active_id),
        }
    }

    /// Validates and stages a patch. Returns the config id that results
    /// will carry once it is applied.
    pub fn apply_patch(&self, patch: &[(String, String)]) -> Result<u64, ConfigError> {
        let mut s = self.inner.lock().expect("control lock");
        let (base, base_id) = match &s.staged {
            Some((c, id)) => (c.clone(), *id),
            None => (s.active.clone(), s.active_id),
        };
        let next = base.patched(patch)?;
        if patch.is_empty() {
            return Ok(base_id);
        }
        s.staged = Some((next, base_id + 1));
        Ok(base_id + 1)
    }

    fn take_staged(&self) -> Option<(SensingConfig, u64)> {
        let mut s = self.inner.lock().expect("control lock");
        let staged = s.staged.take()?;
        s.active = staged.0.clone();
        s.active_id = staged.1;
        Some(staged)
    }
}

/// Counters shared by the runtime threads.
#[derive(Debug)]
pub struct RuntimeStats {
    started: Instant,
    pub frames_in: AtomicU64,
    pub batches: AtomicU64,
    pub dropped_frames: AtomicU64,
    pub dropped_results: AtomicU64,
    pub disconnected_subscribers: AtomicU64,
    pub resyncs: AtomicU64,
    pub degraded: AtomicBool,
    pub source_error: Mutex<Option<String>>,
}

impl RuntimeStats {
    fn new() -> Self {
        Self {
            started: Instant::now(),
            frames_in: AtomicU64::new(0),
            batches: AtomicU64::new(0),
            dropped_frames: AtomicU64::new(0),
            dropped_results: AtomicU64::new(0),
            disconnected_subscribers: AtomicU64::new(0),
            resyncs: AtomicU64::new(0),
            degraded: AtomicBool::new(false),
            source_error: Mutex::new(None),
        }
    }

    /// Mean input frame rate since start.
    pub fn sampling_hz(&self) -> f64 {
        let secs = self.started.elapsed().as_secs_f64();
        if secs <= 0.0 {
            0.0
        } else {
            self.frames_in.load(Ordering::Relaxed) as f64 / secs
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub frames_in: u64,
    pub batches: u64,
    pub dropped_frames: u64,
    pub resyncs: u64,
    pub degraded: bool,
    pub source_error: Option<String>,
}

struct IngestShared {
    ingest: Ingest,
    eof: bool,
}

type Subscribers = Arc<Mutex<Vec<Sender<Arc<BatchResult>>>>>;

pub struct Runtime {
    control: ControlHandle,
    stats: Arc<RuntimeStats>,
    stop: Arc<AtomicBool>,
    subscribers: Subscribers,
    shared: Arc<(Mutex<IngestShared>, Condvar)>,
    pending: Option<(SensingConfig, FrameSource)>,
    threads: Vec<JoinHandle<()>>,
}

impl Runtime {
    /// Builds the runtime without starting it, so subscribers can attach
    /// before the first frame flows.
    pub fn new(config: SensingConfig, source: FrameSource) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            control: ControlHandle::new(config.clone()),
            stats: Arc::new(RuntimeStats::new()),
            stop: Arc::new(AtomicBool::new(false)),
            subscribers: Arc::new(Mutex::new(Vec::new())),
            shared: Arc::new((
                Mutex::new(IngestShared {
                    ingest: Ingest::new(&config),
                    eof: false,
                }),
                Condvar::new(),
            )),
            pending: Some((config, source)),
            threads: Vec::new(),
        })
    }

    /// Builds and launches in one step.
    pub fn start(config: SensingConfig, source: FrameSource) -> Result<Self, ConfigError> {
        let mut rt = Self::new(config, source)?;
        rt.launch();
        Ok(rt)
    }

    /// Spawns the ingestion, processing and broadcast threads. No-op when
    /// already running.
    pub fn launch(&mut self) {
        let Some((config, source)) = self.pending.take() else {
            return;
        };
        let (result_tx, result_rx) = bounded::<Arc<BatchResult>>(16);
        let ingest_thread = {
            let shared = self.shared.clone();
            let stats = self.stats.clone();
            let stop = self.stop.clone();
            std::thread::Builder::new()
                .name("livesense-ingest".into())
                .spawn(move || ingest_loop(source, &shared, &stats, &stop))
                .expect("spawn ingest thread")
        };
        let process_thread = {
            let shared = self.shared.clone();
            let stats = self.stats.clone();
            let stop = self.stop.clone();
            let control = self.control.clone();
            std::thread::Builder::new()
                .name("livesense-process".into())
                .spawn(move || process_loop(config, &shared, &control, &stats, &stop, result_tx))
                .expect("spawn processing thread")
        };
        let broadcast_thread = {
            let subscribers = self.subscribers.clone();
            let stats = self.stats.clone();
            std::thread::Builder::new()
                .name("livesense-broadcast".into())
                .spawn(move || broadcast_loop(result_rx, &subscribers, &stats))
                .expect("spawn broadcast thread")
        };
        self.threads = vec![ingest_thread, process_thread, broadcast_thread];
    }

    pub fn control(&self) -> ControlHandle {
        self.control.clone()
    }

    pub fn stats(&self) -> Arc<RuntimeStats> {
        self.stats.clone()
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// New subscriber with a queue of `capacity` results. A subscriber that
    /// lets its queue fill up is disconnected.
    pub fn subscribe(&self, capacity: usize) -> Receiver<Arc<BatchResult>> {
        let (tx, rx) = bounded(capacity.max(1));
        self.subscribers.lock().expect("subscriber lock").push(tx);
        rx
    }

    /// Asks all stages to stop; pending frames are discarded.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.shared.1.notify_all();
    }

    /// True once every stage has exited.
    pub fn is_finished(&self) -> bool {
        self.pending.is_none() && self.threads.iter().all(JoinHandle::is_finished)
    }

    /// Waits for the source to end and all batches to be delivered.
    pub fn join(mut self) -> RunSummary {
        self.launch();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.summary()
    }

    fn summary(&self) -> RunSummary {
        let s = &self.stats;
        RunSummary {
            frames_in: s.frames_in.load(Ordering::Relaxed),
            batches: s.batches.load(Ordering::Relaxed),
            dropped_frames: s.dropped_frames.load(Ordering::Relaxed),
            resyncs: s.resyncs.load(Ordering::Relaxed),
            degraded: s.degraded.load(Ordering::Relaxed),
            source_error: s.source_error.lock().expect("stats lock").clone(),
        }
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop();
            for t in self.threads.drain(..) {
                let _ = t.join();
            }
        }
    }
}

fn ingest_loop(
    source: FrameSource,
    shared: &(Mutex<IngestShared>, Condvar),
    stats: &RuntimeStats,
    stop: &AtomicBool,
) {
    let (lock, cv) = shared;
    for item in source {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        match item {
            Ok(frame) => {
                stats.frames_in.fetch_add(1, Ordering::Relaxed);
                let mut g = lock.lock().expect("ingest lock");
                if g.ingest.push(frame).is_err() {
                    stats.degraded.store(true, Ordering::Relaxed);
                    stats.resyncs.fetch_add(1, Ordering::Relaxed);
                }
                stats
                    .dropped_frames
                    .store(g.ingest.buffer().dropped(), Ordering::Relaxed);
                drop(g);
                cv.notify_one();
            }
            Err(e) => {
                *stats.source_error.lock().expect("stats lock") = Some(e.to_string());
                break;
            }
        }
    }
    let mut g = lock.lock().expect("ingest lock");
    g.ingest.flush();
    g.eof = true;
    drop(g);
    cv.notify_all();
}

fn process_loop(
    config: SensingConfig,
    shared: &(Mutex<IngestShared>, Condvar),
    control: &ControlHandle,
    stats: &RuntimeStats,
    stop: &AtomicBool,
    results: Sender<Arc<BatchResult>>,
) {
    let (lock, cv) = shared;
    let m = config.doppler_batch;
    let mut processor = BatchProcessor::new(config);
    let mut seen_resyncs = 0;
    loop {
        let (batch, dropped, resyncs, ingest_ms) = {
            let mut g = lock.lock().expect("ingest lock");
            loop {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
                let t = Instant::now();
                if let Some(b) = g.ingest.take_batch(m) {
                    let ingest_ms = t.elapsed().as_secs_f64() * 1e3;
                    break (b, g.ingest.buffer().dropped(), g.ingest.resyncs(), ingest_ms);
                }
                if g.eof {
                    return;
                }
                g = cv
                    .wait_timeout(g, Duration::from_millis(50))
                    .expect("ingest lock")
                    .0;
            }
        };
        if resyncs != seen_resyncs {
            seen_resyncs = resyncs;
            processor.resync();
        }
        if let Some((cfg, id)) = control.take_staged() {
            processor.apply_config(cfg, id);
        }
        let result = processor.process(&batch, ingest_ms, dropped, resyncs);
        stats.batches.fetch_add(1, Ordering::Relaxed);
        match results.try_send(Arc::new(result)) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                stats.dropped_results.fetch_add(1, Ordering::Relaxed);
            }
            Err(TrySendError::Disconnected(_)) => return,
        }
    }
}

fn broadcast_loop(results: Receiver<Arc<BatchResult>>, subscribers: &Subscribers, stats: &RuntimeStats) {
    for r in results {
        let mut subs = subscribers.lock().expect("subscriber lock");
        subs.retain(|s| match s.try_send(r.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                stats.disconnected_subscribers.fetch_add(1, Ordering::Relaxed);
                false
            }
            Err(TrySendError::Disconnected(_)) => false,
        });
    }
    // dropping the senders ends every subscriber's stream
    subscribers.lock().expect("subscriber lock").clear();
}
