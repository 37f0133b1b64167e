use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use livesense_core::pipeline::source::{self, FrameSource, SceneHandle};
use livesense_core::pipeline::{RunSummary, Runtime};
use livesense_core::simulator::{Scene, TraceIter};
use livesense_core::trace::{TraceHeader, TraceWriter};
use livesense_core::{Mode, SensingConfig};

use crate::protocol::ServerMsg;
use crate::server::{self, Shared};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Sim,
    Trace,
    Udp,
}

impl SourceKind {
    fn label(self) -> &'static str {
        match self {
            SourceKind::Sim => "sim",
            SourceKind::Trace => "trace",
            SourceKind::Udp => "udp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Gesture,
    Presence,
    Efficiency,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gesture => Mode::Gesture,
            ModeArg::Presence => Mode::Presence,
            ModeArg::Efficiency => Mode::Efficiency,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "sim")]
    pub source: SourceKind,
    /// Simulator scene file (key = value with `[target]` blocks).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Trace file for `--source trace`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// UDP address for `--source udp`.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// Sensing config file (key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Serve the WebSocket API on this address (path `/ws`).
    #[arg(long)]
    pub serve: Option<SocketAddr>,
    /// Record every ingested frame to this trace file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Stop after this many frames.
    #[arg(long)]
    pub frames: Option<u64>,
    /// Do not pace simulator or trace input to wall-clock time.
    #[arg(long)]
    pub fast: bool,
    /// Do not print per-batch JSON lines.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub frames: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>, mode: Option<ModeArg>) -> Result<SensingConfig, CliError> {
    let mut config = match path {
        Some(p) => SensingConfig::from_kv_str(&read_text(p)?)?,
        None => SensingConfig::default(),
    };
    if let Some(m) = mode {
        config.mode = m.into();
    }
    config.validate()?;
    Ok(config)
}

pub fn load_scene(path: Option<&Path>) -> Result<Scene, CliError> {
    match path {
        Some(p) => Ok(Scene::from_kv_str(&read_text(p)?)?),
        None => Ok(Scene::default()),
    }
}

fn recording(src: FrameSource, path: &Path, header: &TraceHeader) -> Result<FrameSource, CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut writer = Some(TraceWriter::new(BufWriter::new(file), header)?);
    Ok(Box::new(src.inspect(move |item| {
        if let (Ok(frame), Some(w)) = (item, writer.as_mut()) {
            if let Err(e) = w.write_frame(frame) {
                log::error!("recording stopped: {e}");
                writer = None;
            }
        }
    })))
}

/// Runs a live session until the source ends or Ctrl-C.
pub fn run(args: &RunArgs) -> Result<RunSummary, CliError> {
    let mut config = load_config(args.config.as_deref(), args.mode)?;
    let udp_stop = Arc::new(AtomicBool::new(false));
    let mut scene_handle = None;
    let src: FrameSource = match args.source {
        SourceKind::Sim => {
            let scene = load_scene(args.scene.as_deref())?;
            let handle = SceneHandle::default();
            scene_handle = Some(handle.clone());
            source::simulator(scene, &config, args.frames, !args.fast, handle)
        }
        SourceKind::Trace => {
            let path = args
                .trace
                .as_deref()
                .ok_or_else(|| CliError::Config("--source trace needs --trace <file>".into()))?;
            let (header, src) = source::trace_file(path, !args.fast)?;
            header.apply_to(&mut config);
            config.validate()?;
            limited(src, args.frames)
        }
        SourceKind::Udp => {
            let addr = args
                .listen
                .ok_or_else(|| CliError::Config("--source udp needs --listen <addr:port>".into()))?;
            let socket = UdpSocket::bind(addr)?;
            log::info!("receiving CSI on udp://{}", socket.local_addr()?);
            limited(source::udp(socket, config.n_subcarriers, udp_stop.clone())?, args.frames)
        }
    };
    let src = match &args.record {
        Some(path) => recording(src, path, &TraceHeader::from_config(&config))?,
        None => src,
    };

    let mut runtime = Runtime::new(config, src)?;
    let printer = (!args.quiet).then(|| {
        let rx = runtime.subscribe(64);
        std::thread::spawn(move || {
            let stdout = std::io::stdout();
            for r in rx {
                let mut out = stdout.lock();
                let _ = writeln!(out, "{}", ServerMsg::targets(&r).to_json());
            }
        })
    });

    let tokio_rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let summary = tokio_rt.block_on(async {
        let server_task = match args.serve {
            Some(addr) => {
                let shared = Shared::attach(&runtime, scene_handle, args.source.label());
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("serving ws://{}/ws", listener.local_addr()?);
                let done = shared.finished();
                Some(tokio::spawn(server::serve(listener, shared, done)))
            }
            None => None,
        };
        runtime.launch();
        let stop = runtime.stop_flag();
        let mut join = tokio::task::spawn_blocking(move || runtime.join());
        let summary = tokio::select! {
            s = &mut join => s,
            _ = tokio::signal::ctrl_c() => {
                log::info!("interrupted; stopping");
                stop.store(true, Ordering::SeqCst);
                udp_stop.store(true, Ordering::SeqCst);
                join.await
            }
        }
        .map_err(|e| CliError::Io(format!("runtime panicked: {e}")))?;
        if let Some(task) = server_task {
            if let Ok(Err(e)) = task.await {
                log::warn!("server: {e}");
            }
        }
        Ok::<_, CliError>(summary)
    })?;
    if let Some(p) = printer {
        let _ = p.join();
    }
    check(summary)
}

fn limited(src: FrameSource, frames: Option<u64>) -> FrameSource {
    match frames {
        Some(n) => Box::new(src.take(n as usize)),
        None => src,
    }
}

/// Maps an ended session to its exit status.
pub fn check(summary: RunSummary) -> Result<RunSummary, CliError> {
    log::info!(
        "{} frames, {} batches, {} dropped, {} resyncs",
        summary.frames_in,
        summary.batches,
        summary.dropped_frames,
        summary.resyncs
    );
    if let Some(e) = &summary.source_error {
        return Err(CliError::Io(e.clone()));
    }
    if summary.degraded {
        return Err(CliError::Degraded(format!("{} resyncs", summary.resyncs)));
    }
    Ok(summary)
}

/// Writes `frames` simulated frame slots to a trace. Dropped frames are
/// absent from the file. Returns the number of records written.
pub fn sim(args: &SimArgs) -> Result<u64, CliError> {
    let config = load_config(args.config.as_deref(), None)?;
    let scene = load_scene(args.scene.as_deref())?;
    let file = File::create(&args.out).map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let mut w = TraceWriter::new(BufWriter::new(file), &TraceHeader::from_config(&config))?;
    let mut written = 0;
    for f in TraceIter::new(scene, config).take_while(|f| (f.seq as u64) < args.frames) {
        w.write_frame(&f)?;
        written += 1;
    }
    w.finish()?.flush()?;
    Ok(written)
}
