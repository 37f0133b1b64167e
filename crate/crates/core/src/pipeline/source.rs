//! Frame sources feeding the runtime: simulator, trace file, UDP.

use std::fs::File;
use std::io::{self, BufReader};
use std::net::UdpSocket;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::config::SensingConfig;
use crate::error::TraceError;
use crate::simulator::{Scene, TraceIter};
use crate::trace::{self, TraceReader};
use crate::types::CsiFrame;

/// A stream of frames; `None` ends the stream.
pub type FrameSource = Box<dyn Iterator<Item = Result<CsiFrame, TraceError>> + Send>;

/// Sleeps so that frame timestamps are replayed in real time.
#[derive(Debug)]
struct Pacer {
    start: Option<(Instant, f64)>,
}

impl Pacer {
    fn new() -> Self {
        Self { start: None }
    }

    fn wait(&mut self, timestamp: f64) {
        let (wall0, ts0) = *self.start.get_or_insert((Instant::now(), timestamp));
        let due = Duration::from_secs_f64((timestamp - ts0).max(0.0));
        let elapsed = wall0.elapsed();
        if due > elapsed {
            std::thread::sleep(due - elapsed);
        }
    }
}

/// Handle for swapping the simulated scene while a session runs.
#[derive(Debug, Clone, Default)]
pub struct SceneHandle {
    slot: Arc<Mutex<Option<Scene>>>,
}

impl SceneHandle {
    pub fn replace(&self, scene: Scene) {
        *self.slot.lock().expect("scene lock") = Some(scene);
    }

    fn take(&self) -> Option<Scene> {
        self.slot.lock().expect("scene lock").take()
    }
}

/// Simulator source. Runs forever unless `n_frames` is given.
pub fn simulator(
    scene: Scene,
    config: &SensingConfig,
    n_frames: Option<u64>,
    realtime: bool,
    handle: SceneHandle,
) -> FrameSource {
    let config = config.clone();
    let mut iter = TraceIter::new(scene, config.clone());
    let mut pacer = Pacer::new();
    Box::new(std::iter::from_fn(move || {
        if let Some(next) = handle.take() {
            iter = TraceIter::new(next, config.clone()).starting_at(iter.next_index());
        }
        if n_frames.is_some_and(|n| iter.next_index() >= n) {
            return None;
        }
        let frame = iter.next()?;
        if n_frames.is_some_and(|n| frame.seq as u64 >= n) {
            return None;
        }
        if realtime {
            pacer.wait(frame.timestamp);
        }
        Some(Ok(frame))
    }))
}

/// Trace file source, optionally paced by frame timestamps.
pub fn trace_file(path: &Path, realtime: bool) -> Result<(trace::TraceHeader, FrameSource), TraceError> {
    let reader = TraceReader::new(BufReader::new(File::open(path)?))?;
    let header = *reader.header();
    let mut pacer = Pacer::new();
    let mut reader = reader;
    let src = std::iter::from_fn(move || {
        let item = reader.next()?;
        if realtime {
            if let Ok(f) = &item {
                pacer.wait(f.timestamp);
            }
        }
        Some(item)
    });
    Ok((header, Box::new(src)))
}

/// UDP source on a bound socket: one record per datagram. Malformed
/// datagrams are skipped. Ends when `stop` is set.
pub fn udp(socket: UdpSocket, n_subcarriers: usize, stop: Arc<AtomicBool>) -> io::Result<FrameSource> {
    socket.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut buf = vec![0u8; trace::record_len(n_subcarriers) + 1];
    Ok(Box::new(std::iter::from_fn(move || loop {
        if stop.load(Ordering::Relaxed) {
            return None;
        }
        match socket.recv(&mut buf) {
            Ok(len) => match trace::decode_record(&buf[..len], n_subcarriers) {
                Ok(frame) => return Some(Ok(frame)),
                Err(_) => continue,
            },
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Some(Err(e.into())),
        }
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulator_respects_limit_and_swap() {
        let cfg = SensingConfig::default();
        let handle = SceneHandle::default();
        let mut src = simulator(Scene::default(), &cfg, Some(10), false, handle.clone());
        let first: Vec<_> = src.by_ref().take(4).map(Result::unwrap).collect();
        assert_eq!(first.len(), 4);
        let mut s = Scene::default();
        s.impairments.leakage.amplitude = 2.0;
        handle.replace(s);
        let rest: Vec<_> = src.map(Result::unwrap).collect();
        assert_eq!(rest.len(), 6);
        assert_eq!(rest[0].seq, 4);
        assert!((rest[0].csi[0].re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn udp_round_trip() {
        let stop = Arc::new(AtomicBool::new(false));
        let rx = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = rx.local_addr().unwrap();
        let mut src = udp(rx, 8, stop.clone()).unwrap();
        let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
        let frame = CsiFrame::new(0.5, 3, vec![crate::C64::new(1.0, -2.0); 8]);
        let mut bytes = Vec::new();
        trace::encode_record(&frame, &mut bytes);
        tx.send_to(b"garbage", addr).unwrap();
        tx.send_to(&bytes, addr).unwrap();
        let got = src.next().unwrap().unwrap();
        assert_eq!(got, frame);
        stop.store(true, Ordering::Relaxed);
        assert!(src.next().is_none());
    }
}
