use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{axes, dsp};
use crate::clutter::{BackgroundState, StaticSubspace};
use crate::config::SensingConfig;
use crate::detect::{cfar_detect, extract_detections, noise_floor, CfarParams};
use crate::error::ConfigError;
use crate::rdmap::{matched_range, to_map, DopplerProcessor, RangeProcessor};
use crate::sync::SyncState;
use crate::track::Tracker;
use crate::types::{CsiFrame, Detection, RangeDopplerMap, Track};
use crate::vitals::{presence_decision, Presence, PresenceEvidence, VitalsBuffer, VitalsEstimate};
use crate::{C64, SPEED_OF_LIGHT};

use super::buffer::FrameBuffer;
use super::resample::{ResyncError, Resampler};

/// Batches of presence evidence considered by the presence decision.
pub const PRESENCE_WINDOW_BATCHES: usize = 4;

/// Wall-clock cost of each stage for one batch, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ingest_ms: f64,
    pub sync_ms: f64,
    pub sic_ms: f64,
    pub fft_ms: f64,
    pub detect_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub gap_filled_frames: usize,
    pub low_confidence_frames: usize,
    /// Frames dropped by the ring buffer since the session started.
    pub dropped_frames: u64,
    pub resyncs: u64,
    pub noise_floor_db: Option<f64>,
    pub sic_warmup: bool,
    pub corr_peak_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub batch_seq: u64,
    pub config_id: u64,
    pub map: RangeDopplerMap,
    pub detections: Vec<Detection>,
    pub tracks: Vec<Track>,
    pub vitals: Option<VitalsEstimate>,
    pub presence: Presence,
    pub timings: Timings,
    pub diagnostics: BatchDiagnostics,
    /// Last synchronised frame of the batch, per subcarrier.
    pub csi: CsiSnapshot,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsiSnapshot {
    pub seq: u32,
    pub magnitude_db: Vec<f64>,
    pub phase_rad: Vec<f64>,
}

impl CsiSnapshot {
    fn of(frame: &CsiFrame) -> Self {
        Self {
            seq: frame.seq,
            magnitude_db: frame.csi.iter().map(|&x| dsp::mag_db(x)).collect(),
            phase_rad: frame.csi.iter().map(|x| x.arg()).collect(),
        }
    }
}

impl BatchResult {
    /// Copy with timings zeroed, for comparing runs.
    pub fn without_timings(&self) -> BatchResult {
        BatchResult {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Stage-by-stage batch processing: sync → SIC → range → Doppler → CFAR →
/// detections → tracks → vitals. Holds all per-stream state except
/// buffering.
#[derive(Debug, Clone)]
pub struct BatchProcessor {
    config: SensingConfig,
    config_id: u64,
    sync: SyncState,
    sic: BackgroundState,
    range: RangeProcessor,
    doppler: DopplerProcessor,
    vitals_range: RangeProcessor,
    vitals: VitalsBuffer,
    tracker: Tracker,
    presence: VecDeque<PresenceEvidence>,
    batch_seq: u64,
    freqs: Vec<f64>,
}

impl BatchProcessor {
    pub fn new(config: SensingConfig) -> Self {
        let bins_native = {
            let mut c = config.clone();
            c.zero_pad_factor = Some(1);
            c.mode = crate::config::Mode::Presence;
            axes::range_bins(&c)
        };
        Self {
            sync: SyncState::new(&config),
            sic: BackgroundState::new(&config.sic),
            range: RangeProcessor::new(&config),
            doppler: DopplerProcessor::new(config.doppler_batch),
            vitals_range: RangeProcessor::with_params(config.n_subcarriers, 1, 1, bins_native, true),
            vitals: VitalsBuffer::new(config.vitals.window_frames),
            tracker: Tracker::new(&config.track),
            presence: VecDeque::with_capacity(PRESENCE_WINDOW_BATCHES),
            batch_seq: 0,
            freqs: config.subcarrier_freqs(),
            config_id: 0,
            config,
        }
    }

    pub fn config(&self) -> &SensingConfig {
        &self.config
    }

    pub fn config_id(&self) -> u64 {
        self.config_id
    }

    pub fn sync_state(&self) -> &SyncState {
        &self.sync
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    /// Switches to `next` (already validated, same structural keys).
    pub fn apply_config(&mut self, next: SensingConfig, config_id: u64) {
        let old = std::mem::replace(&mut self.config, next);
        let cfg = &self.config;
        if old.mode != cfg.mode || old.zero_pad() != cfg.zero_pad() || old.max_range_m != cfg.max_range_m {
            self.range = RangeProcessor::new(cfg);
        }
        if old.sic != cfg.sic {
            self.sic = BackgroundState::new(&cfg.sic);
        }
        if old.track != cfg.track {
            self.tracker.set_config(&cfg.track);
        }
        if old.vitals.window_frames != cfg.vitals.window_frames {
            self.vitals.resize(cfg.vitals.window_frames);
        }
        if old.carrier_freq_hz != cfg.carrier_freq_hz {
            self.tracker.clear();
        }
        self.config_id = config_id;
    }

    /// Forgets alignment, background and vitals history after a stream break.
    pub fn resync(&mut self) {
        self.sync.reset();
        self.sic = BackgroundState::new(&self.config.sic);
        self.vitals.clear();
    }

    /// Processes exactly `M` grid-aligned frames.
    pub fn process(&mut self, frames: &[CsiFrame], ingest_ms: f64, dropped_frames: u64, resyncs: u64) -> BatchResult {
        let start = Instant::now();
        let m = self.config.doppler_batch;
        assert_eq!(frames.len(), m, "batch must hold exactly M frames");

        let mut timings = Timings {
            ingest_ms,
            ..Timings::default()
        };
        let mut diag = BatchDiagnostics {
            dropped_frames,
            resyncs,
            ..BatchDiagnostics::default()
        };

        let mut residuals: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut profiles = Vec::with_capacity(m);
        let mut last_static: Option<StaticSubspace> = None;
        let mut snapshot = CsiSnapshot::default();
        for (i, frame) in frames.iter().enumerate() {
            let t = Instant::now();
            let aligned = self.sync.process(frame);
            timings.sync_ms += ms(t);
            if aligned.flags.gap_filled() {
                diag.gap_filled_frames += 1;
            }
            if aligned.flags.low_confidence() {
                diag.low_confidence_frames += 1;
            }
            if i + 1 == m {
                snapshot = CsiSnapshot::of(&aligned);
            }

            let t = Instant::now();
            let mut residual = self.sic.subtract(&aligned.csi);
            if let Some(bg) = self.sic.background() {
                let space = StaticSubspace::new(bg, &self.freqs);
                space.project_out(&mut residual);
                last_static = Some(space);
            }
            // frames before the first sync anchor are unaligned
            if self.sync.has_reference() {
                self.sic.update(&aligned.csi);
            }
            timings.sic_ms += ms(t);

            let t = Instant::now();
            self.vitals.push(self.vitals_range.profile(&aligned.csi));
            profiles.push(self.range.profile(&residual));
            timings.fft_ms += ms(t);
            residuals.push(residual);
        }
        diag.sic_warmup = self.sic.is_warmup();
        diag.corr_peak_ratio = self.sync.diagnostics.corr_peak_ratio;

        let t = Instant::now();
        let spectrum = self.doppler.spectrum(&profiles);
        let batch_timestamp = 0.5 * (frames[0].timestamp + frames[m - 1].timestamp);
        let mut range_axis = axes::range_axis(&self.config);
        range_axis.truncate(self.range.bins());
        let map = to_map(
            &spectrum,
            range_axis,
            axes::velocity_axis(&self.config),
            self.batch_seq,
            batch_timestamp,
        );
        timings.fft_ms += ms(t);

        let t = Instant::now();
        let detections = match noise_floor(&map) {
            Ok(floor) => {
                diag.noise_floor_db = Some(floor);
                let params = CfarParams::from_config(&self.config.cfar, self.config.zero_pad());
                let mask = cfar_detect(&map, &params);
                let mut dets = extract_detections(&map, &mask, floor, self.config.max_range_m);
                let native = SPEED_OF_LIGHT / (2.0 * self.config.bandwidth_hz);
                let spacing = axes::range_spacing(&self.config);
                for det in &mut dets {
                    let row = det.bin_d.round() as usize;
                    let d_vec = self.doppler.subcarrier_vector(&residuals, row);
                    let r = matched_range(
                        &d_vec,
                        last_static.as_ref(),
                        &self.freqs,
                        det.range_m,
                        native,
                    );
                    det.range_m = r.clamp(0.0, self.config.max_range_m);
                    det.bin_r = det.range_m / spacing;
                }
                dets
            }
            Err(_) => Vec::new(),
        };
        let tracks = self.tracker.update(&detections, batch_timestamp).to_vec();
        let vitals = self.vitals.estimate(&self.config.vitals, self.config.frame_interval_s);
        if self.presence.len() == PRESENCE_WINDOW_BATCHES {
            self.presence.pop_front();
        }
        self.presence.push_back(PresenceEvidence {
            confirmed_track_snr_db: self
                .tracker
                .confirmed()
                .map(|t| t.last().snr_db)
                .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v)))),
            vitals_confidence_db: vitals.map(|v| v.confidence_db),
        });
        let presence = presence_decision(self.presence.make_contiguous());
        timings.detect_ms = ms(t);
        timings.total_ms = ms(start) + ingest_ms;

        let result = BatchResult {
            batch_seq: self.batch_seq,
            config_id: self.config_id,
            map,
            detections,
            tracks,
            vitals,
            presence,
            timings,
            diagnostics: diag,
            csi: snapshot,
        };
        self.batch_seq += 1;
        result
    }
}

/// Resampling and buffering in front of the batch processor.
#[derive(Debug, Clone)]
pub struct Ingest {
    resampler: Resampler,
    buffer: FrameBuffer,
    scratch: Vec<CsiFrame>,
    resyncs: u64,
    n_subcarriers: usize,
    rejected: u64,
}

impl Ingest {
    pub fn new(config: &SensingConfig) -> Self {
        Self {
            resampler: Resampler::new(config.frame_interval_s),
            buffer: FrameBuffer::new(config.buffer_capacity()),
            scratch: Vec::new(),
            resyncs: 0,
            n_subcarriers: config.n_subcarriers,
            rejected: 0,
        }
    }

    pub fn buffer(&self) -> &FrameBuffer {
        &self.buffer
    }

    pub fn resyncs(&self) -> u64 {
        self.resyncs
    }

    /// Frames refused because their length differs from N.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn gap_fills(&self) -> u64 {
        self.resampler.gap_fills()
    }

    /// Resamples one frame into the buffer. A resync error flushes the
    /// buffer; the caller must reset stream state.
    pub fn push(&mut self, frame: CsiFrame) -> Result<(), ResyncError> {
        if frame.csi.len() != self.n_subcarriers {
            self.rejected += 1;
            return Ok(());
        }
        self.scratch.clear();
        let res = self.resampler.push(frame, &mut self.scratch);
        if res.is_err() {
            self.resyncs += 1;
            self.buffer.clear();
            self.scratch.clear();
        }
        for f in self.scratch.drain(..) {
            self.buffer.push(f);
        }
        res
    }

    pub fn flush(&mut self) {
        self.scratch.clear();
        self.resampler.flush(&mut self.scratch);
        for f in self.scratch.drain(..) {
            self.buffer.push(f);
        }
    }

    pub fn take_batch(&mut self, m: usize) -> Option<Vec<CsiFrame>> {
        self.buffer.take_batch(m)
    }
}

/// Single-threaded pipeline: push frames in, get batch results out.
#[derive(Debug, Clone)]
pub struct Pipeline {
    ingest: Ingest,
    processor: BatchProcessor,
    staged: Option<(SensingConfig, u64)>,
    ingest_ms: f64,
    degraded: bool,
}

impl Pipeline {
    pub fn new(config: SensingConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            ingest: Ingest::new(&config),
            processor: BatchProcessor::new(config),
            staged: None,
            ingest_ms: 0.0,
            degraded: false,
        })
    }

    pub fn config(&self) -> &SensingConfig {
        self.processor.config()
    }

    pub fn config_id(&self) -> u64 {
        self.processor.config_id()
    }

    pub fn processor(&self) -> &BatchProcessor {
        &self.processor
    }

    /// True once the stream has needed a resync.
    pub fn degraded(&self) -> bool {
        self.degraded
    }

    pub fn ingest(&self) -> &Ingest {
        &self.ingest
    }

    /// Validates and stages a patch for the next batch boundary. Returns
    /// the config id results will carry once it applies; an empty patch
    /// changes nothing.
    pub fn apply_config_patch(&mut self, patch: &[(String, String)]) -> Result<u64, ConfigError> {
        let (base, base_id) = match &self.staged {
            Some((c, id)) => (c, *id),
            None => (self.processor.config(), self.processor.config_id()),
        };
        let next = base.patched(patch)?;
        if patch.is_empty() {
            return Ok(base_id);
        }
        let id = base_id + 1;
        self.staged = Some((next, id));
        Ok(id)
    }

    /// Feeds one raw frame and returns any batches it completed.
    pub fn push(&mut self, frame: CsiFrame) -> Vec<BatchResult> {
        let t = Instant::now();
        if self.ingest.push(frame).is_err() {
            self.degraded = true;
            self.processor.resync();
        }
        self.ingest_ms += ms(t);
        self.drain()
    }

    /// Flushes the resampler and processes remaining complete batches.
    pub fn finish(&mut self) -> Vec<BatchResult> {
        self.ingest.flush();
        self.drain()
    }

    fn drain(&mut self) -> Vec<BatchResult> {
        let mut out = Vec::new();
        let m = self.processor.config().doppler_batch;
        while let Some(batch) = self.ingest.take_batch(m) {
            if let Some((cfg, id)) = self.staged.take() {
                self.processor.apply_config(cfg, id);
            }
            let ingest_ms = std::mem::take(&mut self.ingest_ms);
            out.push(self.processor.process(
                &batch,
                ingest_ms,
                self.ingest.buffer().dropped(),
                self.ingest.resyncs(),
            ));
        }
        out
    }

    /// Runs a whole frame sequence through the pipeline.
    pub fn run<I: IntoIterator<Item = CsiFrame>>(&mut self, frames: I) -> Vec<BatchResult> {
        let mut out = Vec::new();
        for f in frames {
            out.extend(self.push(f));
        }
        out.extend(self.finish());
        out
    }
}
