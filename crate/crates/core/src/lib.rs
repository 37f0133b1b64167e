//! Real-time monostatic Wi-Fi sensing engine.
//!
//! Turns a stream of channel state information (CSI) frames into range and
//! Doppler estimates, CFAR detections, tracks, and breathing/presence
//! indicators. The processing chain per frame is
//!
//! ```text
//! CsiFrame ─► resample ─► sync (delay + leak phase) ─► clutter (SIC) ─► range profile ─┐
//!                                                                                     │ M frames
//! BatchResult ◄─ tracks / vitals ◄─ detections ◄─ CFAR ◄─ range–Doppler map ◄─────────┘
//! ```
//!
//! A physics-based CSI simulator ([`simulator`]) produces ground-truth traces
//! with leakage, noise and clock impairments and is used as the oracle for
//! every accuracy test in this crate.

pub mod axes;
pub mod clutter;
pub mod config;
pub mod detect;
pub mod dsp;
pub mod error;
pub mod kv;
pub mod pipeline;
pub mod rdmap;
pub mod simulator;
pub mod sync;
pub mod trace;
pub mod track;
pub mod types;
pub mod vitals;

pub use config::{Mode, SensingConfig};
pub use error::{ConfigError, TraceError};
pub use pipeline::{BatchResult, Pipeline};
pub use types::{CsiFrame, Detection, FrameFlags, RangeDopplerMap, Track, TrackState};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
