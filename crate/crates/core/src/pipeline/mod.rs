//! Streaming orchestration: resampling, buffering, batch processing and the
//! threaded runtime.

pub mod buffer;
pub mod engine;
pub mod resample;
pub mod runtime;
pub mod source;

pub use buffer::FrameBuffer;
pub use engine::{BatchDiagnostics, BatchProcessor, BatchResult, CsiSnapshot, Ingest, Pipeline, Timings};
pub use resample::{Resampler, ResyncError};
pub use runtime::{ControlHandle, RunSummary, Runtime, RuntimeStats};
