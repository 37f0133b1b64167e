//! Offline trace analysis: one JSON dump and one PGM heatmap per batch.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;

use livesense_core::trace::TraceReader;
use livesense_core::{BatchResult, Pipeline, RangeDopplerMap};
use serde::Serialize;

use crate::commands::{load_config, AnalyzeArgs};
use crate::CliError;

/// Grey levels span this many dB below the map peak.
pub const PGM_DYNAMIC_RANGE_DB: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeSummary {
    pub frames: u64,
    pub batches: u64,
    pub degraded: bool,
    pub resyncs: u64,
    pub files: Vec<PathBuf>,
}

/// Binary PGM (P5) of the map. Highest velocity is the top row, range grows
/// to the right.
pub fn pgm(map: &RangeDopplerMap) -> Vec<u8> {
    let (h, w) = (map.n_doppler(), map.n_range());
    let peak = map
        .mag_db
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = peak - PGM_DYNAMIC_RANGE_DB;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in map.mag_db.iter().rev() {
        out.extend(row.iter().map(|&v| {
            if !v.is_finite() || !peak.is_finite() {
                0
            } else {
                (255.0 * ((v - floor) / PGM_DYNAMIC_RANGE_DB).clamp(0.0, 1.0)).round() as u8
            }
        }));
    }
    out
}

fn write_batch(dir: &std::path::Path, r: &BatchResult, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let stem = format!("batch_{:05}", r.batch_seq);
    let json = dir.join(format!("{stem}.json"));
    let body = serde_json::to_vec_pretty(&r.without_timings()).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&json, body)?;
    let img = dir.join(format!("{stem}.pgm"));
    fs::write(&img, pgm(&r.map))?;
    files.push(json);
    files.push(img);
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<AnalyzeSummary, CliError> {
    let mut config = load_config(args.config.as_deref(), args.mode)?;
    let file = File::open(&args.trace).map_err(|e| CliError::Io(format!("{}: {e}", args.trace.display())))?;
    let reader = TraceReader::new(BufReader::new(file))?;
    reader.header().apply_to(&mut config);
    config.validate()?;
    fs::create_dir_all(&args.out_dir)?;

    let mut pipeline = Pipeline::new(config.clone())?;
    let mut files = Vec::new();
    let mut frames = 0;
    let mut batches = 0;
    let mut failure = None;
    for item in reader {
        match item {
            Ok(frame) => {
                frames += 1;
                for r in pipeline.push(frame) {
                    write_batch(&args.out_dir, &r, &mut files)?;
                    batches += 1;
                }
            }
            Err(e) => {
                failure = Some(CliError::from(e));
                break;
            }
        }
    }
    for r in pipeline.finish() {
        write_batch(&args.out_dir, &r, &mut files)?;
        batches += 1;
    }
    let summary = AnalyzeSummary {
        frames,
        batches,
        degraded: pipeline.degraded(),
        resyncs: pipeline.ingest().resyncs(),
        files,
    };
    let index = args.out_dir.join("summary.json");
    let body = serde_json::json!({ "summary": &summary, "config": &config });
    fs::write(&index, serde_json::to_vec_pretty(&body).map_err(|e| CliError::Io(e.to_string()))?)?;
    if let Some(e) = failure {
        return Err(e);
    }
    if summary.degraded {
        return Err(CliError::Degraded(format!("{} resyncs", summary.resyncs)));
    }
    Ok(summary)
}
