//! Breathing-rate estimation from slow-time phase and presence decisions.

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::VitalsConfig;
use crate::dsp;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalsEstimate {
    pub rate_hz: f64,
    /// Spectral peak height over the in-band median, dB.
    pub confidence_db: f64,
    pub window_span_s: f64,
    pub range_bin: usize,
}

/// Why no estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoVitals {
    TooShort,
    UnwrapFailed,
    NotProminent,
}

/// Dominant phase-modulation rate of `series` within `band_hz`.
///
/// The phase is unwrapped, detrended, Hann-windowed and zero-padded to
/// `next_pow2(4·len)` before the spectral peak search.
pub fn vitals_estimate(
    series: &[C64],
    frame_interval_s: f64,
    band_hz: [f64; 2],
    prominence_db: f64,
    range_bin: usize,
) -> Result<VitalsEstimate, NoVitals> {
    let n = series.len();
    if n < 8 {
        return Err(NoVitals::TooShort);
    }
    let raw: Vec<f64> = series.iter().map(|x| x.arg()).collect();
    let unwrapped = dsp::unwrap(&raw);
    if unwrapped.failed() {
        return Err(NoVitals::UnwrapFailed);
    }
    let phase = dsp::detrend(&unwrapped.phase);
    let w = dsp::hann(n);
    let len = (4 * n).next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for i in 0..n {
        buf[i] = C64::new(phase[i] * w[i], 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);

    let df = 1.0 / (len as f64 * frame_interval_s);
    let k_lo = (band_hz[0] / df).ceil().max(1.0) as usize;
    let k_hi = ((band_hz[1] / df).floor() as usize).min(len / 2);
    if k_hi <= k_lo {
        return Err(NoVitals::TooShort);
    }
    let db: Vec<f64> = buf.iter().map(|&x| dsp::mag_db(x)).collect();
    let band = &db[k_lo..=k_hi];
    let mut peak = 0;
    for (i, &v) in band.iter().enumerate() {
        if v > band[peak] {
            peak = i;
        }
    }
    let k = k_lo + peak;
    let prominence = db[k] - dsp::median(band);
    if !(prominence >= prominence_db) || prominence <= 0.0 {
        return Err(NoVitals::NotProminent);
    }
    let off = dsp::parabolic_offset(db[k - 1], db[k], db[k + 1]);
    let rate_hz = ((k as f64 + off) * df).clamp(band_hz[0], band_hz[1]);
    Ok(VitalsEstimate {
        rate_hz,
        confidence_db: prominence,
        window_span_s: n as f64 * frame_interval_s,
        range_bin,
    })
}

/// Algebraic least-squares circle fit. Returns `(centre, radius)`.
pub fn fit_circle(points: &[C64]) -> Option<(C64, f64)> {
    if points.len() < 3 {
        return None;
    }
    // x² + y² + D·x + E·y + F = 0
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for p in points {
        let row = Vector3::new(p.re, p.im, 1.0);
        let z = -(p.re * p.re + p.im * p.im);
        a += row * row.transpose();
        b += row * z;
    }
    let sol = a.lu().solve(&b)?;
    let centre = C64::new(-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = centre.norm_sqr() - sol[2];
    if !(r2 > 0.0) || !r2.is_finite() {
        return None;
    }
    Some((centre, r2.sqrt()))
}

/// Long slow-time history of per-frame range profiles for vitals.
#[derive(Debug, Clone)]
pub struct VitalsBuffer {
    capacity: usize,
    profiles: VecDeque<Vec<C64>>,
}

impl VitalsBuffer {
    pub fn new(window_frames: usize) -> Self {
        Self {
            capacity: window_frames,
            profiles: VecDeque::with_capacity(window_frames),
        }
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.profiles.len() >= self.capacity
    }

    pub fn clear(&mut self) {
        self.profiles.clear();
    }

    pub fn resize(&mut self, window_frames: usize) {
        self.capacity = window_frames;
        while self.profiles.len() > self.capacity {
            self.profiles.pop_front();
        }
    }

    pub fn push(&mut self, profile: Vec<C64>) {
        if self.profiles.len() == self.capacity {
            self.profiles.pop_front();
        }
        self.profiles.push_back(profile);
    }

    pub fn series(&self, bin: usize) -> Vec<C64> {
        self.profiles.iter().map(|p| p[bin]).collect()
    }

    /// Up to three bins with the largest slow-time variance, largest first.
    pub fn candidate_bins(&self) -> Vec<usize> {
        let Some(first) = self.profiles.front() else {
            return Vec::new();
        };
        let n = self.profiles.len() as f64;
        let mut var: Vec<(f64, usize)> = (0..first.len())
            .map(|r| {
                let mean: C64 = self.profiles.iter().map(|p| p[r]).sum::<C64>() / n;
                let v = self.profiles.iter().map(|p| (p[r] - mean).norm_sqr()).sum::<f64>() / n;
                (v, r)
            })
            .collect();
        var.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        var.into_iter().take(3).map(|(_, r)| r).collect()
    }

    /// Best estimate over the candidate bins once the window is full. The
    /// static component of each bin is removed by a circle fit first.
    pub fn estimate(&self, config: &VitalsConfig, frame_interval_s: f64) -> Option<VitalsEstimate> {
        if !self.is_full() {
            return None;
        }
        let mut best: Option<VitalsEstimate> = None;
        for bin in self.candidate_bins() {
            let mut series = self.series(bin);
            if let Some((centre, _)) = fit_circle(&series) {
                series.iter_mut().for_each(|x| *x -= centre);
            }
            if let Ok(est) = vitals_estimate(
                &series,
                frame_interval_s,
                config.band_hz,
                config.prominence_db,
                bin,
            ) {
                if best.is_none_or(|b| est.confidence_db > b.confidence_db) {
                    best = Some(est);
                }
            }
        }
        best
    }
}

/// Per-batch presence evidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PresenceEvidence {
    /// Highest SNR among confirmed tracks, if any.
    pub confirmed_track_snr_db: Option<f64>,
    pub vitals_confidence_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub present: bool,
    pub score: f64,
}

/// Present when any batch in the window had a confirmed track or a vitals
/// estimate. The score is the strongest such evidence in dB.
pub fn presence_decision(window: &[PresenceEvidence]) -> Presence {
    let score = window
        .iter()
        .flat_map(|e| [e.confirmed_track_snr_db, e.vitals_confidence_db])
        .flatten()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    Presence {
        present: score.is_some(),
        score: score.unwrap_or(0.0),
    }
}
