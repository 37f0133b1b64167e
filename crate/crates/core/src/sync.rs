//! Per-frame delay and phase alignment against a reference frame.
//!
//! Each frame goes through three stages. A circular cross-correlation of
//! the delay profiles removes the integer-sample delay. A phase-slope fit
//! removes the fractional delay. Finally the phase of the leakage tap is
//! rotated back to its value in the reference frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::SensingConfig;
use crate::dsp::{self, FftPair};
use crate::types::CsiFrame;
use crate::C64;

/// Correlation peak ratio below which a coarse estimate is not trusted.
pub const MIN_PEAK_RATIO: f64 = 1.2;
/// Required leakage dominance over the next strongest tap (6 dB in magnitude).
pub const LEAK_DOMINANCE: f64 = 1.995_262_314_968_879_5;
/// Leakage is searched for in taps `0..=LEAK_SEARCH_BINS`.
pub const LEAK_SEARCH_BINS: usize = 2;

const MAX_PEAK_RATIO: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseDelay {
    /// Signed delay of the frame relative to the reference, in samples of 1/B.
    pub samples: i64,
    pub peak_ratio: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineDelay {
    pub delay_s: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncDiagnostics {
    pub last_coarse_delay_samples: i64,
    pub last_fine_delay_s: f64,
    pub corr_peak_ratio: f64,
    pub low_confidence_frames: u64,
    pub reanchors: u64,
}

fn inverse(fft: &FftPair, x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    fft.inverse.process(&mut buf);
    let scale = 1.0 / x.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Largest magnitude among taps outside `peak ± 1` (circular).
fn strongest_outside(mag: &[f64], peak: usize) -> f64 {
    let n = mag.len();
    mag.iter()
        .enumerate()
        .filter(|(i, _)| {
            let d = (*i + n - peak) % n;
            d > 1 && d < n - 1
        })
        .map(|(_, &v)| v)
        .fold(0.0, f64::max)
}

fn coarse_with(fft: &FftPair, frame: &[C64], reference: &[C64]) -> CoarseDelay {
    let n = frame.len();
    let cross: Vec<C64> = frame
        .iter()
        .zip(reference)
        .map(|(a, b)| a * b.conj())
        .collect();
    let corr = inverse(fft, &cross);
    let mag: Vec<f64> = corr.iter().map(|c| c.norm()).collect();
    let mut peak = 0;
    for (i, &v) in mag.iter().enumerate() {
        if v > mag[peak] {
            peak = i;
        }
    }
    let second = strongest_outside(&mag, peak);
    let peak_ratio = if second > 0.0 {
        (mag[peak] / second).min(MAX_PEAK_RATIO)
    } else if mag[peak] > 0.0 {
        MAX_PEAK_RATIO
    } else {
        1.0
    };
    let signed = if peak > n / 2 {
        peak as i64 - n as i64
    } else {
        peak as i64
    };
    if peak_ratio < MIN_PEAK_RATIO {
        CoarseDelay {
            samples: 0,
            peak_ratio,
            low_confidence: true,
        }
    } else {
        CoarseDelay {
            samples: signed,
            peak_ratio,
            low_confidence: false,
        }
    }
}

/// Integer delay of `frame` relative to `reference` from the circular
/// cross-correlation of their delay profiles.
pub fn coarse_delay(frame: &[C64], reference: &[C64]) -> CoarseDelay {
    assert_eq!(frame.len(), reference.len(), "frame length mismatch");
    coarse_with(&FftPair::new(frame.len()), frame, reference)
}

/// Fractional delay from the slope of the cross-phase across subcarriers.
/// `freqs` are the baseband subcarrier frequencies and `bandwidth_hz` bounds
/// the valid estimate.
pub fn fine_delay(frame: &[C64], reference: &[C64], freqs: &[f64], bandwidth_hz: f64) -> FineDelay {
    let fail = FineDelay {
        delay_s: 0.0,
        failed: true,
    };
    let mags: Vec<f64> = frame.iter().map(|x| x.norm()).collect();
    let floor = 0.1 * dsp::median(&mags);
    let mut f = Vec::with_capacity(frame.len());
    let mut raw = Vec::with_capacity(frame.len());
    let mut w = Vec::with_capacity(frame.len());
    for k in 0..frame.len() {
        if mags[k] > floor {
            let cross = frame[k] * reference[k].conj();
            f.push(freqs[k]);
            raw.push(cross.arg());
            w.push(cross.norm());
        }
    }
    if f.len() < 2 {
        return fail;
    }
    let unwrapped = dsp::unwrap(&raw);
    if unwrapped.failed() {
        return fail;
    }
    let Some((_, slope)) = dsp::weighted_line_fit(&f, &unwrapped.phase, &w) else {
        return fail;
    };
    let delay_s = -slope / (2.0 * PI);
    if !delay_s.is_finite() || delay_s.abs() >= 1.0 / bandwidth_hz {
        return fail;
    }
    FineDelay {
        delay_s,
        failed: false,
    }
}

/// Multiplies subcarrier `k` by `e^{+j2π f_k d}`, advancing the frame by `d`.
pub fn apply_delay(frame: &CsiFrame, delay_s: f64, freqs: &[f64]) -> CsiFrame {
    let mut out = frame.clone();
    apply_delay_in_place(&mut out.csi, delay_s, freqs);
    out
}

fn apply_delay_in_place(csi: &mut [C64], delay_s: f64, freqs: &[f64]) {
    if delay_s == 0.0 {
        return;
    }
    for (x, &f) in csi.iter_mut().zip(freqs) {
        *x *= C64::from_polar(1.0, 2.0 * PI * f * delay_s);
    }
}

/// Leakage tap (strongest of taps `0..=2`) and whether it dominates every
/// tap outside its ±1 neighbourhood by 6 dB.
fn leak_tap(h: &[C64]) -> (usize, bool) {
    let mag: Vec<f64> = h.iter().map(|c| c.norm()).collect();
    let hi = LEAK_SEARCH_BINS.min(h.len() - 1);
    let mut tap = 0;
    for r in 1..=hi {
        if mag[r] > mag[tap] {
            tap = r;
        }
    }
    (tap, dominant(&mag, tap))
}

fn dominant(mag: &[f64], tap: usize) -> bool {
    mag[tap] > 0.0 && mag[tap] >= LEAK_DOMINANCE * strongest_outside(mag, tap)
}

/// Alignment state for one stream.
#[derive(Debug, Clone)]
pub struct SyncState {
    fft: FftPair,
    freqs: Vec<f64>,
    bandwidth_hz: f64,
    reanchor_after: usize,
    reference: Option<Vec<C64>>,
    leak_tap: usize,
    reference_leak_phase: f64,
    consecutive_low: usize,
    pub diagnostics: SyncDiagnostics,
}

impl SyncState {
    pub fn new(config: &SensingConfig) -> Self {
        Self {
            fft: FftPair::new(config.n_subcarriers),
            freqs: config.subcarrier_freqs(),
            bandwidth_hz: config.bandwidth_hz,
            reanchor_after: 2 * config.doppler_batch,
            reference: None,
            leak_tap: 0,
            reference_leak_phase: 0.0,
            consecutive_low: 0,
            diagnostics: SyncDiagnostics::default(),
        }
    }

    pub fn has_reference(&self) -> bool {
        self.reference.is_some()
    }

    pub fn reference(&self) -> Option<&[C64]> {
        self.reference.as_deref()
    }

    pub fn reference_leak_phase(&self) -> f64 {
        self.reference_leak_phase
    }

    pub fn leak_tap_index(&self) -> usize {
        self.leak_tap
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Drops the reference; the next acceptable frame becomes the new one.
    pub fn reset(&mut self) {
        self.reference = None;
        self.consecutive_low = 0;
    }

    /// Tries to adopt `csi` as the reference. Needs a dominant leakage tap.
    fn anchor(&mut self, csi: &[C64]) -> bool {
        let h = inverse(&self.fft, csi);
        let (tap, ok) = leak_tap(&h);
        if ok {
            self.reference = Some(csi.to_vec());
            self.leak_tap = tap;
            self.reference_leak_phase = h[tap].arg();
            self.consecutive_low = 0;
        }
        ok
    }

    /// Rotates the frame so its leakage tap phase equals the reference's.
    /// Returns false (frame untouched) without a dominant leakage tap.
    pub fn phase_correct(&self, csi: &mut [C64]) -> bool {
        let h = inverse(&self.fft, csi);
        let mag: Vec<f64> = h.iter().map(|c| c.norm()).collect();
        if !dominant(&mag, self.leak_tap) {
            return false;
        }
        let rot = C64::from_polar(1.0, -(h[self.leak_tap].arg() - self.reference_leak_phase));
        csi.iter_mut().for_each(|x| *x *= rot);
        true
    }

    /// Full alignment of one frame. Problems set `low_confidence` on the
    /// returned frame; the stream is never interrupted.
    pub fn process(&mut self, frame: &CsiFrame) -> CsiFrame {
        let mut out = frame.clone();
        if self.reference.is_none() {
            if !self.anchor(&frame.csi) {
                out.flags.set_low_confidence();
                self.diagnostics.low_confidence_frames += 1;
            }
            return out;
        }
        let reference = self.reference.as_ref().expect("checked above");

        let coarse = coarse_with(&self.fft, &out.csi, reference);
        self.diagnostics.corr_peak_ratio = coarse.peak_ratio;
        self.diagnostics.last_coarse_delay_samples = coarse.samples;
        let mut low = coarse.low_confidence;
        apply_delay_in_place(&mut out.csi, coarse.samples as f64 / self.bandwidth_hz, &self.freqs);

        let fine = fine_delay(&out.csi, reference, &self.freqs, self.bandwidth_hz);
        low |= fine.failed;
        self.diagnostics.last_fine_delay_s = fine.delay_s;
        apply_delay_in_place(&mut out.csi, fine.delay_s, &self.freqs);

        low |= !self.phase_correct(&mut out.csi);

        if low {
            out.flags.set_low_confidence();
            self.diagnostics.low_confidence_frames += 1;
        }
        if coarse.low_confidence {
            self.consecutive_low += 1;
            if self.consecutive_low >= self.reanchor_after {
                self.diagnostics.reanchors += 1;
                self.reference = None;
                self.consecutive_low = 0;
            }
        } else {
            self.consecutive_low = 0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_frame, ImpairmentModel, Scene, TargetSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SensingConfig {
        SensingConfig::default()
    }

    fn scene() -> Scene {
        Scene {
            targets: vec![TargetSpec::new(1.3, 0.0, 0.2), TargetSpec::new(2.7, 0.0, 0.1)],
            impairments: ImpairmentModel {
                leakage: crate::simulator::Leakage {
                    amplitude: 1.0,
                    delay_s: 0.7e-9,
                },
                ..ImpairmentModel::clean()
            },
            rng_seed: 5,
        }
    }

    fn delayed(x: &[C64], freqs: &[f64], d: f64, phi: f64) -> Vec<C64> {
        x.iter()
            .zip(freqs)
            .map(|(x, f)| x * C64::from_polar(1.0, phi - 2.0 * PI * f * d))
            .collect()
    }

    #[test]
    fn coarse_identity_and_shift() {
        let c = cfg();
        let x = generate_frame(&scene(), &c, 0).csi;
        assert_eq!(coarse_delay(&x, &x).samples, 0);
        let shifted = delayed(&x, &c.subcarrier_freqs(), 3.0 / c.bandwidth_hz, 0.0);
        let est = coarse_delay(&shifted, &x);
        assert_eq!(est.samples, 3);
        assert!(!est.low_confidence);
    }

    #[test]
    fn coarse_matches_brute_force() {
        let c = cfg();
        let freqs = c.subcarrier_freqs();
        let x = generate_frame(&scene(), &c, 0).csi;
        let y = delayed(&x, &freqs, -17.0 / c.bandwidth_hz, 0.4);
        let hx = dsp::idft(&x);
        let hy = dsp::idft(&y);
        let n = x.len();
        let mut best = (0usize, 0.0);
        for l in 0..n {
            let s: C64 = (0..n).map(|r| hy[r] * hx[(r + n - l) % n].conj()).sum();
            if s.norm() > best.1 {
                best = (l, s.norm());
            }
        }
        let brute = if best.0 > n / 2 { best.0 as i64 - n as i64 } else { best.0 as i64 };
        assert_eq!(coarse_delay(&y, &x).samples, brute);
        assert_eq!(brute, -17);
    }

    #[test]
    fn noise_is_mostly_low_confidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut noise = || -> Vec<C64> {
            (0..512)
                .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect()
        };
        let mut flagged = 0;
        for _ in 0..20 {
            let (a, b) = (noise(), noise());
            if coarse_delay(&a, &b).low_confidence {
                flagged += 1;
            }
        }
        // Top-two spacing of 512 Rayleigh magnitudes exceeds 1.2 now and then.
        assert!(flagged >= 14, "{flagged}");
    }

    #[test]
    fn fine_delay_exact_noiseless() {
        let c = cfg();
        let freqs = c.subcarrier_freqs();
        let x = generate_frame(&scene(), &c, 0).csi;
        let y = delayed(&x, &freqs, -1.0e-9, 0.0);
        let est = fine_delay(&y, &x, &freqs, c.bandwidth_hz);
        assert!(!est.failed);
        assert!((est.delay_s + 1.0e-9).abs() < 1e-15);
        assert_eq!(fine_delay(&x, &x, &freqs, c.bandwidth_hz).delay_s, 0.0);
    }

    #[test]
    fn apply_delay_round_trip() {
        let c = cfg();
        let freqs = c.subcarrier_freqs();
        let f = generate_frame(&scene(), &c, 0);
        assert_eq!(apply_delay(&f, 0.0, &freqs), f);
        let back = apply_delay(&apply_delay(&f, 2.3e-9, &freqs), -2.3e-9, &freqs);
        for (a, b) in back.csi.iter().zip(&f.csi) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn phase_correct_removes_common_phase() {
        let c = cfg();
        let x = generate_frame(&scene(), &c, 0);
        let mut st = SyncState::new(&c);
        st.process(&x);
        let mut y: Vec<C64> = x.csi.iter().map(|v| v * C64::from_polar(1.0, 1.234)).collect();
        assert!(st.phase_correct(&mut y));
        for (a, b) in y.iter().zip(&x.csi) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn chain_recovers_reference() {
        let c = cfg();
        let freqs = c.subcarrier_freqs();
        let x = generate_frame(&scene(), &c, 0);
        let mut st = SyncState::new(&c);
        st.process(&x);
        let energy: f64 = x.csi.iter().map(|v| v.norm_sqr()).sum();
        for (d, phi) in [(2.0e-9, 0.3), (-3.0e-9, -2.9), (0.4e-9, 1.7)] {
            let y = CsiFrame::new(0.025, 1, delayed(&x.csi, &freqs, d, phi));
            let out = st.process(&y);
            assert!(!out.flags.low_confidence());
            let err: f64 = out.csi.iter().zip(&x.csi).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(10.0 * (err / energy).log10() < -60.0);
        }
    }

    #[test]
    fn no_leakage_is_flagged() {
        let c = cfg();
        let mut s = scene();
        s.impairments.leakage.amplitude = 0.0;
        s.targets = vec![TargetSpec::new(4.0, 0.0, 0.2)];
        let mut st = SyncState::new(&c);
        let out = st.process(&generate_frame(&s, &c, 0));
        assert!(out.flags.low_confidence());
        assert!(!st.has_reference());
    }
}
