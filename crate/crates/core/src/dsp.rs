//! Small numeric helpers shared by the processing stages.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::C64;

/// Periodic (DFT-even) Hann window of length `n`.
///
/// Coherent gain is exactly 0.5 and the equivalent noise bandwidth exactly
/// 1.5 bins, so an on-grid tone leaks only into the two adjacent bins.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// `20·log10(|x| + ε)` with ε = 1e-12, finite for exact zeros.
pub fn mag_db(x: C64) -> f64 {
    20.0 * (x.norm() + 1e-12).log10()
}

/// Wraps an angle into (-π, π].
pub fn wrap_phase(mut p: f64) -> f64 {
    while p > PI {
        p -= 2.0 * PI;
    }
    while p <= -PI {
        p += 2.0 * PI;
    }
    p
}

/// Result of a sequential phase unwrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped {
    pub phase: Vec<f64>,
    /// Number of adjacent pairs whose raw phase difference exceeded π.
    pub jumps: usize,
}

impl Unwrapped {
    /// True when more than 10% of adjacent pairs needed a 2π correction.
    pub fn failed(&self) -> bool {
        let pairs = self.phase.len().saturating_sub(1);
        pairs > 0 && self.jumps * 10 > pairs
    }
}

/// Standard sequential unwrap with a π jump threshold.
pub fn unwrap(raw: &[f64]) -> Unwrapped {
    let mut phase = Vec::with_capacity(raw.len());
    let mut jumps = 0;
    let mut offset = 0.0;
    for (i, &p) in raw.iter().enumerate() {
        if i > 0 {
            let d = p - raw[i - 1];
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
                jumps += 1;
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
                jumps += 1;
            }
        }
        phase.push(p + offset);
    }
    Unwrapped { phase, jumps }
}

/// Weighted least-squares line fit `y ≈ a + b·x`. Returns `(a, b)`, or
/// `None` when the abscissae are degenerate.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Removes the least-squares line from `y` (uniformly spaced samples).
pub fn detrend(y: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    let w = vec![1.0; y.len()];
    match weighted_line_fit(&x, y, &w) {
        Some((a, b)) => y.iter().zip(&x).map(|(y, x)| y - a - b * x).collect(),
        None => y.to_vec(),
    }
}

/// Vertex offset of a parabola through three equally spaced samples,
/// clamped to [-0.5, 0.5]. Zero when the samples are not a strict maximum.
pub fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if !(denom < 0.0) || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Median of a slice (average of the two middle elements for even length).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Cached forward/inverse FFT plans of one size.
#[derive(Clone)]
pub struct FftPair {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len()).finish()
    }
}

/// Normalised inverse DFT, `h[r] = (1/N) Σ_k x[k]·e^{+j2πkr/N}`.
pub fn idft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let scale = 1.0 / x.len() as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}
