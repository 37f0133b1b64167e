//! Fast-time (subcarrier → range) and slow-time (frame → Doppler) transforms.

use std::f64::consts::PI;

use crate::axes;
use crate::clutter::StaticSubspace;
use crate::config::SensingConfig;
use crate::dsp::{self, FftPair};
use crate::types::RangeDopplerMap;
use crate::{C64, SPEED_OF_LIGHT};

/// Subcarrier → range transform for one configuration.
#[derive(Debug, Clone)]
pub struct RangeProcessor {
    decimation: usize,
    window: Vec<f64>,
    norm: f64,
    fft: FftPair,
    bins: usize,
}

impl RangeProcessor {
    /// Hann-windowed processor following the config's mode.
    pub fn new(config: &SensingConfig) -> Self {
        Self::with_params(
            config.n_subcarriers,
            config.mode.subcarrier_decimation(),
            config.zero_pad(),
            axes::range_bins(config),
            true,
        )
    }

    /// `bins` is clamped to the padded transform length.
    pub fn with_params(
        n_subcarriers: usize,
        decimation: usize,
        zero_pad: usize,
        bins: usize,
        windowed: bool,
    ) -> Self {
        let n_eff = n_subcarriers / decimation;
        let window = if windowed {
            dsp::hann(n_eff)
        } else {
            vec![1.0; n_eff]
        };
        let norm = 1.0 / window.iter().sum::<f64>();
        let len = n_eff * zero_pad;
        Self {
            decimation,
            window,
            norm,
            fft: FftPair::new(len),
            bins: bins.min(len),
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Complex range profile, normalised so a unit point target peaks near 1.
    pub fn profile(&self, csi: &[C64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.fft.len()];
        for (j, w) in self.window.iter().enumerate() {
            buf[j] = csi[j * self.decimation] * (w * self.norm);
        }
        self.fft.inverse.process(&mut buf);
        buf.truncate(self.bins);
        buf
    }
}

/// Range profile of one frame under `config`.
pub fn range_profile(csi: &[C64], config: &SensingConfig) -> Vec<C64> {
    RangeProcessor::new(config).profile(csi)
}

/// Slow-time transform over a batch of `M` profiles.
#[derive(Debug, Clone)]
pub struct DopplerProcessor {
    window: Vec<f64>,
    norm: f64,
    fft: FftPair,
}

impl DopplerProcessor {
    pub fn new(m: usize) -> Self {
        let window = dsp::hann(m);
        let norm = 1.0 / window.iter().sum::<f64>();
        Self {
            window,
            norm,
            fft: FftPair::new(m),
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Zero-centred complex spectrum `[velocity_row][range_bin]`. The
    /// transform uses `e^{+j2π m d/M}` so a receding target (range growing)
    /// appears at a positive velocity row.
    pub fn spectrum(&self, profiles: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let m = self.len();
        assert_eq!(profiles.len(), m, "batch must hold exactly M profiles");
        let bins = profiles[0].len();
        let mut out = vec![vec![C64::new(0.0, 0.0); bins]; m];
        let mut col = vec![C64::new(0.0, 0.0); m];
        for r in 0..bins {
            for (i, p) in profiles.iter().enumerate() {
                col[i] = p[r] * (self.window[i] * self.norm);
            }
            self.fft.inverse.process(&mut col);
            for (i, v) in col.iter().enumerate() {
                out[(i + m / 2) % m][r] = *v;
            }
        }
        out
    }

    /// Windowed slow-time spectrum of each subcarrier evaluated at one
    /// velocity row.
    pub fn subcarrier_vector(&self, frames: &[Vec<C64>], row: usize) -> Vec<C64> {
        let m = self.len();
        let d = row as f64 - (m / 2) as f64;
        let n = frames[0].len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, frame) in frames.iter().enumerate() {
            let tw = C64::from_polar(self.window[i] * self.norm, 2.0 * PI * i as f64 * d / m as f64);
            for (o, x) in out.iter_mut().zip(frame) {
                *o += x * tw;
            }
        }
        out
    }
}

/// Builds the dB map from a complex spectrum.
pub fn to_map(
    spectrum: &[Vec<C64>],
    range_axis: Vec<f64>,
    velocity_axis: Vec<f64>,
    batch_seq: u64,
    batch_timestamp: f64,
) -> RangeDopplerMap {
    RangeDopplerMap {
        mag_db: spectrum
            .iter()
            .map(|row| row.iter().map(|&x| dsp::mag_db(x)).collect())
            .collect(),
        range_axis,
        velocity_axis,
        batch_seq,
        batch_timestamp,
    }
}

/// Range–Doppler map of `M` range profiles.
pub fn doppler_process(
    profiles: &[Vec<C64>],
    config: &SensingConfig,
    batch_seq: u64,
    batch_timestamp: f64,
) -> RangeDopplerMap {
    let spec = DopplerProcessor::new(config.doppler_batch).spectrum(profiles);
    let mut range_axis = axes::range_axis(config);
    range_axis.truncate(profiles[0].len());
    to_map(
        &spec,
        range_axis,
        axes::velocity_axis(config),
        batch_seq,
        batch_timestamp,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedPeak {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub bin_r: f64,
    pub bin_d: f64,
    /// False when the peak touched a map edge in either dimension.
    pub refined: bool,
}

/// Three-point parabolic interpolation on the dB map, independently along
/// range and Doppler.
pub fn refine_peak(map: &RangeDopplerMap, bin_r: usize, bin_d: usize) -> RefinedPeak {
    let row = &map.mag_db[bin_d];
    let mut refined = true;
    let off_r = if bin_r >= 1 && bin_r + 1 < row.len() {
        dsp::parabolic_offset(row[bin_r - 1], row[bin_r], row[bin_r + 1])
    } else {
        refined = false;
        0.0
    };
    let m = map.n_doppler();
    let off_d = if bin_d >= 1 && bin_d + 1 < m {
        dsp::parabolic_offset(
            map.mag_db[bin_d - 1][bin_r],
            map.mag_db[bin_d][bin_r],
            map.mag_db[bin_d + 1][bin_r],
        )
    } else {
        refined = false;
        0.0
    };
    let dr = if map.range_axis.len() > 1 {
        map.range_axis[1] - map.range_axis[0]
    } else {
        0.0
    };
    let dv = if m > 1 {
        map.velocity_axis[1] - map.velocity_axis[0]
    } else {
        0.0
    };
    let br = bin_r as f64 + off_r;
    let bd = bin_d as f64 + off_d;
    RefinedPeak {
        range_m: map.range_axis[0] + br * dr,
        velocity_mps: map.velocity_axis[0] + bd * dv,
        bin_r: br,
        bin_d: bd,
        refined,
    }
}

/// Range estimate that accounts for the projection onto the static
/// subspace.
///
/// `doppler_vec` is the per-subcarrier slow-time spectrum at the detection's
/// velocity row, computed from projected residual frames. The score
/// `|⟨t(ρ), D⟩|² / ‖P t(ρ)‖²` is the matched-filter output against the
/// projected steering vector `P t(ρ)`, `t(ρ) = e^{−j4π f_k ρ/c}`. It is
/// searched on a fine grid within one native resolution cell of `coarse_m`
/// and then polished by golden-section search.
pub fn matched_range(
    doppler_vec: &[C64],
    static_space: Option<&StaticSubspace>,
    freqs: &[f64],
    coarse_m: f64,
    native_spacing_m: f64,
) -> f64 {
    let n = freqs.len() as f64;
    let mut t = vec![C64::new(0.0, 0.0); freqs.len()];
    let mut score = |rho: f64| -> f64 {
        let k = -4.0 * PI * rho / SPEED_OF_LIGHT;
        for (x, f) in t.iter_mut().zip(freqs) {
            *x = C64::from_polar(1.0, k * f);
        }
        let num: C64 = t.iter().zip(doppler_vec).map(|(a, d)| a.conj() * d).sum();
        let den = n - static_space.map_or(0.0, |s| s.energy_in(&t));
        if den > 1e-3 * n {
            num.norm_sqr() / den
        } else {
            0.0
        }
    };

    let lo = (coarse_m - native_spacing_m).max(0.0);
    let hi = coarse_m + native_spacing_m;
    let step = native_spacing_m / 40.0;
    let count = ((hi - lo) / step).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let v = score(g);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    if best_val <= 0.0 {
        return coarse_m;
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    const G: f64 = 0.381_966_011_250_105_1;
    let mut x1 = a + G * (b - a);
    let mut x2 = b - G * (b - a);
    let mut f1 = score(x1);
    let mut f2 = score(x2);
    for _ in 0..40 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - G * (b - a);
            f2 = score(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + G * (b - a);
            f1 = score(x1);
        }
    }
    0.5 * (a + b)
}
