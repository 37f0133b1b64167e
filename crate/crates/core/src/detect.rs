//! Noise floor, 2-D cell-averaging CFAR and detection extraction.

use std::collections::VecDeque;

use thiserror::Error;

use crate::config::CfarConfig;
use crate::dsp;
use crate::rdmap::refine_peak;
use crate::types::{Detection, RangeDopplerMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("map has no nonzero cells outside the zero-velocity row")]
    DegenerateMap,
}

/// Power below which a cell counts as exactly zero (the dB floor of ε = 1e-12).
const ZERO_POWER: f64 = 1.000_001e-24;

/// CFAR window in map cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarParams {
    pub guard_r: usize,
    pub guard_d: usize,
    pub train_r: usize,
    pub train_d: usize,
    pub pfa: f64,
}

impl CfarParams {
    /// Window for a map zero-padded by `zero_pad`: range cells in the config
    /// are native resolution cells.
    pub fn from_config(cfar: &CfarConfig, zero_pad: usize) -> Self {
        Self {
            guard_r: cfar.guard_r * zero_pad,
            guard_d: cfar.guard_d,
            train_r: cfar.train_r * zero_pad,
            train_d: cfar.train_d,
            pfa: cfar.pfa,
        }
    }
}

/// CA-CFAR scale factor for `n_train` exponential training cells.
pub fn threshold_factor(n_train: usize, pfa: f64) -> f64 {
    let n = n_train as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

fn power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Mean noise power in dB: median cell power (zero row and top 1% excluded)
/// divided by ln 2, the median/mean ratio of an exponential variable.
pub fn noise_floor(map: &RangeDopplerMap) -> Result<f64, DetectError> {
    let zero = map.zero_row();
    let mut p: Vec<f64> = map
        .mag_db
        .iter()
        .enumerate()
        .filter(|(d, _)| *d != zero)
        .flat_map(|(_, row)| row.iter().map(|&v| power(v)))
        .collect();
    if p.iter().all(|&v| v <= ZERO_POWER) {
        return Err(DetectError::DegenerateMap);
    }
    p.sort_by(|a, b| a.total_cmp(b));
    let keep = p.len() - p.len() / 100;
    p.truncate(keep);
    let med = dsp::median(&p);
    Ok(10.0 * (med / std::f64::consts::LN_2).log10())
}

/// Summed-area table with a zero border: `t[(d+1)*(w+1) + r+1]` is the sum
/// over rows `..=d` and columns `..=r`.
struct Integral {
    w: usize,
    t: Vec<f64>,
}

impl Integral {
    fn new(rows: &[Vec<f64>]) -> Self {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        let mut t = vec![0.0; (h + 1) * (w + 1)];
        for d in 0..h {
            let mut acc = 0.0;
            for r in 0..w {
                acc += rows[d][r];
                t[(d + 1) * (w + 1) + r + 1] = t[d * (w + 1) + r + 1] + acc;
            }
        }
        Self { w, t }
    }

    /// Sum over the inclusive rectangle.
    fn sum(&self, d0: usize, d1: usize, r0: usize, r1: usize) -> f64 {
        let w = self.w + 1;
        self.t[(d1 + 1) * w + r1 + 1] - self.t[d0 * w + r1 + 1] - self.t[(d1 + 1) * w + r0]
            + self.t[d0 * w + r0]
    }
}

/// Hit mask `[velocity_row][range_bin]`. The training window is clipped at
/// map edges and never includes the zero-velocity row, which is itself
/// never a hit.
pub fn cfar_detect(map: &RangeDopplerMap, params: &CfarParams) -> Vec<Vec<bool>> {
    let h = map.n_doppler();
    let w = map.n_range();
    let zero = map.zero_row();
    let mut pw = vec![vec![0.0; w]; h];
    let mut valid = vec![vec![0.0; w]; h];
    for d in 0..h {
        if d == zero {
            continue;
        }
        for r in 0..w {
            pw[d][r] = power(map.mag_db[d][r]);
            valid[d][r] = 1.0;
        }
    }
    let sp = Integral::new(&pw);
    let sc = Integral::new(&valid);

    let outer_d = params.guard_d + params.train_d;
    let outer_r = params.guard_r + params.train_r;
    let mut mask = vec![vec![false; w]; h];
    for d in 0..h {
        if d == zero {
            continue;
        }
        let (od0, od1) = (d.saturating_sub(outer_d), (d + outer_d).min(h - 1));
        let (gd0, gd1) = (d.saturating_sub(params.guard_d), (d + params.guard_d).min(h - 1));
        for r in 0..w {
            let (or0, or1) = (r.saturating_sub(outer_r), (r + outer_r).min(w - 1));
            let (gr0, gr1) = (r.saturating_sub(params.guard_r), (r + params.guard_r).min(w - 1));
            let n_train = sc.sum(od0, od1, or0, or1) - sc.sum(gd0, gd1, gr0, gr1);
            let n_train = n_train.round() as usize;
            if n_train == 0 {
                continue;
            }
            let total = sp.sum(od0, od1, or0, or1) - sp.sum(gd0, gd1, gr0, gr1);
            let mean = total.max(0.0) / n_train as f64;
            let alpha = threshold_factor(n_train, params.pfa);
            mask[d][r] = pw[d][r] > alpha * mean;
        }
    }
    mask
}

/// One detection per 8-connected component of hits, placed at the
/// component's strongest cell and refined by parabolic interpolation.
/// Sorted by descending SNR.
pub fn extract_detections(
    map: &RangeDopplerMap,
    mask: &[Vec<bool>],
    noise_floor_db: f64,
    max_range_m: f64,
) -> Vec<Detection> {
    let h = mask.len();
    let w = mask.first().map_or(0, Vec::len);
    let mut seen = vec![vec![false; w]; h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for d0 in 0..h {
        for r0 in 0..w {
            if !mask[d0][r0] || seen[d0][r0] {
                continue;
            }
            seen[d0][r0] = true;
            queue.push_back((d0, r0));
            let mut best = (d0, r0);
            while let Some((d, r)) = queue.pop_front() {
                if map.mag_db[d][r] > map.mag_db[best.0][best.1] {
                    best = (d, r);
                }
                for dd in d.saturating_sub(1)..=(d + 1).min(h - 1) {
                    for rr in r.saturating_sub(1)..=(r + 1).min(w - 1) {
                        if mask[dd][rr] && !seen[dd][rr] {
                            seen[dd][rr] = true;
                            queue.push_back((dd, rr));
                        }
                    }
                }
            }
            let (d, r) = best;
            let p = refine_peak(map, r, d);
            out.push(Detection {
                range_m: p.range_m.clamp(0.0, max_range_m),
                velocity_mps: p.velocity_mps,
                snr_db: map.mag_db[d][r] - noise_floor_db,
                bin_r: p.bin_r,
                bin_d: p.bin_d,
                timestamp: map.batch_timestamp,
            });
        }
    }
    out.sort_by(|a, b| b.snr_db.total_cmp(&a.snr_db));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn noise_map(h: usize, w: usize, mean: f64, seed: u64) -> RangeDopplerMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mag_db = (0..h)
            .map(|_| {
                (0..w)
                    .map(|_| {
                        let p: f64 = Exp1.sample(&mut rng);
                        10.0 * (p * mean).log10()
                    })
                    .collect()
            })
            .collect();
        RangeDopplerMap {
            mag_db,
            range_axis: (0..w).map(|i| i as f64 * 0.1).collect(),
            velocity_axis: (0..h).map(|i| (i as f64 - (h / 2) as f64) * 0.03).collect(),
            batch_seq: 0,
            batch_timestamp: 0.0,
        }
    }

    fn params(pfa: f64) -> CfarParams {
        CfarParams {
            guard_r: 1,
            guard_d: 1,
            train_r: 3,
            train_d: 3,
            pfa,
        }
    }

    #[test]
    fn threshold_factor_limits() {
        // large N_t tends to -ln(pfa)
        assert!((threshold_factor(1_000_000, 1e-3) - 1e-3f64.ln().abs()).abs() < 1e-3);
        // N_t = 1: pfa = 1/(1+α)
        assert!((threshold_factor(1, 0.01) - 99.0).abs() < 1e-9);
    }

    #[test]
    fn floor_tracks_mean() {
        let map = noise_map(64, 64, 0.01, 1);
        let floor = noise_floor(&map).unwrap();
        assert!((floor + 20.0).abs() < 1.0, "{floor}");
        let mut peaked = map.clone();
        peaked.mag_db[3][10] = floor + 20.0;
        let moved = noise_floor(&peaked).unwrap();
        assert!((moved - floor).abs() < 0.2);
    }

    #[test]
    fn zero_map_errors_and_has_no_hits() {
        let map = RangeDopplerMap {
            mag_db: vec![vec![-240.0; 8]; 8],
            range_axis: (0..8).map(|i| i as f64).collect(),
            velocity_axis: (0..8).map(|i| i as f64).collect(),
            batch_seq: 0,
            batch_timestamp: 0.0,
        };
        assert_eq!(noise_floor(&map), Err(DetectError::DegenerateMap));
        let mask = cfar_detect(&map, &params(1e-3));
        assert!(mask.iter().flatten().all(|h| !h));
    }

    #[test]
    fn false_alarm_rate() {
        let mut hits = 0usize;
        let mut cells = 0usize;
        for seed in 0..40 {
            let map = noise_map(64, 64, 1.0, seed);
            let mask = cfar_detect(&map, &params(1e-2));
            hits += mask.iter().flatten().filter(|h| **h).count();
            cells += 63 * 64;
        }
        let rate = hits as f64 / cells as f64;
        assert!(rate > 1e-2 / 3.0 && rate < 3e-2, "{rate}");
    }

    #[test]
    fn single_peak_is_isolated() {
        let mut map = noise_map(32, 32, 1e-4, 3);
        map.mag_db[10][12] = -40.0 + 20.0;
        let mask = cfar_detect(&map, &params(1e-4));
        assert!(mask[10][12]);
        for d in 0..32 {
            for r in 0..32 {
                if mask[d][r] {
                    assert!(d.abs_diff(10) <= 1 && r.abs_diff(12) <= 1, "({d},{r})");
                }
            }
        }
        assert!(mask[16].iter().all(|h| !h));
    }

    #[test]
    fn components() {
        let map = noise_map(8, 8, 1.0, 4);
        let empty = vec![vec![false; 8]; 8];
        assert!(extract_detections(&map, &empty, 0.0, 10.0).is_empty());
        let mut mask = empty.clone();
        let mut m2 = map.clone();
        mask[2][3] = true;
        mask[2][4] = true;
        mask[3][5] = true;
        m2.mag_db[2][4] = 50.0;
        mask[6][0] = true;
        let dets = extract_detections(&m2, &mask, 0.0, 10.0);
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].snr_db, 50.0);
        assert!((dets[0].bin_r - 4.0).abs() <= 0.5);
    }
}
