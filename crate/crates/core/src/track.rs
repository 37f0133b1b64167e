//! Greedy nearest-neighbour multi-target tracker with alpha-beta smoothing.

use crate::config::TrackConfig;
use crate::types::{Detection, Track, TrackPoint, TrackState};

const ALPHA: f64 = 0.5;
const BETA: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: &TrackConfig) -> Self {
        Self {
            config: config.clone(),
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn set_config(&mut self, config: &TrackConfig) {
        self.config = config.clone();
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.state == TrackState::Confirmed)
    }

    pub fn clear(&mut self) {
        self.tracks.clear();
    }

    fn distance(&self, pred: (f64, f64), det: &Detection) -> f64 {
        (det.range_m - pred.0).abs() / self.config.gate_range_m
            + (det.velocity_mps - pred.1).abs() / self.config.gate_vel_mps
    }

    /// Associates one batch of detections observed at time `t`. Tracks that
    /// died in the previous update are removed first.
    pub fn update(&mut self, detections: &[Detection], t: f64) -> &[Track] {
        self.tracks.retain(|tr| tr.state != TrackState::Dead);

        let preds: Vec<(f64, f64, f64)> = self
            .tracks
            .iter()
            .map(|tr| {
                let p = tr.last();
                let dt = t - p.timestamp;
                (p.range_m + p.velocity_mps * dt, p.velocity_mps, dt)
            })
            .collect();

        let mut pairs = Vec::new();
        for (i, pred) in preds.iter().enumerate() {
            for (j, det) in detections.iter().enumerate() {
                let d = self.distance((pred.0, pred.1), det);
                if d < 1.0 {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_used = vec![false; self.tracks.len()];
        let mut det_used = vec![false; detections.len()];
        for (_, i, j) in pairs {
            if track_used[i] || det_used[j] {
                continue;
            }
            track_used[i] = true;
            det_used[j] = true;
            let (r_pred, v_pred, dt) = preds[i];
            let det = &detections[j];
            let res = det.range_m - r_pred;
            let mut v = v_pred + ALPHA * (det.velocity_mps - v_pred);
            if dt > 0.0 {
                v += BETA * res / dt;
            }
            let tr = &mut self.tracks[i];
            if t > tr.last().timestamp {
                tr.history.push(TrackPoint {
                    timestamp: t,
                    range_m: r_pred + ALPHA * res,
                    velocity_mps: v,
                    snr_db: det.snr_db,
                });
            }
            tr.hits += 1;
            tr.misses = 0;
            if tr.state == TrackState::Tentative && tr.hits >= self.config.confirm_hits {
                tr.state = TrackState::Confirmed;
            }
        }

        for (i, tr) in self.tracks.iter_mut().enumerate() {
            if !track_used[i] {
                tr.misses += 1;
                if tr.misses >= self.config.delete_misses {
                    tr.state = TrackState::Dead;
                }
            }
        }

        for (j, det) in detections.iter().enumerate() {
            if det_used[j] {
                continue;
            }
            let state = if self.config.confirm_hits <= 1 {
                TrackState::Confirmed
            } else {
                TrackState::Tentative
            };
            self.tracks.push(Track {
                id: self.next_id,
                state,
                history: vec![TrackPoint {
                    timestamp: t,
                    range_m: det.range_m,
                    velocity_mps: det.velocity_mps,
                    snr_db: det.snr_db,
                }],
                hits: 1,
                misses: 0,
            });
            self.next_id += 1;
        }
        &self.tracks
    }
}
