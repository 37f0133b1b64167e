//! Value types shared by every stage.

use serde::{Deserialize, Serialize};

use crate::C64;

/// Per-frame status bits. Bit 0 = gap filled by the resampler, bit 1 = low
/// synchronisation confidence. Stored as one byte in trace files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameFlags(u8);

impl FrameFlags {
    pub const GAP_FILLED: u8 = 0b01;
    pub const LOW_CONFIDENCE: u8 = 0b10;

    pub fn from_bits(bits: u8) -> Self {
        FrameFlags(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn gap_filled(self) -> bool {
        self.0 & Self::GAP_FILLED != 0
    }

    pub fn low_confidence(self) -> bool {
        self.0 & Self::LOW_CONFIDENCE != 0
    }

    pub fn set_gap_filled(&mut self) {
        self.0 |= Self::GAP_FILLED;
    }

    pub fn set_low_confidence(&mut self) {
        self.0 |= Self::LOW_CONFIDENCE;
    }
}

/// One Wi-Fi frame's CSI: N complex channel gains, subcarrier `k` sitting at
/// baseband frequency `(k - N/2)·Δf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiFrame {
    /// Seconds, monotonic.
    pub timestamp: f64,
    pub seq: u32,
    pub csi: Vec<C64>,
    pub flags: FrameFlags,
}

impl CsiFrame {
    pub fn new(timestamp: f64, seq: u32, csi: Vec<C64>) -> Self {
        Self {
            timestamp,
            seq,
            csi,
            flags: FrameFlags::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.csi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.csi.is_empty()
    }
}

/// Magnitude range–Doppler map. Rows are velocity bins (zero-centred), columns
/// are range bins starting at zero delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeDopplerMap {
    /// `mag_db[velocity_bin][range_bin]`, 20·log10 magnitude.
    pub mag_db: Vec<Vec<f64>>,
    pub range_axis: Vec<f64>,
    pub velocity_axis: Vec<f64>,
    pub batch_seq: u64,
    pub batch_timestamp: f64,
}

impl RangeDopplerMap {
    pub fn n_doppler(&self) -> usize {
        self.mag_db.len()
    }

    pub fn n_range(&self) -> usize {
        self.range_axis.len()
    }

    /// Row index of the zero-velocity bin.
    pub fn zero_row(&self) -> usize {
        self.n_doppler() / 2
    }

    /// Largest cell as `(velocity_bin, range_bin, dB)`.
    pub fn peak(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (d, row) in self.mag_db.iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                if best.is_none_or(|b| v > b.2) {
                    best = Some((d, r, v));
                }
            }
        }
        best
    }
}

/// A CFAR-confirmed reflection from one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub snr_db: f64,
    /// Fractional range bin on the map grid.
    pub bin_r: f64,
    /// Fractional velocity row on the map grid.
    pub bin_d: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub timestamp: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub snr_db: f64,
}

/// Temporal history of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub history: Vec<TrackPoint>,
    pub hits: u32,
    pub misses: u32,
}

impl Track {
    pub fn last(&self) -> &TrackPoint {
        self.history.last().expect("tracks are created with one point")
    }
}
