use thiserror::Error;

use crate::types::CsiFrame;

/// Longest run of synthesised slots tolerated before the stream is resynced.
pub const MAX_CONSECUTIVE_FILLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("{missing} consecutive frame slots missing at t = {at_s:.3} s; stream resynchronised")]
pub struct ResyncError {
    pub missing: u64,
    pub at_s: f64,
}

/// Maps an irregular frame stream onto the uniform grid `t0 + n·T`.
///
/// Each slot takes the nearest arriving frame within ±T/2. Slots with no
/// frame repeat the previous frame, flagged `gap_filled` and stamped with the
/// slot's nominal time. Emission lags input by one frame so a later, nearer
/// frame can still win a slot.
#[derive(Debug, Clone)]
pub struct Resampler {
    interval: f64,
    anchor: Option<f64>,
    /// Slot index of `pending`.
    pending_slot: u64,
    pending: Option<CsiFrame>,
    /// Next slot to be emitted.
    next_slot: u64,
    last: Option<CsiFrame>,
    gap_fills: u64,
    discarded: u64,
}

impl Resampler {
    pub fn new(frame_interval_s: f64) -> Self {
        Self {
            interval: frame_interval_s,
            anchor: None,
            pending_slot: 0,
            pending: None,
            next_slot: 0,
            last: None,
            gap_fills: 0,
            discarded: 0,
        }
    }

    /// Total gap-filled slots emitted.
    pub fn gap_fills(&self) -> u64 {
        self.gap_fills
    }

    /// Frames dropped because their slot was already taken by a nearer frame.
    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.interval);
    }

    fn slot_time(&self, n: u64) -> f64 {
        self.anchor.unwrap_or(0.0) + n as f64 * self.interval
    }

    /// Feeds one frame; grid-aligned frames ready for processing are appended
    /// to `out`. On a resync error the resampler restarts with `frame` as
    /// its new anchor; frames already in `out` stay valid.
    pub fn push(&mut self, frame: CsiFrame, out: &mut Vec<CsiFrame>) -> Result<(), ResyncError> {
        let Some(t0) = self.anchor else {
            self.anchor = Some(frame.timestamp);
            self.pending_slot = 0;
            self.pending = Some(frame);
            return Ok(());
        };
        let rel = (frame.timestamp - t0) / self.interval;
        if rel < -0.5 {
            self.discarded += 1;
            return Ok(());
        }
        let slot = rel.round().max(0.0) as u64;

        if self.pending.is_some() && slot == self.pending_slot {
            let pending = self.pending.as_ref().expect("checked");
            let nominal = self.slot_time(slot);
            if (frame.timestamp - nominal).abs() < (pending.timestamp - nominal).abs() {
                self.pending = Some(frame);
            }
            self.discarded += 1;
            return Ok(());
        }
        if slot < self.next_slot || (self.pending.is_some() && slot < self.pending_slot) {
            self.discarded += 1;
            return Ok(());
        }

        if let Some(p) = self.pending.take() {
            self.next_slot = self.pending_slot + 1;
            self.last = Some(p.clone());
            out.push(p);
        }

        let missing = slot - self.next_slot;
        if missing as usize > MAX_CONSECUTIVE_FILLS {
            let at_s = self.slot_time(self.next_slot);
            self.reset();
            self.anchor = Some(frame.timestamp);
            self.pending = Some(frame);
            return Err(ResyncError { missing, at_s });
        }
        if let Some(last) = &self.last {
            for n in self.next_slot..slot {
                let mut fill = last.clone();
                fill.timestamp = self.slot_time(n);
                fill.flags.set_gap_filled();
                out.push(fill);
                self.gap_fills += 1;
            }
        }
        self.next_slot = slot;
        self.pending_slot = slot;
        self.pending = Some(frame);
        Ok(())
    }

    /// Emits the frame held back for its slot.
    pub fn flush(&mut self, out: &mut Vec<CsiFrame>) {
        if let Some(p) = self.pending.take() {
            self.next_slot = self.pending_slot + 1;
            self.last = Some(p.clone());
            out.push(p);
        }
    }
}
