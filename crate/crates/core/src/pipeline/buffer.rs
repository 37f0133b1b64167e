use std::collections::VecDeque;

use crate::types::CsiFrame;

/// Fixed-capacity frame ring. When full, pushing drops the oldest frame and
/// counts it; ingestion never blocks.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    frames: VecDeque<CsiFrame>,
    capacity: usize,
    dropped: u64,
}

impl FrameBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            frames: VecDeque::with_capacity(capacity),
            capacity,
            dropped: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames discarded because the buffer was full.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn push(&mut self, frame: CsiFrame) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
            self.dropped += 1;
        }
        self.frames.push_back(frame);
    }

    /// Removes and returns the oldest `m` frames once that many are queued.
    pub fn take_batch(&mut self, m: usize) -> Option<Vec<CsiFrame>> {
        if self.frames.len() < m {
            return None;
        }
        Some(self.frames.drain(..m).collect())
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(seq: u32) -> CsiFrame {
        CsiFrame::new(seq as f64, seq, vec![])
    }

    #[test]
    fn disjoint_batches() {
        let mut b = FrameBuffer::new(8);
        for i in 0..5 {
            b.push(f(i));
        }
        let batch = b.take_batch(2).unwrap();
        assert_eq!(batch.iter().map(|x| x.seq).collect::<Vec<_>>(), vec![0, 1]);
        let batch = b.take_batch(2).unwrap();
        assert_eq!(batch[0].seq, 2);
        assert!(b.take_batch(2).is_none());
    }

    #[test]
    fn overflow_drops_oldest() {
        let mut b = FrameBuffer::new(4);
        for i in 0..7 {
            b.push(f(i));
        }
        assert_eq!(b.dropped(), 3);
        assert_eq!(b.take_batch(4).unwrap()[0].seq, 3);
    }
}
