use std::collections::VecDeque;

use super::PpgSample;

pub const DEFAULT_FIFO_CAPACITY: usize = 16;

/// Bounded sample buffer between the sensor and the controller.
///
/// When full, a push drops the oldest entry and bumps the overflow counter.
#[derive(Debug, Clone)]
pub struct SampleFifo {
    capacity: usize,
    entries: VecDeque<PpgSample>,
    overflows: u64,
}

impl Default for SampleFifo {
    fn default() -> Self {
        Self::new(DEFAULT_FIFO_CAPACITY)
    }
}

impl SampleFifo {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "fifo capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            overflows: 0,
        }
    }

    pub fn push(&mut self, sample: PpgSample) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
            self.overflows += 1;
        }
        self.entries.push_back(sample);
    }

    pub fn pop(&mut self) -> Option<PpgSample> {
        self.entries.pop_front()
    }

    /// Burst read: empties the buffer in arrival order.
    pub fn drain(&mut self) -> Vec<PpgSample> {
        self.entries.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn overflows(&self) -> u64 {
        self.overflows
    }
}
