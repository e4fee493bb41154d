use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::rl::PROPRIO_DIM;

pub const HISTORY_LEN: usize = 45;

/// The last `capacity` proprioceptive input vectors, oldest first. Missing
/// entries before warm-up read as zeros at the old end.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationHistory {
    capacity: usize,
    entries: VecDeque<[f64; PROPRIO_DIM]>,
}

impl ObservationHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("history length must be positive".into()));
        }
        Ok(ObservationHistory { capacity, entries: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of real (non-padding) entries.
    pub fn filled(&self) -> usize {
        self.entries.len()
    }

    pub fn push(&mut self, obs: [f64; PROPRIO_DIM]) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(obs);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Exactly `capacity` entries, zero-padded at the front.
    pub fn entries(&self) -> Vec<[f64; PROPRIO_DIM]> {
        let mut out = vec![[0.0; PROPRIO_DIM]; self.capacity - self.entries.len()];
        out.extend(self.entries.iter().copied());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; (self.capacity - self.entries.len()) * PROPRIO_DIM];
        for e in &self.entries {
            out.extend_from_slice(e);
        }
        out
    }

    /// Write the flattened history into `dst` (length `capacity * 17`).
    pub fn flatten_into(&self, dst: &mut [f64]) {
        let pad = (self.capacity - self.entries.len()) * PROPRIO_DIM;
        dst[..pad].iter_mut().for_each(|v| *v = 0.0);
        for (k, e) in self.entries.iter().enumerate() {
            let o = pad + k * PROPRIO_DIM;
            dst[o..o + PROPRIO_DIM].copy_from_slice(e);
        }
    }
}

/// Flattened history ending just before position `end` of `sequence`.
pub fn history_window(sequence: &[[f64; PROPRIO_DIM]], end: usize, capacity: usize, dst: &mut [f64]) {
    let start = end.saturating_sub(capacity);
    let pad = (capacity - (end - start)) * PROPRIO_DIM;
    dst[..pad].iter_mut().for_each(|v| *v = 0.0);
    for (k, e) in sequence[start..end].iter().enumerate() {
        let o = pad + k * PROPRIO_DIM;
        dst[o..o + PROPRIO_DIM].copy_from_slice(e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: f64) -> [f64; PROPRIO_DIM] {
        [v; PROPRIO_DIM]
    }

    #[test]
    fn zero_padded_until_full() {
        let mut h = ObservationHistory::new(3).unwrap();
        h.push(obs(1.0));
        let e = h.entries();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0], obs(0.0));
        assert_eq!(e[2], obs(1.0));
        for v in 2..6 {
            h.push(obs(v as f64));
        }
        assert_eq!(h.entries(), vec![obs(3.0), obs(4.0), obs(5.0)]);
        assert_eq!(h.flatten().len(), 3 * PROPRIO_DIM);
    }

    #[test]
    fn window_matches_ring_buffer() {
        let seq: Vec<_> = (0..10).map(|v| obs(v as f64)).collect();
        let mut h = ObservationHistory::new(4).unwrap();
        let mut dst = vec![0.0; 4 * PROPRIO_DIM];
        let mut flat = vec![0.0; 4 * PROPRIO_DIM];
        for (end, o) in seq.iter().enumerate() {
            history_window(&seq, end, 4, &mut dst);
            h.flatten_into(&mut flat);
            assert_eq!(dst, flat);
            assert_eq!(dst, h.flatten());
            h.push(*o);
        }
    }
}
