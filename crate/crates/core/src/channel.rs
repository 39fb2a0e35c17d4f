//! Collision channel: active nodes pick a slot uniformly in the frame and
//! only singleton slots deliver.

use std::collections::BTreeMap;

use rand::Rng;

/// What the AP sees at the end of one frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameObservation {
    pub n_singleton: u64,
    pub n_empty: u64,
    pub n_collision: u64,
    /// Age-gain of each delivered update, as gain -> count.
    pub success_gains: BTreeMap<u64, u64>,
    /// Delivered nodes in ascending id order.
    pub success_node_ids: Vec<usize>,
}

impl FrameObservation {
    pub fn frame_len(&self) -> u64 {
        self.n_singleton + self.n_empty + self.n_collision
    }

    /// Observation built from slot counts only; used by estimator tests.
    pub fn from_counts(
        n_singleton: u64,
        n_empty: u64,
        n_collision: u64,
        gains: &[(u64, u64)],
    ) -> Self {
        Self {
            n_singleton,
            n_empty,
            n_collision,
            success_gains: gains.iter().copied().filter(|&(_, c)| c > 0).collect(),
            success_node_ids: Vec::new(),
        }
    }
}

/// Reusable slot-count buffer so the per-frame work stays `O(n + w)`.
#[derive(Debug, Clone, Default)]
pub struct Channel {
    occupancy: Vec<u32>,
    picks: Vec<u32>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resolves one frame. `active` is `(node_id, age_gain)` in ascending
    /// node id; slots are drawn in that order.
    pub fn run_frame<R: Rng + ?Sized>(
        &mut self,
        active: &[(usize, u64)],
        frame_len: u64,
        rng: &mut R,
    ) -> FrameObservation {
        assert!(frame_len >= 1, "frame_len must be at least 1");
        let w = frame_len as usize;
        self.occupancy.clear();
        self.occupancy.resize(w, 0);
        self.picks.clear();
        for _ in active {
            let slot = rng.random_range(0..w);
            self.occupancy[slot] += 1;
            self.picks.push(slot as u32);
        }
        self.classify(active, w)
    }

    /// Single-slot contention where each eligible node transmits with
    /// probability `tx_prob`.
    pub fn run_slot<R: Rng + ?Sized>(
        &mut self,
        eligible: &[(usize, u64)],
        tx_prob: f64,
        rng: &mut R,
    ) -> FrameObservation {
        self.occupancy.clear();
        self.occupancy.push(0);
        self.picks.clear();
        for _ in eligible {
            if rng.random_bool(tx_prob) {
                self.occupancy[0] += 1;
                self.picks.push(0);
            } else {
                self.picks.push(u32::MAX);
            }
        }
        self.classify(eligible, 1)
    }

    fn classify(&self, nodes: &[(usize, u64)], w: usize) -> FrameObservation {
        let mut obs = FrameObservation::default();
        for &c in &self.occupancy[..w] {
            match c {
                0 => obs.n_empty += 1,
                1 => obs.n_singleton += 1,
                _ => obs.n_collision += 1,
            }
        }
        if obs.n_singleton > 0 {
            for (&(id, gain), &slot) in nodes.iter().zip(&self.picks) {
                if slot != u32::MAX && self.occupancy[slot as usize] == 1 {
                    *obs.success_gains.entry(gain).or_default() += 1;
                    obs.success_node_ids.push(id);
                }
            }
        }
        obs
    }
}
