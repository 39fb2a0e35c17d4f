//! Ground-truth node and AP ages, the per-frame age recursions, and the
//! running sums that the age metrics are computed from.
//!
//! Time is slotted. Slot `k` is the interval `[k, k + 1)`. A node age `x_k`
//! is sampled at the start of slot `k`, before any generation in that slot,
//! so an update generated in slot `k` has age 1 at the start of slot `k + 1`.
//! The AP decodes only at frame end, so within a frame the AP-side age grows
//! by one per slot.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Threshold, length and first slot of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDecision {
    pub threshold: u64,
    pub frame_len: u64,
    pub frame_start: u64,
}

impl FrameDecision {
    pub fn new(threshold: u64, frame_len: u64, frame_start: u64) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::EmptyFrame);
        }
        Ok(Self {
            threshold: threshold.max(1),
            frame_len,
            frame_start,
        })
    }

    /// One past the last slot of the frame, i.e. `k_{t+1}`.
    pub fn end(&self) -> u64 {
        self.frame_start + self.frame_len
    }

    pub fn contains(&self, slot: u64) -> bool {
        slot >= self.frame_start && slot < self.end()
    }
}

/// Ages of one node at a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: usize,
    /// Age of the freshest update held by the node.
    pub x: u64,
    /// Age of the freshest update from this node held by the AP.
    pub y: u64,
}

impl NodeState {
    pub fn new(node_id: usize, x: u64, y: u64) -> Self {
        debug_assert!(x >= 1 && y >= x, "node {node_id}: x={x} y={y}");
        Self { node_id, x, y }
    }

    pub fn gain(&self) -> u64 {
        self.y - self.x
    }

    pub fn has_update(&self) -> bool {
        self.y > self.x
    }

    /// Node age at the next frame boundary given the generation slots that
    /// fall inside `frame`.
    pub fn advance_node_age(&self, generation_slots: &[u64], frame: &FrameDecision) -> Result<u64> {
        let mut latest: Option<u64> = None;
        for &k in generation_slots {
            if !frame.contains(k) {
                return Err(Error::GenerationOutsideFrame {
                    slot: k,
                    start: frame.frame_start,
                    end: frame.end(),
                });
            }
            latest = Some(latest.map_or(k, |l| l.max(k)));
        }
        Ok(match latest {
            Some(k) => frame.end() - k,
            None => self.x + frame.frame_len,
        })
    }

    /// AP-side age at the next frame boundary. A successful frame delivers
    /// the update held at frame start.
    pub fn advance_ap_age(&self, success: bool, frame: &FrameDecision) -> u64 {
        if success {
            self.x + frame.frame_len
        } else {
            self.y + frame.frame_len
        }
    }

    /// Both recursions applied together; `y'` uses the frame-start `x`.
    pub fn advance(
        &self,
        generation_slots: &[u64],
        success: bool,
        frame: &FrameDecision,
    ) -> Result<NodeState> {
        let x = self.advance_node_age(generation_slots, frame)?;
        let y = self.advance_ap_age(success, frame);
        Ok(NodeState {
            node_id: self.node_id,
            x,
            y,
        })
    }

    /// Per-slot ages of this node across `frame`, as `(y_k, x_k)` pairs.
    ///
    /// `generation_slots` must be sorted and inside the frame.
    pub fn slot_ages(&self, generation_slots: &[u64], frame: &FrameDecision) -> Vec<(u64, u64)> {
        let mut out = Vec::with_capacity(frame.frame_len as usize);
        let mut x = self.x;
        let mut gens = generation_slots.iter().peekable();
        for (offset, k) in (frame.frame_start..frame.end()).enumerate() {
            out.push((self.y + offset as u64, x));
            if gens.next_if(|&&g| g == k).is_some() {
                while gens.next_if(|&&g| g == k).is_some() {}
                x = 1;
            } else {
                x += 1;
            }
        }
        out
    }
}

/// Sum of `x_k` over the slots of a frame, in closed form.
///
/// `generation_slots` must be sorted and inside the frame.
pub fn frame_node_age_sum(x_start: u64, generation_slots: &[u64], frame: &FrameDecision) -> u64 {
    let mut total = 0;
    let mut seg_start = frame.frame_start;
    let mut seg_age = x_start;
    for &g in generation_slots {
        // slots seg_start..=g keep the old update; the new one counts from g + 1
        let len = g + 1 - seg_start;
        total += len * seg_age + len * (len - 1) / 2;
        seg_start = g + 1;
        seg_age = 1;
    }
    let len = frame.end() - seg_start;
    total + len * seg_age + len * len.saturating_sub(1) / 2
}

/// Sum of `y_k` over the slots of a frame.
pub fn frame_ap_age_sum(y_start: u64, frame_len: u64) -> u64 {
    frame_len * y_start + frame_len * (frame_len - 1) / 2
}

/// Running sums over the measured part of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    pub slot_count: u64,
    pub sum_gain: u128,
    pub sum_ap_age: u128,
    pub success_count: u64,
    pub frame_count: u64,
    pub frame_len_histogram: BTreeMap<u64, u64>,
    pub complexity_step2: u64,
    pub complexity_step3: u64,
    pub reset_count: u64,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one slot given every node's `(y_k, x_k)`.
    pub fn accumulate_slot(&mut self, ages: impl IntoIterator<Item = (u64, u64)>) {
        for (y, x) in ages {
            debug_assert!(y >= x);
            self.sum_gain += u128::from(y - x);
            self.sum_ap_age += u128::from(y);
        }
        self.slot_count += 1;
    }

    /// Adds a whole frame from network-wide slot sums.
    pub fn accumulate_frame(
        &mut self,
        frame_len: u64,
        sum_ap_age: u128,
        sum_node_age: u128,
        successes: u64,
    ) {
        debug_assert!(sum_ap_age >= sum_node_age);
        self.slot_count += frame_len;
        self.sum_ap_age += sum_ap_age;
        self.sum_gain += sum_ap_age - sum_node_age;
        self.success_count += successes;
        self.frame_count += 1;
        *self.frame_len_histogram.entry(frame_len).or_default() += 1;
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) {
        self.slot_count += other.slot_count;
        self.sum_gain += other.sum_gain;
        self.sum_ap_age += other.sum_ap_age;
        self.success_count += other.success_count;
        self.frame_count += other.frame_count;
        for (&len, &c) in &other.frame_len_histogram {
            *self.frame_len_histogram.entry(len).or_default() += c;
        }
        self.complexity_step2 += other.complexity_step2;
        self.complexity_step3 += other.complexity_step3;
        self.reset_count += other.reset_count;
    }

    /// Average age-gain per node per slot.
    pub fn aag(&self, n: usize) -> f64 {
        self.per_node_slot(self.sum_gain, n)
    }

    /// Average AP-side age per node per slot.
    pub fn aaoi(&self, n: usize) -> f64 {
        self.per_node_slot(self.sum_ap_age, n)
    }

    /// Deliveries per slot.
    pub fn throughput(&self) -> f64 {
        if self.slot_count == 0 {
            0.0
        } else {
            self.success_count as f64 / self.slot_count as f64
        }
    }

    pub fn complexity_per_slot(&self) -> f64 {
        if self.slot_count == 0 {
            0.0
        } else {
            (self.complexity_step2 + self.complexity_step3) as f64 / self.slot_count as f64
        }
    }

    fn per_node_slot(&self, sum: u128, n: usize) -> f64 {
        if self.slot_count == 0 || n == 0 {
            return 0.0;
        }
        sum as f64 / (n as f64 * self.slot_count as f64)
    }
}
