//! Frame decisions when the AP knows every age-gain.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Number of nodes per age-gain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GainHistogram {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl GainHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_gains(gains: impl IntoIterator<Item = u64>) -> Self {
        let mut h = Self::new();
        for g in gains {
            h.add(g, 1);
        }
        h
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut h = Self::new();
        for (g, c) in counts {
            h.add(g, c);
        }
        h
    }

    pub fn add(&mut self, gain: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(gain).or_default() += count;
            self.total += count;
        }
    }

    pub fn count(&self, gain: u64) -> u64 {
        self.counts.get(&gain).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&g, &c)| (g, c))
    }

    /// Largest positive gain present, if any.
    pub fn max_gain(&self) -> Option<u64> {
        self.counts.keys().next_back().copied().filter(|&g| g > 0)
    }

    /// Number of nodes with gain at least `threshold`, and the sum of their gains.
    pub fn tail(&self, threshold: u64) -> (u64, u64) {
        self.counts
            .range(threshold..)
            .fold((0, 0), |(n, s), (&g, &c)| (n + c, s + g * c))
    }
}

/// Expected per-slot AoI reduction of a frame when every node with gain
/// at least `threshold` contends in `frame_len` slots.
///
/// Returns -1 when no node meets the threshold.
pub fn aar(hist: &GainHistogram, threshold: u64, frame_len: u64, n_nodes: u64) -> Result<f64> {
    if frame_len == 0 {
        return Err(Error::EmptyFrame);
    }
    if n_nodes < hist.total() {
        return Err(Error::NodeCountTooSmall {
            n: n_nodes,
            total: hist.total(),
        });
    }
    let (active, gain_sum) = hist.tail(threshold);
    if active == 0 {
        return Ok(-1.0);
    }
    let w = frame_len as f64;
    let p_success = success_probability(active, frame_len);
    Ok(p_success * gain_sum as f64 / (n_nodes as f64 * w) - 1.0)
}

/// Per-node success probability with `active` contenders in `frame_len` slots.
pub fn success_probability(active: u64, frame_len: u64) -> f64 {
    if active == 0 {
        return 0.0;
    }
    let w = frame_len as f64;
    (1.0 - 1.0 / w).powi((active - 1) as i32)
}

/// Highest gain contends alone, with one slot per such node.
pub fn ideal_decision(hist: &GainHistogram) -> Result<(u64, u64)> {
    let top = hist.max_gain().ok_or(Error::NoBacklog)?;
    Ok((top, hist.count(top)))
}

/// Expected deliveries per slot with `n_active` contenders.
pub fn throughput(n_active: u64, frame_len: u64) -> f64 {
    if n_active == 0 {
        return 0.0;
    }
    n_active as f64 / frame_len as f64 * success_probability(n_active, frame_len)
}
