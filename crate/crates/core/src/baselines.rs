//! Comparison policies: fixed-frame FSA, DFSA with a known backlog, and
//! slotted Threshold-ALOHA, plus the grid search used to tune them.

use crate::model::FrameDecision;
use crate::sim::Population;

/// Every backlogged node contends in a frame of `frame_len` slots.
pub fn fixed_fsa_decision(frame_len: u64, frame_start: u64) -> FrameDecision {
    FrameDecision {
        threshold: 1,
        frame_len: frame_len.max(1),
        frame_start,
    }
}

/// Frame length equal to the true number of backlogged nodes.
pub fn ideal_dfsa_decision(pop: &Population, frame_start: u64) -> FrameDecision {
    FrameDecision {
        threshold: 1,
        frame_len: pop.backlogged().max(1),
        frame_start,
    }
}

/// One slot; nodes with gain at least `threshold` are eligible.
pub fn ta_decision(threshold: u64, frame_start: u64) -> FrameDecision {
    FrameDecision {
        threshold: threshold.max(1),
        frame_len: 1,
        frame_start,
    }
}

/// Transmission probabilities searched for Threshold-ALOHA.
pub fn ta_tx_grid(step: f64) -> Vec<f64> {
    let steps = (1.0 / step).round() as u64;
    (1..=steps).map(|k| (k as f64 * step).min(1.0)).collect()
}

/// Minimizes `f` over the integers in `[lo, hi]` by evaluating an evenly
/// spaced grid of about `points` values and repeatedly zooming in on the
/// best one. Returns the best argument and value; ties keep the smaller
/// argument.
pub fn coarse_to_fine<F>(lo: u64, hi: u64, points: u64, mut f: F) -> (u64, f64)
where
    F: FnMut(u64) -> f64,
{
    assert!(lo <= hi);
    let points = points.max(3);
    let mut seen = std::collections::BTreeMap::new();
    let mut eval = |x: u64, seen: &mut std::collections::BTreeMap<u64, f64>| {
        *seen.entry(x).or_insert_with(|| f(x))
    };
    let (mut a, mut b) = (lo, hi);
    loop {
        let step = ((b - a) / (points - 1)).max(1);
        let mut x = a;
        let mut best = (a, f64::INFINITY);
        loop {
            let v = eval(x, &mut seen);
            if v < best.1 {
                best = (x, v);
            }
            if x >= b {
                break;
            }
            x = (x + step).min(b);
        }
        if step == 1 {
            break;
        }
        a = best.0.saturating_sub(step).max(lo);
        b = (best.0 + step).min(hi);
    }
    seen.into_iter().fold(
        (lo, f64::INFINITY),
        |acc, (x, v)| if v < acc.1 { (x, v) } else { acc },
    )
}
