//! The AP's estimated age-gain distribution and the per-frame transforms
//! applied to it.

use crate::channel::FrameObservation;
use crate::error::{Error, Result};
use crate::model::FrameDecision;

use super::likelihood::EstimatedAllocation;

/// Entries below this are dropped from the support.
pub const PRUNE_BELOW: f64 = 1e-12;

/// Slack on the `>= w_min` test and on the frame-length ceiling, so that
/// rounding in the tail sums cannot add a slot.
const TAIL_SLACK: f64 = 1e-9;

/// Estimated probability that a typical node has each age-gain, stored
/// densely by gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPmf {
    probs: Vec<f64>,
}

impl GainPmf {
    pub fn point_mass(gain: u64) -> Self {
        let mut probs = vec![0.0; gain as usize + 1];
        probs[gain as usize] = 1.0;
        Self { probs }
    }

    /// Normalized from non-negative weights indexed by gain. Falls back to
    /// a point mass at 0 when every weight is zero.
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let mut pmf = Self { probs: weights };
        if !pmf.normalize() {
            pmf = Self::point_mass(0);
        }
        pmf
    }

    pub fn from_pairs(pairs: &[(u64, f64)]) -> Self {
        let len = pairs
            .iter()
            .map(|&(a, _)| a as usize + 1)
            .max()
            .unwrap_or(1);
        let mut w = vec![0.0; len];
        for &(a, p) in pairs {
            w[a as usize] += p;
        }
        Self::from_weights(w)
    }

    /// Empirical distribution of the given gains.
    pub fn from_gains(gains: impl IntoIterator<Item = u64>) -> Self {
        let mut w: Vec<f64> = Vec::new();
        for g in gains {
            let g = g as usize;
            if w.len() <= g {
                w.resize(g + 1, 0.0);
            }
            w[g] += 1.0;
        }
        Self::from_weights(w)
    }

    pub fn get(&self, gain: u64) -> f64 {
        self.probs.get(gain as usize).copied().unwrap_or(0.0)
    }

    /// Gains with positive mass, ascending.
    pub fn support(&self) -> impl DoubleEndedIterator<Item = (u64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| (a as u64, p))
    }

    pub fn max_gain(&self) -> Option<u64> {
        self.support().next_back().map(|(a, _)| a)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Estimated number of nodes with gain at least `threshold`.
    pub fn tail_count(&self, threshold: u64, n_nodes: u64) -> f64 {
        let start = (threshold as usize).min(self.probs.len());
        n_nodes as f64 * self.probs[start..].iter().sum::<f64>()
    }

    /// Returns false when there is no mass to normalize.
    fn normalize(&mut self) -> bool {
        for p in &mut self.probs {
            if p.is_nan() || *p < PRUNE_BELOW {
                *p = 0.0;
            }
        }
        let total: f64 = self.probs.iter().sum();
        if total <= 0.0 {
            return false;
        }
        for p in &mut self.probs {
            *p /= total;
        }
        while self.probs.len() > 1 && self.probs.last() == Some(&0.0) {
            self.probs.pop();
        }
        true
    }
}

/// Highest positive gain whose estimated tail population reaches `w_min`,
/// with the frame sized to that tail.
///
/// When no tail reaches `w_min`, the smallest positive gain is used; with
/// no positive mass at all an idle frame `(1, 1)` is issued.
pub fn select_threshold_and_frame(
    pmf: &GainPmf,
    n_nodes: u64,
    w_min: u64,
    frame_start: u64,
) -> FrameDecision {
    let n = n_nodes as f64;
    let mut tail = 0.0;
    let mut smallest_positive: Option<(u64, f64)> = None;
    for (a, p) in pmf.support().rev() {
        if a == 0 {
            break;
        }
        tail += n * p;
        if tail >= w_min as f64 - TAIL_SLACK {
            return decision(a, tail, frame_start);
        }
        smallest_positive = Some((a, tail));
    }
    match smallest_positive {
        Some((a, tail)) => decision(a, tail, frame_start),
        None => FrameDecision {
            threshold: 1,
            frame_len: 1,
            frame_start,
        },
    }
}

fn decision(threshold: u64, tail: f64, frame_start: u64) -> FrameDecision {
    let frame_len = ((tail - TAIL_SLACK).ceil() as u64).max(1);
    FrameDecision {
        threshold,
        frame_len,
        frame_start,
    }
}

/// Smallest support gain whose estimated tail population is at most one.
/// `None` when no such gain exists.
pub fn threshold_shortcut(pmf: &GainPmf, n_nodes: u64) -> Option<u64> {
    let n = n_nodes as f64;
    let mut tail = 0.0;
    let mut found = None;
    for (a, p) in pmf.support().rev() {
        tail += n * p;
        if tail <= 1.0 {
            found = Some(a);
        } else {
            break;
        }
    }
    found
}

/// Distribution at frame end: gains below the threshold keep their prior
/// estimate, gains at or above it are replaced by the estimated active
/// population minus the delivered nodes, and delivered nodes move to gain 0.
pub fn post_frame_update(
    pmf: &GainPmf,
    alloc: &EstimatedAllocation,
    obs: &FrameObservation,
    threshold: u64,
    n_nodes: u64,
) -> Result<GainPmf> {
    let n = n_nodes as f64;
    let top = alloc.counts.keys().next_back().map_or(0, |&a| a as usize);
    let len = pmf.probs.len().max(top + 1).max(1);
    let mut m = vec![0.0; len];
    for (a, p) in pmf.support() {
        if a < threshold {
            m[a as usize] = n * p;
        }
    }
    for (&a, &s) in &obs.success_gains {
        if alloc.get(a) < s {
            return Err(Error::AllocationBelowObserved {
                gain: a,
                estimated: alloc.get(a),
                observed: s,
            });
        }
    }
    for (&a, &est) in &alloc.counts {
        if a < threshold {
            continue;
        }
        let delivered = obs.success_gains.get(&a).copied().unwrap_or(0);
        m[a as usize] = (est - delivered) as f64;
    }
    m[0] += obs.n_singleton as f64;
    Ok(GainPmf::from_weights(m))
}

/// Inputs to the arrival step known at the AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalContext {
    pub lambda: f64,
    pub frame_len: u64,
    /// `max_i y_t^i` at the start of the frame.
    pub max_ap_age: u64,
    /// `max_i x_0^i`.
    pub max_initial_age: u64,
    /// `k_t`.
    pub frame_start: u64,
}

impl ArrivalContext {
    /// Largest feasible frame-start node age for a node that ends the frame
    /// with gain `b`.
    pub fn h_max(&self, b: u64) -> i64 {
        let transient = (self.max_initial_age + self.frame_start) as i64;
        transient.min(self.max_ap_age as i64 - b as i64)
    }
}

/// Result of the arrival step.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub pmf: GainPmf,
    /// `(gain, in-frame generation offset)` pairs evaluated.
    pub terms: u64,
    /// Gain above which the mass was lumped, when the shortcut applied.
    pub lumped_at: Option<u64>,
}

/// Folds in-frame update arrivals into the frame-end distribution.
///
/// A node ending the frame with gain `b` that generates its latest update
/// `c` slots before frame end, having had age `h` at frame start, moves to
/// gain `a = b + h + w - c`. The generation slot is geometric in `c`, the
/// frame-start age is geometric in `h` truncated to `[1, h_max(b)]`, and a
/// node without in-frame arrivals keeps its gain.
///
/// With `shortcut_nodes = Some(n)`, gains are computed upward only until the
/// remaining mass falls to at most one node out of `n`; that remainder is
/// placed on the stopping gain.
pub fn propagate_arrivals(
    pmf_plus: &GainPmf,
    ctx: &ArrivalContext,
    shortcut_nodes: Option<u64>,
) -> Result<Propagated> {
    let lambda = ctx.lambda;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    let w = ctx.frame_len.max(1) as usize;
    let rho = 1.0 - lambda;
    let f = &pmf_plus.probs;
    let max_y = ctx.max_ap_age as usize;
    let len = f.len().max(max_y + w);

    // arrivals[m] = sum_b f[b] * p~_b(m - b): mass whose frame-start age
    // plus end gain is m. Zero for m > max_y since h <= max_y - b.
    let mut pows = Vec::with_capacity(len + 1);
    let mut p = 1.0;
    for _ in 0..=len {
        pows.push(p);
        p *= rho;
    }
    let mut arrivals = vec![0.0; max_y + 1];
    let transient = (ctx.max_initial_age + ctx.frame_start) as usize;
    let rho_window = if transient < max_y {
        pows[transient]
    } else {
        0.0
    };
    let mut weighted = vec![0.0; max_y.min(f.len())];
    for (b, slot) in weighted.iter_mut().enumerate() {
        // h_max never exceeds max_y here
        let h_max = ctx.h_max(b as u64);
        if h_max >= 1 && f[b] > 0.0 {
            *slot = f[b] / (1.0 - pows[h_max as usize]);
        }
    }
    // running = sum over b in [m - transient, m - 1] of weighted[b] * rho^(m-1-b)
    let mut running = 0.0;
    for (m, slot) in arrivals.iter_mut().enumerate().take(max_y + 1).skip(1) {
        running *= rho;
        if let Some(&g) = weighted.get(m - 1) {
            running += g;
        }
        if transient < max_y && m > transient {
            if let Some(&g) = weighted.get(m - 1 - transient) {
                running -= g * rho_window;
            }
        }
        *slot = lambda * running.max(0.0);
    }

    let stay = pows[w];
    let arrival = |m: usize| {
        if (1..=max_y).contains(&m) {
            arrivals[m]
        } else {
            0.0
        }
    };
    // conv[a] = sum_{j<w} rho^j arrivals[a - w + 1 + j], filled downward with
    // conv[a - 1] = arrivals[a - w] + rho * (conv[a] - rho^(w-1) arrivals[a])
    let mut conv = vec![0.0; len];
    let top = len - 1;
    conv[top] = (0..w)
        .map(|j| pows[j] * arrival((top + 1 + j).wrapping_sub(w)))
        .sum();
    let rho_last = pows[w - 1];
    for a in (1..len).rev() {
        let lower = if a >= w { arrival(a - w) } else { 0.0 };
        conv[a - 1] = (lower + rho * (conv[a] - rho_last * arrival(a))).max(0.0);
    }

    let mass: f64 = f.iter().sum();
    let limit = shortcut_nodes.map(|n| 1.0 / n as f64);
    let mut out = vec![0.0; len];
    let mut terms = 0u64;
    let mut cumulative = 0.0;
    let mut lumped_at = None;
    for a in 0..len {
        if let Some(limit) = limit {
            let remaining = mass - cumulative;
            if remaining <= limit {
                out[a] = remaining.max(0.0);
                lumped_at = Some(a as u64);
                out.truncate(a + 1);
                break;
            }
        }
        // offsets s with 1 <= a - s <= max_y contribute
        let s_lo = a.saturating_sub(max_y);
        let s_hi = (w - 1).min(a.saturating_sub(1));
        if a >= 1 && s_lo <= s_hi {
            terms += (s_hi - s_lo + 1) as u64;
        }
        let v = stay * f.get(a).copied().unwrap_or(0.0) + lambda * conv[a];
        out[a] = v;
        cumulative += v;
    }
    Ok(Propagated {
        pmf: GainPmf::from_weights(out),
        terms,
        lumped_at,
    })
}

/// Drops mass above `max_ap_age_next - 1` and renormalizes. When nothing
/// survives, all mass goes to the largest feasible gain; the second value
/// reports that fallback.
pub fn truncate(pmf: &GainPmf, max_ap_age_next: u64) -> (GainPmf, bool) {
    let a_max = max_ap_age_next.saturating_sub(1) as usize;
    let keep = pmf.probs.len().min(a_max + 1);
    let kept = pmf.probs[..keep].to_vec();
    if kept.iter().sum::<f64>() <= 0.0 {
        return (GainPmf::point_mass(a_max as u64), true);
    }
    (GainPmf::from_weights(kept), false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn counts_pmf(n: u64, counts: &[(u64, f64)]) -> GainPmf {
        let pairs: Vec<_> = counts.iter().map(|&(a, c)| (a, c / n as f64)).collect();
        GainPmf::from_pairs(&pairs)
    }

    #[test]
    fn threshold_selection_examples() {
        let pmf = counts_pmf(10, &[(0, 5.0), (2, 3.0), (4, 2.0)]);
        let d = select_threshold_and_frame(&pmf, 10, 1, 0);
        assert_eq!((d.threshold, d.frame_len), (4, 2));
        let d = select_threshold_and_frame(&pmf, 10, 3, 0);
        assert_eq!((d.threshold, d.frame_len), (2, 5));
        let d = select_threshold_and_frame(&GainPmf::point_mass(0), 10, 1, 7);
        assert_eq!((d.threshold, d.frame_len, d.frame_start), (1, 1, 7));
    }

    #[test]
    fn threshold_falls_back_to_smallest_positive_gain() {
        let pmf = counts_pmf(10, &[(0, 8.0), (3, 1.5), (6, 0.5)]);
        let d = select_threshold_and_frame(&pmf, 10, 5, 0);
        assert_eq!((d.threshold, d.frame_len), (3, 2));
    }

    #[test]
    fn shortcut_examples() {
        let pmf = counts_pmf(10, &[(0, 8.0), (3, 1.5), (6, 0.5)]);
        assert_eq!(threshold_shortcut(&pmf, 10), Some(6));
        assert_eq!(threshold_shortcut(&GainPmf::point_mass(0), 10), None);
        let d = select_threshold_and_frame(&pmf, 10, 1, 0);
        assert!(d.threshold <= 6);
    }

    #[test]
    fn post_frame_example() {
        let pmf = counts_pmf(5, &[(0, 2.0), (1, 1.0), (3, 2.0)]);
        let obs = FrameObservation::from_counts(1, 0, 0, &[(3, 1)]);
        let alloc = EstimatedAllocation::single(3, 2);
        let out = post_frame_update(&pmf, &alloc, &obs, 3, 5).unwrap();
        assert_abs_diff_eq!(out.get(0), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(3), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn post_frame_without_successes_collapses_to_threshold() {
        let pmf = counts_pmf(10, &[(0, 4.0), (1, 2.0), (3, 3.0), (5, 1.0)]);
        let obs = FrameObservation::from_counts(0, 0, 2, &[]);
        let alloc = EstimatedAllocation::single(3, 4);
        let out = post_frame_update(&pmf, &alloc, &obs, 3, 10).unwrap();
        assert_abs_diff_eq!(out.get(0), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(3), 0.4, epsilon = 1e-12);
        assert_eq!(out.get(5), 0.0);
    }

    #[test]
    fn post_frame_idle_is_identity() {
        let pmf = GainPmf::point_mass(0);
        let obs = FrameObservation::from_counts(0, 1, 0, &[]);
        let out = post_frame_update(&pmf, &EstimatedAllocation::single(1, 0), &obs, 1, 10).unwrap();
        assert_eq!(out, GainPmf::point_mass(0));
    }

    #[test]
    fn post_frame_rejects_short_allocation() {
        let pmf = GainPmf::point_mass(0);
        let obs = FrameObservation::from_counts(2, 0, 0, &[(4, 2)]);
        let alloc = EstimatedAllocation::single(4, 1);
        assert!(matches!(
            post_frame_update(&pmf, &alloc, &obs, 4, 10),
            Err(Error::AllocationBelowObserved { gain: 4, .. })
        ));
    }

    fn ctx(lambda: f64, w: u64, max_y: u64, frame_start: u64) -> ArrivalContext {
        ArrivalContext {
            lambda,
            frame_len: w,
            max_ap_age: max_y,
            max_initial_age: 1,
            frame_start,
        }
    }

    #[test]
    fn full_rate_arrivals_shift_by_frame_len() {
        let pmf = GainPmf::from_pairs(&[(0, 0.5), (2, 0.3), (5, 0.2)]);
        let out = propagate_arrivals(&pmf, &ctx(1.0, 3, 9, 100), None)
            .unwrap()
            .pmf;
        assert_abs_diff_eq!(out.get(3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(5), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(8), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn half_rate_spot_values() {
        let out = propagate_arrivals(&GainPmf::point_mass(0), &ctx(0.5, 1, 3, 10), None)
            .unwrap()
            .pmf;
        let expect = [0.5, 0.285714, 0.142857, 0.071429];
        for (a, e) in expect.iter().enumerate() {
            assert_abs_diff_eq!(out.get(a as u64), *e, epsilon = 1e-6);
        }
        assert_eq!(out.get(4), 0.0);
    }

    #[test]
    fn first_term_is_no_arrival_probability() {
        // no renormalization is needed here: the step conserves mass
        let out = propagate_arrivals(&GainPmf::point_mass(0), &ctx(0.3, 2, 5, 10), None)
            .unwrap()
            .pmf;
        assert_abs_diff_eq!(out.get(0), 0.49, epsilon = 1e-12);
    }

    #[test]
    fn windowed_recurrence_matches_direct_sum() {
        let pmf = GainPmf::from_pairs(&[(0, 0.3), (1, 0.1), (4, 0.25), (7, 0.2), (9, 0.15)]);
        for &(lambda, w, start) in &[
            (0.1, 1, 3),
            (0.4, 3, 2),
            (0.7, 6, 40),
            (1.0, 2, 5),
            (0.05, 9, 0),
        ] {
            let c = ctx(lambda, w, 12, start);
            let fast = propagate_arrivals(&pmf, &c, None).unwrap();
            let rho = 1.0f64 - lambda;
            let f = pmf.as_slice();
            let arrivals = |m: usize| -> f64 {
                if m == 0 || m > 12 {
                    return 0.0;
                }
                (0..m)
                    .filter(|&b| b < f.len())
                    .map(|b| {
                        let h_max = c.h_max(b as u64);
                        let h = (m - b) as i64;
                        if h_max < 1 || h > h_max {
                            0.0
                        } else {
                            f[b] * lambda * rho.powi(h as i32 - 1) / (1.0 - rho.powi(h_max as i32))
                        }
                    })
                    .sum()
            };
            let mut direct = vec![0.0; 12 + w as usize];
            for (a, d) in direct.iter_mut().enumerate() {
                *d = rho.powi(w as i32) * f.get(a).copied().unwrap_or(0.0);
                for s in 0..w as usize {
                    if s <= a {
                        *d += lambda * rho.powi((w as usize - 1 - s) as i32) * arrivals(a - s);
                    }
                }
            }
            let total: f64 = direct.iter().sum();
            for (a, d) in direct.iter().enumerate() {
                assert_abs_diff_eq!(fast.pmf.get(a as u64), d / total, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn invalid_lambda_rejected() {
        let pmf = GainPmf::point_mass(0);
        assert_eq!(
            propagate_arrivals(&pmf, &ctx(0.0, 1, 3, 0), None).unwrap_err(),
            Error::InvalidLambda(0.0)
        );
        assert!(propagate_arrivals(&pmf, &ctx(1.5, 1, 3, 0), None).is_err());
    }

    #[test]
    fn truncate_examples() {
        let pmf = GainPmf::from_pairs(&[(0, 0.5), (4, 0.5)]);
        let (out, fallback) = truncate(&pmf, 3);
        assert!(!fallback);
        assert_eq!(out, GainPmf::point_mass(0));

        let pmf = GainPmf::from_pairs(&[(0, 0.25), (1, 0.75)]);
        assert_eq!(truncate(&pmf, 3), (pmf.clone(), false));

        let (out, fallback) = truncate(&GainPmf::point_mass(5), 3);
        assert!(fallback);
        assert_eq!(out, GainPmf::point_mass(2));
    }
}
