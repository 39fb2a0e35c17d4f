//! Maximum-likelihood estimate of the active population of a frame from its
//! slot counts and the age-gains of the delivered updates.
//!
//! All scores are natural-log probabilities.

use std::collections::BTreeMap;

use statrs::function::factorial::ln_binomial;

use crate::channel::FrameObservation;
use crate::error::{Error, Result};

/// `ln C(n, k)`, or `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else if k == 0 || k == n {
        0.0
    } else {
        ln_binomial(n, k)
    }
}

/// Probability that a given slot is a singleton, empty, or a collision
/// when `l` nodes each pick one of `w` slots.
pub fn slot_probabilities(l: u64, w: u64) -> (f64, f64, f64) {
    assert!(w >= 1, "frame length must be at least 1");
    if l == 0 {
        return (0.0, 1.0, 0.0);
    }
    let miss = 1.0 - 1.0 / w as f64;
    let q_s = l as f64 / w as f64 * powi(miss, l - 1);
    let q_e = powi(miss, l);
    let q_c = if l == 1 {
        0.0
    } else {
        (1.0 - q_s - q_e).max(0.0)
    };
    (q_s, q_e, q_c)
}

fn powi(base: f64, exp: u64) -> f64 {
    if exp <= i32::MAX as u64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp as f64)
    }
}

fn ln_pow(q: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else if q <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * q.ln()
    }
}

/// Log-likelihood of the slot counts given `l` active nodes, treating slots
/// as independent.
pub fn observation_likelihood(l: u64, w: u64, counts: (u64, u64, u64)) -> Result<f64> {
    let (n_s, n_e, n_c) = counts;
    if n_s + n_e + n_c != w {
        return Err(Error::InconsistentObservation {
            singleton: n_s,
            empty: n_e,
            collision: n_c,
            frame_len: w,
        });
    }
    let (q_s, q_e, q_c) = slot_probabilities(l, w);
    Ok(ln_choose(w, n_s)
        + ln_choose(w - n_s, n_e)
        + ln_pow(q_s, n_s)
        + ln_pow(q_e, n_e)
        + ln_pow(q_c, n_c))
}

/// Estimated number of active nodes per age-gain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EstimatedAllocation {
    pub counts: BTreeMap<u64, u64>,
    pub l_hat: u64,
}

impl EstimatedAllocation {
    pub fn single(gain: u64, l: u64) -> Self {
        let mut counts = BTreeMap::new();
        if l > 0 {
            counts.insert(gain, l);
        }
        Self { counts, l_hat: l }
    }

    pub fn get(&self, gain: u64) -> u64 {
        self.counts.get(&gain).copied().unwrap_or(0)
    }
}

/// Most likely split of `l` active nodes over the observed success gains:
/// every gain gets `floor(l / n_S)` times its success count, and the
/// remainder goes one node at a time to the gain with the smallest
/// `(m + 1) / successes`, smaller gain first on ties.
pub fn allocate_gain_counts(
    l: u64,
    success_gains: &BTreeMap<u64, u64>,
) -> Result<EstimatedAllocation> {
    let n_s: u64 = success_gains.values().sum();
    if n_s == 0 {
        return Err(Error::NoSuccesses);
    }
    if l < n_s {
        return Err(Error::TooFewCandidates { l, successes: n_s });
    }
    let base = l / n_s;
    let mut counts: BTreeMap<u64, u64> = success_gains
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&a, &c)| (a, base * c))
        .collect();
    for _ in 0..(l - base * n_s) {
        let mut best: Option<(u64, u64, u64)> = None; // (gain, m + 1, successes)
        for (&a, &m) in &counts {
            let s = success_gains[&a];
            let better = match best {
                None => true,
                // (m + 1) / s < (bm + 1) / bs
                Some((_, bm1, bs)) => (m + 1) * bs < bm1 * s,
            };
            if better {
                best = Some((a, m + 1, s));
            }
        }
        let (j, _, _) = best.expect("non-empty success set");
        *counts.get_mut(&j).unwrap() += 1;
    }
    Ok(EstimatedAllocation { counts, l_hat: l })
}

/// Log-probability that the delivered multiset is the one observed given
/// the allocation.
pub fn allocation_likelihood(
    alloc: &EstimatedAllocation,
    success_gains: &BTreeMap<u64, u64>,
) -> f64 {
    let n_s: u64 = success_gains.values().sum();
    let mut score = -ln_choose(alloc.l_hat, n_s);
    for (&a, &s) in success_gains {
        score += ln_choose(alloc.get(a), s);
    }
    score
}

/// Outcome of the active-population search for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveEstimate {
    pub alloc: EstimatedAllocation,
    pub score: f64,
    /// Candidate counts whose likelihood was evaluated.
    pub evaluations: u64,
    /// The score was still rising at the cap `l = N`.
    pub saturated: bool,
}

/// Joint score of candidate `l`: slot likelihood times the likelihood of
/// the delivered gains under the best allocation of `l` nodes.
pub fn candidate_score(l: u64, obs: &FrameObservation, w: u64) -> Result<f64> {
    let counts = (obs.n_singleton, obs.n_empty, obs.n_collision);
    let slot = observation_likelihood(l, w, counts)?;
    if obs.n_singleton == 0 {
        return Ok(slot);
    }
    let alloc = allocate_gain_counts(l, &obs.success_gains)?;
    Ok(slot + allocation_likelihood(&alloc, &obs.success_gains))
}

/// Hill-climbs `l` upward from the smallest count consistent with the slot
/// counts and stops at the first candidate that does not improve.
pub fn estimate_active(
    obs: &FrameObservation,
    w: u64,
    n_nodes: u64,
    threshold: u64,
) -> Result<ActiveEstimate> {
    let (n_s, n_e, n_c) = (obs.n_singleton, obs.n_empty, obs.n_collision);
    if n_s + n_e + n_c != w {
        return Err(Error::InconsistentObservation {
            singleton: n_s,
            empty: n_e,
            collision: n_c,
            frame_len: w,
        });
    }
    if n_s == 0 && n_c == 0 {
        return Ok(ActiveEstimate {
            alloc: EstimatedAllocation::single(threshold, 0),
            score: observation_likelihood(0, w, (0, n_e, 0))?,
            evaluations: 1,
            saturated: false,
        });
    }

    let lower = n_s + 2 * n_c;
    let upper = n_nodes.max(lower);
    let mut best_l = lower;
    let mut best = f64::NEG_INFINITY;
    let mut evaluations = 0;
    let mut saturated = true;
    for l in lower..=upper {
        let score = candidate_score(l, obs, w)?;
        evaluations += 1;
        if score > best {
            best = score;
            best_l = l;
        } else {
            saturated = false;
            break;
        }
    }

    let alloc = if n_s > 0 {
        allocate_gain_counts(best_l, &obs.success_gains)?
    } else {
        EstimatedAllocation::single(threshold, best_l)
    };
    Ok(ActiveEstimate {
        alloc,
        score: best,
        evaluations,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gains(pairs: &[(u64, u64)]) -> BTreeMap<u64, u64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn slot_probability_values() {
        assert_eq!(slot_probabilities(1, 1), (1.0, 0.0, 0.0));
        let (s, e, c) = slot_probabilities(2, 2);
        assert_abs_diff_eq!(s, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.25, epsilon = 1e-12);
        let (s, e, c) = slot_probabilities(3, 2);
        assert_abs_diff_eq!(s, 0.375, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.5, epsilon = 1e-12);
        assert_eq!(slot_probabilities(0, 5), (0.0, 1.0, 0.0));
    }

    #[test]
    fn observation_likelihood_values() {
        assert_abs_diff_eq!(
            observation_likelihood(1, 1, (1, 0, 0)).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            observation_likelihood(2, 2, (2, 0, 0)).unwrap(),
            0.25f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(
            observation_likelihood(2, 1, (1, 0, 0)).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(
            observation_likelihood(2, 3, (1, 0, 0)),
            Err(Error::InconsistentObservation { .. })
        ));
    }

    #[test]
    fn ln_choose_matches_small_binomials() {
        assert_abs_diff_eq!(ln_choose(10, 3), 120f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(ln_choose(7, 2), 21f64.ln(), epsilon = 1e-9);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
        assert_eq!(ln_choose(0, 0), 0.0);
    }

    #[test]
    fn allocation_examples() {
        let a = allocate_gain_counts(10, &gains(&[(2, 2), (5, 1)])).unwrap();
        assert_eq!(a.counts, gains(&[(2, 7), (5, 3)]));
        let a = allocate_gain_counts(3, &gains(&[(3, 2), (7, 1)])).unwrap();
        assert_eq!(a.counts, gains(&[(3, 2), (7, 1)]));
        let a = allocate_gain_counts(5, &gains(&[(2, 2), (5, 1)])).unwrap();
        assert_eq!(a.counts, gains(&[(2, 4), (5, 1)]));
        assert_eq!(
            allocate_gain_counts(2, &gains(&[(2, 2), (5, 1)])),
            Err(Error::TooFewCandidates { l: 2, successes: 3 })
        );
    }

    #[test]
    fn allocation_likelihood_examples() {
        let g = gains(&[(2, 2), (5, 1)]);
        let a = EstimatedAllocation {
            counts: gains(&[(2, 7), (5, 3)]),
            l_hat: 10,
        };
        assert_abs_diff_eq!(
            allocation_likelihood(&a, &g),
            (63.0f64 / 120.0).ln(),
            epsilon = 1e-9
        );
        let a = EstimatedAllocation {
            counts: g.clone(),
            l_hat: 3,
        };
        assert_abs_diff_eq!(allocation_likelihood(&a, &g), 0.0, epsilon = 1e-9);
        let a = EstimatedAllocation {
            counts: gains(&[(2, 4), (5, 1)]),
            l_hat: 5,
        };
        assert_abs_diff_eq!(allocation_likelihood(&a, &g), 0.6f64.ln(), epsilon = 1e-9);
        let a = EstimatedAllocation {
            counts: gains(&[(2, 1), (5, 4)]),
            l_hat: 5,
        };
        assert_eq!(allocation_likelihood(&a, &g), f64::NEG_INFINITY);
    }

    #[test]
    fn lone_success_estimates_one_node() {
        let obs = FrameObservation::from_counts(1, 0, 0, &[(4, 1)]);
        let est = estimate_active(&obs, 1, 10, 4).unwrap();
        assert_eq!(est.alloc.l_hat, 1);
        assert_eq!(est.alloc.counts, gains(&[(4, 1)]));
        assert_eq!(est.evaluations, 2);
        assert!(!est.saturated);
    }

    #[test]
    fn empty_frame_estimates_zero() {
        let obs = FrameObservation::from_counts(0, 2, 0, &[]);
        let est = estimate_active(&obs, 2, 10, 3).unwrap();
        assert_eq!(est.alloc.l_hat, 0);
        assert!(est.alloc.counts.is_empty());
    }

    #[test]
    fn collisions_only_put_everything_at_threshold() {
        let obs = FrameObservation::from_counts(0, 1, 3, &[]);
        let est = estimate_active(&obs, 4, 50, 6).unwrap();
        assert!(est.alloc.l_hat >= 6);
        assert_eq!(est.alloc.counts.len(), 1);
        assert_eq!(est.alloc.get(6), est.alloc.l_hat);
    }

    #[test]
    fn all_collision_cap_is_flagged() {
        // one slot, collided: the score keeps rising as l grows
        let obs = FrameObservation::from_counts(0, 0, 1, &[]);
        let est = estimate_active(&obs, 1, 5, 2).unwrap();
        assert_eq!(est.alloc.l_hat, 2);
        let obs = FrameObservation::from_counts(0, 0, 3, &[]);
        let est = estimate_active(&obs, 3, 6, 2).unwrap();
        assert!(est.saturated);
        assert_eq!(est.alloc.l_hat, 6);
    }
}
