//! Brute-force checks run by the `oracle` subcommand.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::Channel;
use crate::estimator::{allocate_gain_counts, allocation_likelihood, EstimatedAllocation};
use crate::ideal::{aar, ideal_decision, GainHistogram};

const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Exhaustive maximizer of the frame AAR over thresholds in the positive
/// support and `w` in `1..=n`; ties go to the larger threshold, then the
/// shorter frame.
pub fn exhaustive_ideal(hist: &GainHistogram, n: u64) -> Option<(u64, u64, f64)> {
    let mut best: Option<(u64, u64, f64)> = None;
    for (gamma, _) in hist.iter().filter(|&(g, c)| g > 0 && c > 0) {
        for w in 1..=n.max(1) {
            let v = aar(hist, gamma, w, n).ok()?;
            let better = match best {
                None => true,
                Some((bg, bw, bv)) => {
                    v > bv + TIE
                        || ((v - bv).abs() <= TIE && (gamma > bg || (gamma == bg && w < bw)))
                }
            };
            if better {
                best = Some((gamma, w, v));
            }
        }
    }
    best
}

fn random_histogram(rng: &mut ChaCha8Rng, max_nodes: u64, max_gain: u64) -> GainHistogram {
    loop {
        let n = rng.random_range(1..=max_nodes);
        let h = GainHistogram::from_gains((0..n).map(|_| rng.random_range(0..=max_gain)));
        if h.max_gain().is_some() {
            return h;
        }
    }
}

pub fn ideal_threshold_oracle(trials: usize, seed: u64) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut first = String::new();
    for _ in 0..trials {
        let h = random_histogram(&mut rng, 30, 6);
        let n = h.total();
        let brute = exhaustive_ideal(&h, n).map(|b| (b.0, b.1));
        let rule = ideal_decision(&h).ok();
        if brute != rule {
            failures += 1;
            if first.is_empty() {
                first = format!("{h:?}: exhaustive {brute:?} vs rule {rule:?}");
            }
        }
    }
    OracleReport {
        name: "ideal threshold argmax",
        passed: failures == 0,
        detail: if failures == 0 {
            format!("{trials} histograms")
        } else {
            format!("{failures}/{trials} mismatches, e.g. {first}")
        },
    }
}

/// Every allocation of `l` nodes over the observed gains with at least the
/// observed count at each gain.
pub fn all_allocations(l: u64, gains: &BTreeMap<u64, u64>) -> Vec<BTreeMap<u64, u64>> {
    let keys: Vec<(u64, u64)> = gains.iter().map(|(&a, &s)| (a, s)).collect();
    let floor: u64 = keys.iter().map(|k| k.1).sum();
    let mut out = Vec::new();
    if l < floor {
        return out;
    }
    fn rec(
        keys: &[(u64, u64)],
        spare: u64,
        cur: &mut BTreeMap<u64, u64>,
        out: &mut Vec<BTreeMap<u64, u64>>,
    ) {
        match keys {
            [] => {
                if spare == 0 {
                    out.push(cur.clone());
                }
            }
            [(a, s), rest @ ..] => {
                for extra in 0..=spare {
                    cur.insert(*a, s + extra);
                    rec(rest, spare - extra, cur, out);
                }
                cur.remove(a);
            }
        }
    }
    rec(&keys, l - floor, &mut BTreeMap::new(), &mut out);
    out
}

/// Success multisets with up to `max_distinct` gains and total count up to
/// `max_total`, every count positive.
pub fn success_multisets(max_distinct: usize, max_total: u64) -> Vec<BTreeMap<u64, u64>> {
    let mut out = Vec::new();
    for k in 1..=max_distinct {
        let mut counts = vec![1u64; k];
        loop {
            if counts.iter().sum::<u64>() <= max_total {
                out.push(
                    counts
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| (i as u64 + 2, c))
                        .collect(),
                );
            }
            // odometer over 1..=max_total
            let mut j = 0;
            while j < k {
                counts[j] += 1;
                if counts[j] <= max_total {
                    break;
                }
                counts[j] = 1;
                j += 1;
            }
            if j == k {
                break;
            }
        }
    }
    out
}

pub fn allocation_oracle(max_l: u64, max_distinct: usize, max_total: u64) -> OracleReport {
    let mut cases = 0;
    let mut failures = 0;
    let mut first = String::new();
    for gains in success_multisets(max_distinct, max_total) {
        let n_s: u64 = gains.values().sum();
        for l in n_s..=max_l {
            cases += 1;
            let alloc = match allocate_gain_counts(l, &gains) {
                Ok(a) => a,
                Err(e) => {
                    failures += 1;
                    first = format!("{gains:?} l={l}: {e}");
                    continue;
                }
            };
            let got = allocation_likelihood(&alloc, &gains);
            let best = all_allocations(l, &gains)
                .into_iter()
                .map(|counts| {
                    allocation_likelihood(&EstimatedAllocation { counts, l_hat: l }, &gains)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            if got < best - 1e-9 {
                failures += 1;
                if first.is_empty() {
                    first = format!("{gains:?} l={l}: {got} < {best}");
                }
            }
        }
    }
    OracleReport {
        name: "gain allocation optimality",
        passed: failures == 0 && cases > 0,
        detail: if failures == 0 {
            format!("{cases} cases")
        } else {
            format!("{failures}/{cases} failures, e.g. {first}")
        },
    }
}

/// Empirical per-node success rate with `n` contenders in `w` slots.
pub fn empirical_success_rate(n: u64, w: u64, frames: u64, seed: u64) -> f64 {
    let mut ch = Channel::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active: Vec<(usize, u64)> = (0..n as usize).map(|i| (i, 1)).collect();
    let mut hits = 0u64;
    for _ in 0..frames {
        hits += ch.run_frame(&active, w, &mut rng).n_singleton;
    }
    hits as f64 / (frames * n) as f64
}

/// Empirical deliveries per slot with `n` contenders in `w` slots.
pub fn empirical_throughput(n: u64, w: u64, frames: u64, seed: u64) -> f64 {
    empirical_success_rate(n, w, frames, seed) * n as f64 / w as f64
}

pub fn channel_law_oracle(frames: u64, seed: u64) -> OracleReport {
    let rate = empirical_success_rate(5, 5, frames, seed);
    let mut ok = (rate - 0.4096).abs() <= 0.005;
    let mut detail = format!("P_s(5,5) = {rate:.5}");
    for n in [2u64, 5, 10] {
        let best = (1..=20u64)
            .map(|w| {
                (
                    w,
                    empirical_throughput(n, w, frames / 10, seed ^ (n << 8) ^ w),
                )
            })
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
        ok &= best.0 == n;
        detail.push_str(&format!("; argmax_w thr(n={n}) = {}", best.0));
    }
    OracleReport {
        name: "collision channel law",
        passed: ok,
        detail,
    }
}

/// The default oracle battery.
pub fn run_all(seed: u64) -> Vec<OracleReport> {
    vec![
        ideal_threshold_oracle(200, seed),
        allocation_oracle(12, 3, 4),
        channel_law_oracle(100_000, seed),
    ]
}
