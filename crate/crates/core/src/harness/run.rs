//! Replicated scenario runs, parameter searches, and sweeps.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{coarse_to_fine, ta_tx_grid};
use crate::error::Result;
use crate::par::{map_indexed, Execution};
use crate::sim::{simulate, Protocol, Replication, SimConfig};

use super::config::{ConfigFile, ProtocolKind, ScenarioConfig, WMin};

/// Candidates tried when `w_min = "sweep"`.
pub const W_MIN_CANDIDATES: std::ops::RangeInclusive<u64> = 1..=5;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregated outcome of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub protocol: ProtocolKind,
    pub n_nodes: u64,
    pub lambda: f64,
    /// T-DFSA only: the value used (the best one under a sweep).
    pub w_min: Option<u64>,
    pub fsa_frame_len: Option<u64>,
    pub ta_params: Option<(u64, f64)>,
    pub seed: u64,
    pub replications: u64,
    pub total_slots: u64,
    pub warmup_slots: u64,
    pub aag: Stat,
    pub aaoi: Stat,
    pub n_aaoi: f64,
    pub throughput: Stat,
    pub complexity_per_slot: f64,
    pub stable: bool,
    /// Largest per-replication slope of the windowed mean AP age.
    pub max_slope: f64,
    pub frame_len_pmf: BTreeMap<u64, f64>,
    pub min_frame_len: Option<u64>,
    pub resets: u64,
    /// Last reset slot over all replications.
    pub last_reset_slot: Option<u64>,
    pub closure_violations: u64,
    /// Mean AAG by candidate when `w_min` was swept.
    pub w_min_scores: Vec<(u64, f64)>,
}

fn sim_config(cfg: &ScenarioConfig, protocol: Protocol, total_slots: u64) -> SimConfig {
    let warmup = if total_slots == cfg.total_slots {
        cfg.warmup()
    } else {
        total_slots / 5
    };
    SimConfig {
        protocol,
        lambda: cfg.lambda,
        initial_ap_ages: cfg.initial_ap_ages(),
        total_slots,
        warmup_slots: warmup,
        reset_patience: cfg.reset_patience,
        complexity_shortcut: cfg.complexity_shortcut,
        stability_window: cfg.stability_window,
    }
}

/// Runs `cfg.replications` replications of `protocol`; replication `r`
/// uses seed `cfg.seed + r`.
pub fn run_replications(
    cfg: &ScenarioConfig,
    protocol: &Protocol,
    exec: Execution,
) -> Result<Vec<Replication>> {
    run_replications_for(cfg, protocol, cfg.total_slots, exec)
}

fn run_replications_for(
    cfg: &ScenarioConfig,
    protocol: &Protocol,
    total_slots: u64,
    exec: Execution,
) -> Result<Vec<Replication>> {
    let sim = sim_config(cfg, protocol.clone(), total_slots);
    map_indexed(cfg.replications as usize, exec, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
        simulate(&sim, &mut rng)
    })
    .into_iter()
    .collect()
}

fn mean_aag(reps: &[Replication], n: u64) -> f64 {
    Stat::of(
        &reps
            .iter()
            .map(|r| r.metrics.aag(n as usize))
            .collect::<Vec<_>>(),
    )
    .mean
}

fn aggregate(cfg: &ScenarioConfig, protocol: &Protocol, reps: &[Replication]) -> RunResult {
    let n = cfg.n_nodes as usize;
    let aag: Vec<f64> = reps.iter().map(|r| r.metrics.aag(n)).collect();
    let aaoi: Vec<f64> = reps.iter().map(|r| r.metrics.aaoi(n)).collect();
    let thr: Vec<f64> = reps.iter().map(|r| r.metrics.throughput()).collect();
    let cx: Vec<f64> = reps
        .iter()
        .map(|r| r.metrics.complexity_per_slot())
        .collect();
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for r in reps {
        for (&w, &c) in &r.metrics.frame_len_histogram {
            *hist.entry(w).or_default() += c;
        }
    }
    let frames: u64 = hist.values().sum();
    let frame_len_pmf = hist
        .iter()
        .map(|(&w, &c)| (w, c as f64 / frames.max(1) as f64))
        .collect();
    let max_slope = reps
        .iter()
        .map(|r| r.stability_slope())
        .fold(f64::NEG_INFINITY, f64::max);
    let aaoi = Stat::of(&aaoi);
    let (w_min, fsa_frame_len, ta_params) = match *protocol {
        Protocol::Tdfsa { w_min } => (Some(w_min), None, None),
        Protocol::FixedFsa { frame_len } => (None, Some(frame_len), None),
        Protocol::ThresholdAloha { threshold, tx_prob } => (None, None, Some((threshold, tx_prob))),
        _ => (None, None, None),
    };
    RunResult {
        protocol: cfg.protocol,
        n_nodes: cfg.n_nodes,
        lambda: cfg.lambda,
        w_min,
        fsa_frame_len,
        ta_params,
        seed: cfg.seed,
        replications: cfg.replications,
        total_slots: cfg.total_slots,
        warmup_slots: cfg.warmup(),
        aag: Stat::of(&aag),
        aaoi,
        n_aaoi: aaoi.mean / cfg.n_nodes as f64,
        throughput: Stat::of(&thr),
        complexity_per_slot: Stat::of(&cx).mean,
        stable: max_slope <= cfg.stability_epsilon,
        max_slope,
        min_frame_len: hist.keys().next().copied(),
        frame_len_pmf,
        resets: reps.iter().map(|r| r.metrics.reset_count).sum(),
        last_reset_slot: reps.iter().filter_map(|r| r.last_reset_slot).max(),
        closure_violations: reps.iter().map(|r| r.closure_violations).sum(),
        w_min_scores: Vec::new(),
    }
}

/// Fixed-frame FSA length minimizing AAG over `1..=range_factor * N`.
pub fn search_fsa_frame_len(cfg: &ScenarioConfig, exec: Execution) -> Result<(u64, f64)> {
    let slots = cfg.search.total_slots.unwrap_or(cfg.total_slots);
    let hi = (cfg.search.range_factor * cfg.n_nodes).max(1);
    let mut err = None;
    let best = coarse_to_fine(1, hi, cfg.search.points, |w| {
        match run_replications_for(cfg, &Protocol::FixedFsa { frame_len: w }, slots, exec) {
            Ok(reps) => mean_aag(&reps, cfg.n_nodes),
            Err(e) => {
                err.get_or_insert(e);
                f64::INFINITY
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// Threshold-ALOHA `(threshold, tx_prob)` minimizing AAG: thresholds in
/// `1..=range_factor * N` and probabilities on the configured grid, each
/// searched coarse-to-fine.
pub fn search_ta_params(cfg: &ScenarioConfig, exec: Execution) -> Result<((u64, f64), f64)> {
    let slots = cfg.search.total_slots.unwrap_or(cfg.total_slots);
    let hi = (cfg.search.range_factor * cfg.n_nodes).max(1);
    let taus = ta_tx_grid(cfg.search.tx_prob_step);
    let mut err = None;
    let mut best_tau: BTreeMap<u64, f64> = BTreeMap::new();
    let (threshold, value) = coarse_to_fine(1, hi, cfg.search.points, |threshold| {
        let (k, v) = coarse_to_fine(0, taus.len() as u64 - 1, cfg.search.points, |k| {
            let p = Protocol::ThresholdAloha {
                threshold,
                tx_prob: taus[k as usize],
            };
            match run_replications_for(cfg, &p, slots, exec) {
                Ok(reps) => mean_aag(&reps, cfg.n_nodes),
                Err(e) => {
                    err.get_or_insert(e);
                    f64::INFINITY
                }
            }
        });
        best_tau.insert(threshold, taus[k as usize]);
        v
    });
    match err {
        Some(e) => Err(e),
        None => Ok(((threshold, best_tau[&threshold]), value)),
    }
}

/// Concrete protocol for `cfg`, running the baseline searches for any
/// parameter left unset.
pub fn resolve_protocol(cfg: &ScenarioConfig, w_min: u64, exec: Execution) -> Result<Protocol> {
    Ok(match cfg.protocol {
        ProtocolKind::Tdfsa => Protocol::Tdfsa { w_min },
        ProtocolKind::IdealTdfsa => Protocol::IdealTdfsa,
        ProtocolKind::IdealDfsa => Protocol::IdealDfsa,
        ProtocolKind::FixedFsa => Protocol::FixedFsa {
            frame_len: match cfg.fsa_frame_len {
                Some(w) => w,
                None => search_fsa_frame_len(cfg, exec)?.0,
            },
        },
        ProtocolKind::ThresholdAloha => {
            let (threshold, tx_prob) = match (cfg.ta_threshold, cfg.ta_tx_prob) {
                (Some(g), Some(p)) => (g, p),
                _ => search_ta_params(cfg, exec)?.0,
            };
            Protocol::ThresholdAloha { threshold, tx_prob }
        }
    })
}

/// Runs one scenario and aggregates its post-warmup metrics.
pub fn run_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<RunResult> {
    cfg.validate()?;
    match (cfg.protocol, cfg.w_min) {
        (ProtocolKind::Tdfsa, WMin::Sweep) => {
            let candidates: Vec<u64> = W_MIN_CANDIDATES.collect();
            let results = map_indexed(candidates.len(), exec, |i| {
                let p = Protocol::Tdfsa {
                    w_min: candidates[i],
                };
                run_replications(cfg, &p, exec).map(|reps| aggregate(cfg, &p, &reps))
            });
            let mut best: Option<RunResult> = None;
            let mut scores = Vec::new();
            for (w, res) in candidates.into_iter().zip(results) {
                let res = res?;
                scores.push((w, res.aag.mean));
                if best.as_ref().is_none_or(|b| res.aag.mean < b.aag.mean) {
                    best = Some(res);
                }
            }
            let mut best = best.expect("non-empty candidate range");
            best.w_min_scores = scores;
            Ok(best)
        }
        (_, w) => {
            let w_min = match w {
                WMin::Fixed(v) => v,
                WMin::Sweep => 1,
            };
            let p = resolve_protocol(cfg, w_min, exec)?;
            let reps = run_replications(cfg, &p, exec)?;
            Ok(aggregate(cfg, &p, &reps))
        }
    }
}

/// One result per grid point, in grid order. Point `i` runs with seed
/// `base_seed + i * replications`.
pub fn run_sweep(file: &ConfigFile, exec: Execution) -> Vec<Result<RunResult>> {
    let points = file.points();
    map_indexed(points.len(), exec, |i| {
        let mut cfg = points[i].clone()?;
        cfg.seed = file.base.seed.wrapping_add(i as u64 * cfg.replications);
        run_scenario(&cfg, exec)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-12);
        assert_eq!(Stat::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn single_node_full_rate() {
        let mut cfg = ScenarioConfig::new(ProtocolKind::Tdfsa, 1, 1.0);
        cfg.total_slots = 100_000;
        let r = run_scenario(&cfg, Execution::Sequential).unwrap();
        assert!((r.aaoi.mean - 2.0).abs() < 0.01);
        assert_eq!(r.n_aaoi, r.aaoi.mean);
        assert!(r.stable);
    }

    #[test]
    fn replications_are_order_independent() {
        let mut cfg = ScenarioConfig::new(ProtocolKind::Tdfsa, 10, 0.3);
        cfg.total_slots = 5_000;
        cfg.replications = 3;
        let a = run_scenario(&cfg, Execution::Sequential).unwrap();
        let b = run_scenario(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ScenarioConfig::new(ProtocolKind::Tdfsa, 10, 0.0);
        assert!(run_scenario(&cfg, Execution::Sequential).is_err());
    }
}
