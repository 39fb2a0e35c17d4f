//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! on stderr (bypassing test capture); the test fails if any is red.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tdfsa::channel::Channel;
use tdfsa::estimator::{allocate_gain_counts, propagate_arrivals, ArrivalContext, GainPmf};
use tdfsa::harness::{
    run_scenario, write_results, InitialY, ProtocolKind, RunResult, ScenarioConfig, WMin,
};
use tdfsa::ideal::{aar, GainHistogram};
use tdfsa::par::Execution;
use tdfsa::sim::{simulate, Protocol, SimConfig};
use tdfsa::verify::{
    allocation_oracle, channel_law_oracle, exhaustive_ideal, ideal_threshold_oracle,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(
    protocol: ProtocolKind,
    n: u64,
    lambda: f64,
    slots: u64,
    w_min: WMin,
) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(protocol, n, lambda);
    cfg.total_slots = slots;
    cfg.w_min = w_min;
    cfg
}

fn run(cfg: &ScenarioConfig) -> (RunResult, Duration) {
    let t = Instant::now();
    let r = run_scenario(cfg, Execution::Parallel).expect("scenario runs");
    (r, t.elapsed())
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn ideal_threshold_argmax() -> Outcome {
    let t = Instant::now();
    let r = ideal_threshold_oracle(200, 7);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.passed && secs < 10.0,
        format!("{} in {secs:.2}s", r.detail),
    )
}

/// Mean per-slot AoI reduction of one frame in which every node with gain
/// at least `threshold` contends.
fn monte_carlo_aar(hist: &GainHistogram, threshold: u64, w: u64, frames: u64, seed: u64) -> f64 {
    let n = hist.total();
    let active: Vec<(usize, u64)> = hist
        .iter()
        .filter(|&(g, _)| g >= threshold)
        .flat_map(|(g, c)| std::iter::repeat_n(g, c as usize))
        .enumerate()
        .collect();
    let mut ch = Channel::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reduced = 0u64;
    for _ in 0..frames {
        let obs = ch.run_frame(&active, w, &mut rng);
        reduced += obs.success_gains.iter().map(|(g, c)| g * c).sum::<u64>();
    }
    reduced as f64 / (frames * n * w) as f64 - 1.0
}

fn reference_frame_aar() -> Outcome {
    let h = GainHistogram::from_counts([(0, 4), (1, 1), (2, 6), (3, 6), (4, 3)]);
    let exact = aar(&h, 4, 3, 20).unwrap();
    let mc = monte_carlo_aar(&h, 4, 3, 100_000, 11);
    let mut best = (0, 0, f64::NEG_INFINITY);
    for gamma in 1..=4 {
        for w in 1..=20 {
            let v = monte_carlo_aar(&h, gamma, w, 100_000, 13 + gamma * 64 + w);
            if v > best.2 {
                best = (gamma, w, v);
            }
        }
    }
    let analytic = exhaustive_ideal(&h, 20).map(|b| (b.0, b.1));
    let pass = (mc - (-0.91111)).abs() <= 0.005
        && (exact - (-0.91111)).abs() < 1e-5
        && (best.0, best.1) == (4, 3)
        && analytic == Some((4, 3));
    outcome(
        pass,
        format!(
            "MC AAR(4,3) = {mc:.5}, exact {exact:.5}, MC argmax ({}, {}), analytic argmax {analytic:?}",
            best.0, best.1
        ),
    )
}

fn allocation_optimality() -> Outcome {
    let t = Instant::now();
    let r = allocation_oracle(12, 3, 4);
    let gains: BTreeMap<u64, u64> = [(2, 2), (5, 1)].into_iter().collect();
    let reference = allocate_gain_counts(10, &gains).map(|a| a.counts);
    let want: BTreeMap<u64, u64> = [(2, 7), (5, 3)].into_iter().collect();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        r.passed && reference.as_ref() == Ok(&want) && secs < 30.0,
        format!("{}; reference instance {reference:?}; {secs:.2}s", r.detail),
    )
}

fn channel_law() -> Outcome {
    let r = channel_law_oracle(100_000, 5);
    outcome(r.passed, r.detail)
}

fn estimator_closure() -> Outcome {
    let cfg = SimConfig {
        protocol: Protocol::Tdfsa { w_min: 3 },
        lambda: 0.3,
        initial_ap_ages: (1..=100).collect(),
        total_slots: 520_000,
        warmup_slots: 0,
        reset_patience: 50,
        complexity_shortcut: false,
        stability_window: 10_000,
    };
    let rep = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let frames = rep.metrics.frame_count;
    outcome(
        rep.closure_violations == 0 && frames >= 100_000,
        format!("{frames} frames, {} violations", rep.closure_violations),
    )
}

fn propagation_spot_value() -> Outcome {
    let ctx = ArrivalContext {
        lambda: 0.5,
        frame_len: 1,
        max_ap_age: 3,
        max_initial_age: 1,
        frame_start: 10,
    };
    let out = propagate_arrivals(&GainPmf::point_mass(0), &ctx, None)
        .unwrap()
        .pmf;
    let expect = [0.5, 0.285714, 0.142857, 0.071429];
    let got: Vec<f64> = (0..5).map(|a| out.get(a)).collect();
    let pass = expect.iter().zip(&got).all(|(e, g)| (e - g).abs() <= 1e-6) && got[4] == 0.0;
    outcome(pass, format!("{got:.6?}"))
}

fn large_network_table() -> Outcome {
    let (t, t_time) = run(&scenario(
        ProtocolKind::Tdfsa,
        500,
        0.002,
        1_000_000,
        WMin::Sweep,
    ));
    let (d, d_time) = run(&scenario(
        ProtocolKind::IdealDfsa,
        500,
        0.002,
        1_000_000,
        WMin::Fixed(1),
    ));
    // each w_min candidate is its own run
    let per_run = t_time.as_secs_f64() / t.w_min_scores.len().max(1) as f64;
    let pass = within(t.n_aaoi, 1.73, 0.15)
        && within(d.n_aaoi, 3.42, 0.15)
        && per_run <= 300.0
        && d_time.as_secs_f64() <= 300.0;
    outcome(
        pass,
        format!(
            "T-DFSA N-AAoI {:.4} (w_min {:?}, {per_run:.0}s/run), ideal DFSA {:.4} ({:.1}s)",
            t.n_aaoi,
            t.w_min,
            d.n_aaoi,
            d_time.as_secs_f64()
        ),
    )
}

fn dominance_over_baselines() -> Outcome {
    let slots = 200_000;
    let mut tdfsa_best = (0, f64::INFINITY);
    for w in 1..=3 {
        let (r, _) = run(&scenario(
            ProtocolKind::Tdfsa,
            50,
            0.6,
            slots,
            WMin::Fixed(w),
        ));
        if r.aag.mean < tdfsa_best.1 {
            tdfsa_best = (w, r.aag.mean);
        }
    }
    let mut fsa = scenario(ProtocolKind::FixedFsa, 50, 0.6, slots, WMin::Fixed(1));
    fsa.search.total_slots = Some(50_000);
    let mut ta = fsa.clone();
    ta.protocol = ProtocolKind::ThresholdAloha;
    let (f, _) = run(&fsa);
    let (t, _) = run(&ta);
    let gap = 1.0 - tdfsa_best.1 / f.aag.mean;
    outcome(
        gap >= 0.40 && tdfsa_best.1 <= t.aag.mean,
        format!(
            "T-DFSA AAG {:.3} (w_min {}), FSA {:.3} (W {:?}), {:.0}% lower; TA {:.3} {:?}",
            tdfsa_best.1,
            tdfsa_best.0,
            f.aag.mean,
            f.fsa_frame_len,
            100.0 * gap,
            t.aag.mean,
            t.ta_params
        ),
    )
}

fn frame_length_profile() -> Outcome {
    let mut low = scenario(ProtocolKind::Tdfsa, 100, 0.3, 1_000_000, WMin::Sweep);
    low.replications = 2;
    let (lo, _) = run(&low);
    let mut fixed3 = low.clone();
    fixed3.w_min = WMin::Fixed(3);
    let (lo3, _) = run(&fixed3);
    let mut high = low.clone();
    high.lambda = 0.8;
    let (hi, _) = run(&high);
    let pass = lo.w_min == Some(3)
        && lo.min_frame_len == Some(4)
        && lo3.min_frame_len == Some(4)
        && hi.w_min == Some(2);
    outcome(
        pass,
        format!(
            "lambda 0.3: optimum w_min {:?} (AAG by w_min {:.2?}), min frame {:?}, min frame at w_min 3 {:?}; \
             lambda 0.8: optimum w_min {:?} (AAG by w_min {:.2?})",
            lo.w_min, lo.w_min_scores, lo.min_frame_len, lo3.min_frame_len, hi.w_min, hi.w_min_scores
        ),
    )
}

fn stability() -> Outcome {
    let ramp = scenario(ProtocolKind::Tdfsa, 100, 0.3, 1_000_000, WMin::Fixed(3));
    let mut uniform = ramp.clone();
    uniform.initial_y = InitialY::Uniform;
    let (r, _) = run(&ramp);
    let (u, _) = run(&uniform);
    let transient = u.last_reset_slot.is_none_or(|s| s < u.warmup_slots);
    outcome(
        r.stable && u.stable && transient,
        format!(
            "ramp slope {:.2e} stable {}; uniform slope {:.2e} stable {}, {} post-warmup resets, last reset at slot {:?} (warmup {})",
            r.max_slope, r.stable, u.max_slope, u.stable, u.resets, u.last_reset_slot, u.warmup_slots
        ),
    )
}

fn determinism() -> Outcome {
    let mut cfg = scenario(ProtocolKind::Tdfsa, 30, 0.05, 100_000, WMin::Sweep);
    cfg.replications = 3;
    cfg.seed = 99;
    let csv = |exec| {
        let mut buf = Vec::new();
        write_results(&mut buf, &[run_scenario(&cfg, exec).unwrap()]).unwrap();
        buf
    };
    let a = csv(Execution::Parallel);
    let b = csv(Execution::Parallel);
    let c = csv(Execution::Sequential);
    outcome(
        a == b && a == c,
        format!(
            "{} bytes, parallel/parallel/sequential identical: {}",
            a.len(),
            a == b && a == c
        ),
    )
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("ideal threshold argmax", ideal_threshold_argmax),
        ("reference frame AAR", reference_frame_aar),
        ("gain allocation optimality", allocation_optimality),
        ("collision channel law", channel_law),
        ("estimator closure", estimator_closure),
        ("arrival propagation spot value", propagation_spot_value),
        ("N=500 N-AAoI table", large_network_table),
        ("dominance over FSA and TA", dominance_over_baselines),
        ("frame length profile", frame_length_profile),
        ("stability and reset", stability),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let line = format!(
            "{} {:>2} {name}: {} [{:.1}s]\n",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        err.write_all(line.as_bytes()).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
