//! One replication: ground-truth population, a frame policy, and the
//! post-warmup metrics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::baselines;
use crate::channel::{Channel, FrameObservation};
use crate::error::{Error, Result};
use crate::estimator::{ApContext, EstimatorConfig, FrameReport};
use crate::ideal::{ideal_decision, GainHistogram};
use crate::model::{FrameDecision, MetricsAccumulator, NodeState};

/// How active nodes access the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contention {
    /// One transmission per active node in a uniformly chosen slot.
    Uniform,
    /// Single slot, each active node transmits with the given probability.
    Bernoulli(f64),
}

/// Ground-truth node and AP ages with lazily sampled generation instants.
#[derive(Debug, Clone)]
pub struct Population {
    x: Vec<u64>,
    y: Vec<u64>,
    next_gen: Vec<u64>,
    lambda: f64,
    gap: Option<Geometric>,
    clock: u64,
    channel: Channel,
    active: Vec<(usize, u64)>,
    success: Vec<bool>,
}

/// What happened in one played frame.
#[derive(Debug, Clone)]
pub struct PlayedFrame {
    pub observation: FrameObservation,
    /// `max_i y` at frame start.
    pub max_ap_age: u64,
    /// `sum_i y_k` over the frame slots.
    pub sum_ap_age: u128,
    pub sum_node_age: u128,
    /// `sum_i y` at frame start.
    pub ap_age_total: u128,
}

impl Population {
    /// Every node starts with a fresh update (`x = 1`) and the given AP age.
    pub fn new<R: Rng>(initial_ap_ages: &[u64], lambda: f64, rng: &mut R) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidLambda(lambda));
        }
        if initial_ap_ages.contains(&0) {
            return Err(Error::Config("initial AP ages must be at least 1".into()));
        }
        let gap = if lambda < 1.0 {
            Some(Geometric::new(lambda).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        let n = initial_ap_ages.len();
        let mut pop = Self {
            x: vec![1; n],
            y: initial_ap_ages.to_vec(),
            next_gen: vec![0; n],
            lambda,
            gap,
            clock: 0,
            channel: Channel::new(),
            active: Vec::new(),
            success: vec![false; n],
        };
        for i in 0..n {
            pop.next_gen[i] = pop.draw_gap(rng);
        }
        Ok(pop)
    }

    fn draw_gap<R: Rng>(&self, rng: &mut R) -> u64 {
        match &self.gap {
            Some(g) => g.sample(rng),
            None => 0,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Absolute index of the next frame's first slot.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn ap_ages(&self) -> &[u64] {
        &self.y
    }

    pub fn node_ages(&self) -> &[u64] {
        &self.x
    }

    pub fn gain(&self, i: usize) -> u64 {
        self.y[i] - self.x[i]
    }

    pub fn node(&self, i: usize) -> NodeState {
        NodeState::new(i, self.x[i], self.y[i])
    }

    pub fn backlogged(&self) -> u64 {
        (0..self.len()).filter(|&i| self.gain(i) > 0).count() as u64
    }

    pub fn gain_histogram(&self) -> GainHistogram {
        GainHistogram::from_gains((0..self.len()).map(|i| self.gain(i)))
    }

    pub fn max_ap_age(&self) -> u64 {
        self.y.iter().copied().max().unwrap_or(1)
    }

    /// Plays one frame starting at [`Self::clock`]: backlogged nodes with
    /// gain at least the threshold contend, then every node's ages advance.
    pub fn play<R: Rng>(
        &mut self,
        threshold: u64,
        frame_len: u64,
        mode: Contention,
        rng: &mut R,
    ) -> PlayedFrame {
        self.play_logged(threshold, frame_len, mode, rng, None)
    }

    /// As [`Self::play`], also appending `(node, slot)` for every generation
    /// inside the frame.
    pub fn play_logged<R: Rng>(
        &mut self,
        threshold: u64,
        frame_len: u64,
        mode: Contention,
        rng: &mut R,
        mut log: Option<&mut Vec<(usize, u64)>>,
    ) -> PlayedFrame {
        let threshold = threshold.max(1);
        let w = frame_len.max(1);
        let start = self.clock;
        let end = start + w;

        self.active.clear();
        let mut max_ap_age = 0;
        let mut ap_age_total: u128 = 0;
        for i in 0..self.len() {
            let g = self.y[i] - self.x[i];
            if g >= threshold {
                self.active.push((i, g));
            }
            max_ap_age = max_ap_age.max(self.y[i]);
            ap_age_total += u128::from(self.y[i]);
        }
        let observation = match mode {
            Contention::Uniform => self.channel.run_frame(&self.active, w, rng),
            Contention::Bernoulli(p) => self.channel.run_slot(&self.active, p, rng),
        };
        for &id in &observation.success_node_ids {
            self.success[id] = true;
        }

        let mut sum_node_age: u128 = 0;
        for i in 0..self.len() {
            let mut seg_start = start;
            let mut seg_age = self.x[i];
            let mut node_total = 0u64;
            while self.next_gen[i] < end {
                let g = self.next_gen[i];
                if let Some(log) = log.as_deref_mut() {
                    log.push((i, g));
                }
                let len = g + 1 - seg_start;
                node_total += len * seg_age + len * (len - 1) / 2;
                seg_start = g + 1;
                seg_age = 1;
                self.next_gen[i] = g + 1 + self.draw_gap(rng);
            }
            let len = end - seg_start;
            node_total += len * seg_age + len * len.saturating_sub(1) / 2;
            sum_node_age += u128::from(node_total);

            let x_next = if seg_start > start {
                end - seg_start + 1
            } else {
                self.x[i] + w
            };
            self.y[i] = if self.success[i] {
                self.x[i] + w
            } else {
                self.y[i] + w
            };
            self.x[i] = x_next;
            self.success[i] = false;
        }
        let n = self.len() as u128;
        let w128 = u128::from(w);
        let sum_ap_age = w128 * ap_age_total + n * w128 * (w128 - 1) / 2;
        self.clock = end;
        PlayedFrame {
            observation,
            max_ap_age: max_ap_age.max(1),
            sum_ap_age,
            sum_node_age,
            ap_age_total,
        }
    }
}

/// Frame policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    /// Practical T-DFSA.
    Tdfsa {
        w_min: u64,
    },
    /// T-DFSA with exact knowledge of every age-gain.
    IdealTdfsa,
    /// Frame length equal to the true backlog; every backlogged node contends.
    IdealDfsa,
    FixedFsa {
        frame_len: u64,
    },
    ThresholdAloha {
        threshold: u64,
        tx_prob: f64,
    },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Tdfsa { .. } => "tdfsa",
            Protocol::IdealTdfsa => "ideal_tdfsa",
            Protocol::IdealDfsa => "ideal_dfsa",
            Protocol::FixedFsa { .. } => "fixed_fsa",
            Protocol::ThresholdAloha { .. } => "threshold_aloha",
        }
    }
}

/// Settings for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub lambda: f64,
    pub initial_ap_ages: Vec<u64>,
    pub total_slots: u64,
    pub warmup_slots: u64,
    pub reset_patience: u64,
    pub complexity_shortcut: bool,
    pub stability_window: u64,
}

/// Windowed sums of the network AP age for the stability check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgeTrace {
    pub window: u64,
    pub first_slot: u64,
    /// `sum_k sum_i y_k` per window of `window` slots, starting at `first_slot`.
    pub sums: Vec<f64>,
}

impl AgeTrace {
    pub fn new(window: u64, first_slot: u64) -> Self {
        Self {
            window: window.max(1),
            first_slot,
            sums: Vec::new(),
        }
    }

    /// Adds a frame whose slot `k` has network AP age
    /// `total + n * (k - start)`.
    pub fn add_frame(&mut self, start: u64, frame_len: u64, total: u128, n: u64) {
        let end = start + frame_len;
        let mut s = start.max(self.first_slot);
        while s < end {
            let idx = ((s - self.first_slot) / self.window) as usize;
            let window_end = self.first_slot + (idx as u64 + 1) * self.window;
            let e = end.min(window_end);
            let (lo, hi) = (s - start, e - start);
            let count = (hi - lo) as f64;
            let offsets = (hi * (hi.saturating_sub(1)) / 2 - lo * lo.saturating_sub(1) / 2) as f64;
            if self.sums.len() <= idx {
                self.sums.resize(idx + 1, 0.0);
            }
            self.sums[idx] += count * total as f64 + n as f64 * offsets;
            s = e;
        }
    }

    /// Least-squares slope of the per-window mean per-node AP age against
    /// slot index, over windows completed by `horizon`.
    pub fn slope(&self, n: u64, horizon: u64) -> f64 {
        let full = (horizon.saturating_sub(self.first_slot) / self.window) as usize;
        let points: Vec<(f64, f64)> = self
            .sums
            .iter()
            .take(full)
            .enumerate()
            .map(|(j, &s)| {
                let centre = self.first_slot as f64 + (j as f64 + 0.5) * self.window as f64;
                (centre, s / (self.window as f64 * n as f64))
            })
            .collect();
        if points.len() < 2 {
            return 0.0;
        }
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }
}

/// Output of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub metrics: MetricsAccumulator,
    pub trace: AgeTrace,
    pub n_nodes: u64,
    /// Frames whose estimated PMF broke a closure condition.
    pub closure_violations: u64,
    /// Slot at which the last estimator reset happened.
    pub last_reset_slot: Option<u64>,
}

impl Replication {
    pub fn stability_slope(&self) -> f64 {
        self.trace.slope(self.n_nodes, self.metrics_horizon())
    }

    fn metrics_horizon(&self) -> u64 {
        self.trace.first_slot + self.metrics.slot_count
    }
}

const MASS_TOLERANCE: f64 = 1e-9;

/// Runs a whole replication. Frames are played until the horizon is
/// reached; a frame counts toward the metrics if it starts at or after the
/// warmup boundary.
pub fn simulate(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Replication> {
    let n = cfg.initial_ap_ages.len() as u64;
    if n == 0 {
        return Err(Error::Config("at least one node is required".into()));
    }
    let mut pop = Population::new(&cfg.initial_ap_ages, cfg.lambda, rng)?;
    let mut ap = match cfg.protocol {
        Protocol::Tdfsa { w_min } => {
            let mut ecfg = EstimatorConfig::new(n, cfg.lambda, w_min);
            ecfg.reset_patience = cfg.reset_patience;
            ecfg.complexity_shortcut = cfg.complexity_shortcut;
            Some(ApContext::new(ecfg, &cfg.initial_ap_ages)?)
        }
        _ => None,
    };
    let mut metrics = MetricsAccumulator::new();
    let mut trace = AgeTrace::new(cfg.stability_window, 0);
    let mut closure_violations = 0;
    let mut last_reset_slot = None;
    let mut trace_started = false;

    while pop.clock() < cfg.total_slots {
        let start = pop.clock();
        let (decision, mode) = match &cfg.protocol {
            Protocol::Tdfsa { .. } => (ap.as_ref().unwrap().decide(start), Contention::Uniform),
            Protocol::IdealTdfsa => {
                let (threshold, frame_len) =
                    ideal_decision(&pop.gain_histogram()).unwrap_or((1, 1));
                (
                    FrameDecision {
                        threshold,
                        frame_len,
                        frame_start: start,
                    },
                    Contention::Uniform,
                )
            }
            Protocol::IdealDfsa => (
                baselines::ideal_dfsa_decision(&pop, start),
                Contention::Uniform,
            ),
            Protocol::FixedFsa { frame_len } => (
                baselines::fixed_fsa_decision(*frame_len, start),
                Contention::Uniform,
            ),
            Protocol::ThresholdAloha { threshold, tx_prob } => (
                baselines::ta_decision(*threshold, start),
                Contention::Bernoulli(*tx_prob),
            ),
        };
        let played = pop.play(decision.threshold, decision.frame_len, mode, rng);

        let mut report: Option<FrameReport> = None;
        if let Some(ap) = ap.as_mut() {
            let r = ap.absorb(
                &decision,
                &played.observation,
                played.max_ap_age,
                pop.ap_ages(),
            )?;
            let a_max = pop.max_ap_age() - 1;
            let bad = (r.propagated_total - 1.0).abs() > MASS_TOLERANCE
                || r.propagated_max_gain > played.max_ap_age + decision.frame_len
                || (ap.pmf().total() - 1.0).abs() > MASS_TOLERANCE
                || ap.pmf().max_gain().unwrap_or(0) > a_max;
            if bad {
                closure_violations += 1;
            }
            if r.reset {
                last_reset_slot = Some(decision.end());
            }
            report = Some(r);
        }

        if start >= cfg.warmup_slots {
            if !trace_started {
                trace = AgeTrace::new(cfg.stability_window, start);
                trace_started = true;
            }
            metrics.accumulate_frame(
                decision.frame_len,
                played.sum_ap_age,
                played.sum_node_age,
                played.observation.n_singleton,
            );
            trace.add_frame(start, decision.frame_len, played.ap_age_total, n);
            if let Some(r) = &report {
                metrics.complexity_step2 += r.estimate.evaluations;
                metrics.complexity_step3 += r.arrival_terms;
                metrics.reset_count += u64::from(r.reset);
            }
        }
    }

    Ok(Replication {
        metrics,
        trace,
        n_nodes: n,
        closure_violations,
        last_reset_slot,
    })
}
