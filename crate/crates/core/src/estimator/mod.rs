//! Practical T-DFSA AP: keeps an estimate of the age-gain distribution and
//! picks each frame's threshold and length from it.

pub mod likelihood;
pub mod pmf;

use crate::channel::FrameObservation;
use crate::error::{Error, Result};
use crate::model::FrameDecision;

pub use likelihood::{
    allocate_gain_counts, allocation_likelihood, estimate_active, observation_likelihood,
    slot_probabilities, ActiveEstimate, EstimatedAllocation,
};
pub use pmf::{
    post_frame_update, propagate_arrivals, select_threshold_and_frame, threshold_shortcut,
    truncate, ArrivalContext, GainPmf, Propagated,
};

/// Estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub n_nodes: u64,
    pub lambda: f64,
    pub w_min: u64,
    /// `max_i x_0^i`.
    pub max_initial_age: u64,
    /// Consecutive frames without a success, under a positive estimated
    /// backlog, before the estimate is rebuilt.
    pub reset_patience: u64,
    pub complexity_shortcut: bool,
}

impl EstimatorConfig {
    pub fn new(n_nodes: u64, lambda: f64, w_min: u64) -> Self {
        Self {
            n_nodes,
            lambda,
            w_min,
            max_initial_age: 1,
            reset_patience: 50,
            complexity_shortcut: false,
        }
    }
}

/// Per-frame diagnostics from [`ApContext::absorb`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub estimate: ActiveEstimate,
    pub arrival_terms: u64,
    /// Mass and largest gain after the arrival step, before truncation.
    pub propagated_total: f64,
    pub propagated_max_gain: u64,
    pub truncation_fallback: bool,
    pub reset: bool,
}

/// AP-side state machine.
#[derive(Debug, Clone)]
pub struct ApContext {
    cfg: EstimatorConfig,
    pmf: GainPmf,
    consecutive_failures: u64,
}

impl ApContext {
    /// Starts from the known initial AP ages, with every node holding a
    /// fresh update of age `max_initial_age`.
    pub fn new(cfg: EstimatorConfig, initial_ap_ages: &[u64]) -> Result<Self> {
        if !(cfg.lambda > 0.0 && cfg.lambda <= 1.0) {
            return Err(Error::InvalidLambda(cfg.lambda));
        }
        if cfg.w_min == 0 {
            return Err(Error::Config("w_min must be at least 1".into()));
        }
        let pmf = Self::known_gains(&cfg, initial_ap_ages);
        Ok(Self {
            cfg,
            pmf,
            consecutive_failures: 0,
        })
    }

    fn known_gains(cfg: &EstimatorConfig, ap_ages: &[u64]) -> GainPmf {
        GainPmf::from_gains(
            ap_ages
                .iter()
                .map(|&y| y.saturating_sub(cfg.max_initial_age)),
        )
    }

    pub fn pmf(&self) -> &GainPmf {
        &self.pmf
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    /// Step 1.
    pub fn decide(&self, frame_start: u64) -> FrameDecision {
        select_threshold_and_frame(&self.pmf, self.cfg.n_nodes, self.cfg.w_min, frame_start)
    }

    /// Steps 2 to 4 for a frame that was played with `decision`.
    ///
    /// `max_ap_age` is `max_i y` at frame start; `ap_ages_next` are the AP
    /// ages at the next frame boundary.
    pub fn absorb(
        &mut self,
        decision: &FrameDecision,
        obs: &FrameObservation,
        max_ap_age: u64,
        ap_ages_next: &[u64],
    ) -> Result<FrameReport> {
        let n = self.cfg.n_nodes;
        let w = decision.frame_len;
        let estimate = estimate_active(obs, w, n, decision.threshold)?;
        let plus = post_frame_update(&self.pmf, &estimate.alloc, obs, decision.threshold, n)?;

        let ctx = ArrivalContext {
            lambda: self.cfg.lambda,
            frame_len: w,
            max_ap_age,
            max_initial_age: self.cfg.max_initial_age,
            frame_start: decision.frame_start,
        };
        let shortcut = self.cfg.complexity_shortcut.then_some(n);
        let propagated = propagate_arrivals(&plus, &ctx, shortcut)?;
        let propagated_total = propagated.pmf.total();
        let propagated_max_gain = propagated.pmf.max_gain().unwrap_or(0);

        let max_next = ap_ages_next.iter().copied().max().unwrap_or(1);
        let (pmf, truncation_fallback) = truncate(&propagated.pmf, max_next);
        self.pmf = pmf;

        let backlog = self.pmf.support().any(|(a, _)| a > 0);
        if obs.n_singleton == 0 && backlog {
            self.consecutive_failures += 1;
        } else {
            self.consecutive_failures = 0;
        }
        let reset =
            self.cfg.reset_patience > 0 && self.consecutive_failures >= self.cfg.reset_patience;
        if reset {
            self.reset(ap_ages_next);
        }

        Ok(FrameReport {
            estimate,
            arrival_terms: propagated.terms,
            propagated_total,
            propagated_max_gain,
            truncation_fallback,
            reset,
        })
    }

    /// Rebuilds the estimate from the known AP ages as if every node had
    /// just generated a fresh update.
    pub fn reset(&mut self, ap_ages: &[u64]) {
        self.pmf = Self::known_gains(&self.cfg, ap_ages);
        self.consecutive_failures = 0;
    }
}
