//! Slotted-time simulator for age-aware framed random access.
//!
//! Nodes generate status updates at random and contend for a shared
//! collision channel in frames announced by an access point. The AP picks
//! each frame's age-gain threshold and length either from the true gains
//! ([`ideal`]) or from a running estimate of their distribution
//! ([`estimator`]). [`baselines`] holds the comparison policies and
//! [`harness`] runs replicated scenarios and sweeps and writes CSV.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod ideal;
pub mod model;
pub mod par;
pub mod sim;
pub mod verify;

pub use channel::{Channel, FrameObservation};
pub use error::{Error, Result};
pub use estimator::{ApContext, EstimatorConfig, GainPmf};
pub use ideal::GainHistogram;
pub use model::{FrameDecision, MetricsAccumulator, NodeState};
pub use par::Execution;
pub use sim::{simulate, Population, Protocol, Replication, SimConfig};
