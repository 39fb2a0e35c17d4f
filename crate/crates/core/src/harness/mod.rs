//! Scenario configuration, replicated runs, sweeps and CSV output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigFile, InitialY, ProtocolKind, ScenarioConfig, SearchConfig, WMin};
pub use output::{write_frame_len_pmf, write_results, write_run_dir, RESULT_HEADER};
pub use run::{
    resolve_protocol, run_replications, run_scenario, run_sweep, search_fsa_frame_len,
    search_ta_params, RunResult, Stat, W_MIN_CANDIDATES,
};
