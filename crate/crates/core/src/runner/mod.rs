//! Closed-loop orchestration: configuration, the step loop, traces and comparisons.

mod compare;
mod config;
mod run;
mod trace;

pub use compare::{compare_runs, RunComparison};
pub use config::{ArmFeedback, Mode, RunConfig, SEED_ENV};
pub use run::{run, write_outputs, RunOutcome};
pub use trace::{
    parse_complete_trace, parse_trace, replay_diagnostics, BudgeterSnapshot, ParsedTrace, PromptAdversarySnapshot,
    RunSummary, RunTrace, StepRecord,
};
