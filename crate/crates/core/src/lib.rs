//! Group distributionally robust optimization for GRPO-style training on a tabular
//! synthetic world: difficulty binning, a prompt-level adversary, a rollout budgeter,
//! closed-form oracles for the accompanying guarantees, diagnostics and a run loop.

pub mod binning;
pub mod budgeter;
pub mod diagnostics;
pub mod error;
pub mod grpo;
pub mod numeric;
pub mod oracles;
pub mod prompt_adversary;
pub mod rng;
pub mod runner;

pub use binning::{BinPartition, DifficultyTracker};
pub use budgeter::{AllocationResult, BudgeterConfig, BudgeterState, DpWeighting};
pub use diagnostics::{StepDiagnostics, DIAGNOSTICS_CSV_HEADER};
pub use error::{GdroError, Result};
pub use grpo::{GrpoParams, PopulationSpec, RolloutGroup, TabularGrpoWorld, Uid};
pub use prompt_adversary::{PromptAdversaryConfig, PromptAdversaryState};
pub use runner::{compare_runs, run, Mode, RunConfig, RunTrace};
