//! Trace records, JSONL persistence and diagnostics replay.

use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use crate::diagnostics::{diagnostics_csv, step_diagnostics, BinMoments, DiagnosticInputs, StepDiagnostics};
use crate::error::{GdroError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAdversarySnapshot {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    pub distribution: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Bins whose loss was rejected as non-finite this step.
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgeterSnapshot {
    pub arms: Vec<Option<usize>>,
    /// Probability of each chosen arm before this step's update.
    pub p_chosen: Vec<Option<f64>>,
    pub utility: Vec<Option<f64>>,
    pub arm_loss: Vec<Option<f64>>,
    pub mu_before: f64,
    pub mu: f64,
    pub total: usize,
    pub target: usize,
    pub realized_mean: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub counts: Vec<usize>,
    pub shares: Vec<f64>,
    pub bin_mean_loss: Vec<Option<f64>>,
    pub bin_reward_variance: Vec<Option<f64>>,
    /// Moments of per-rollout losses by bin for this step.
    pub loss_moments: BinMoments,
    pub rollouts_total: usize,
    pub prompt_adversary: Option<PromptAdversarySnapshot>,
    pub budgeter: Option<BudgeterSnapshot>,
    pub diagnostic_inputs: DiagnosticInputs,
    pub diagnostics: StepDiagnostics,
    /// Mean exact pass@k of each fixed evaluation group after this step's update.
    pub eval_pass_at_k: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub steps: usize,
    pub sigma_hat: Vec<Option<f64>>,
    pub eval_group_sizes: Vec<usize>,
    pub initial_eval_pass_at_k: Vec<Option<f64>>,
    pub final_eval_pass_at_k: Vec<Option<f64>>,
    pub initial_worst_bin_pass_at_k: f64,
    pub final_worst_bin_pass_at_k: f64,
    pub mean_wse: f64,
    pub mean_wse_uniform: f64,
    pub mean_realized_rollouts: f64,
    pub final_mass_ge3: f64,
    pub final_mass_ge8: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Config(Box<RunConfig>),
    Step(Box<StepRecord>),
    Summary(Box<RunSummary>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: RunConfig,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// Lowest group mean among non-empty evaluation groups.
pub fn worst_bin(values: &[Option<f64>]) -> f64 {
    values.iter().flatten().cloned().fold(f64::INFINITY, f64::min)
}

/// Per-bin sigma of per-rollout losses pooled over all steps, merged in step order.
pub fn pooled_sigma(steps: &[StepRecord], bins: usize) -> Vec<Option<f64>> {
    let mut moments = BinMoments::new(bins);
    for s in steps {
        moments.merge(&s.loss_moments);
    }
    moments.sigma()
}

/// Recomputes the diagnostics of every step from logged inputs and the pooled sigma.
pub fn recompute_diagnostics(steps: &[StepRecord], bins: usize, mean_budget: f64) -> Result<Vec<StepDiagnostics>> {
    let sigma = pooled_sigma(steps, bins);
    steps
        .iter()
        .map(|s| step_diagnostics(&s.diagnostic_inputs, &sigma, mean_budget))
        .collect()
}

impl RunTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &TraceLine| {
            out.push_str(&serde_json::to_string(line).expect("trace records serialize"));
            out.push('\n');
        };
        push(&TraceLine::Config(Box::new(self.config.clone())));
        for s in &self.steps {
            push(&TraceLine::Step(Box::new(s.clone())));
        }
        push(&TraceLine::Summary(Box::new(self.summary.clone())));
        out
    }

    pub fn diagnostics(&self) -> Vec<StepDiagnostics> {
        self.steps.iter().map(|s| s.diagnostics.clone()).collect()
    }

    pub fn diagnostics_csv(&self) -> String {
        diagnostics_csv(&self.diagnostics())
    }

    pub fn bin_count(&self) -> usize {
        self.config.bin_edges.len() + 1
    }
}

/// Parsed contents of a possibly incomplete trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub config: Option<RunConfig>,
    pub steps: Vec<StepRecord>,
    pub summary: Option<RunSummary>,
}

/// Parses JSONL, reporting the first malformed or out-of-order record by line number.
pub fn parse_trace(text: &str) -> Result<ParsedTrace> {
    let mut parsed = ParsedTrace {
        config: None,
        steps: Vec::new(),
        summary: None,
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| GdroError::Parse { line: lineno, message };
        let record: TraceLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if parsed.summary.is_some() {
            return Err(bad("record after summary".into()));
        }
        match record {
            TraceLine::Config(c) => {
                if parsed.config.is_some() || !parsed.steps.is_empty() {
                    return Err(bad("config must be the first record".into()));
                }
                parsed.config = Some(*c);
            }
            TraceLine::Step(s) => {
                if parsed.config.is_none() {
                    return Err(bad("step before config".into()));
                }
                if s.step != parsed.steps.len() {
                    return Err(bad(format!("expected step {}, found {}", parsed.steps.len(), s.step)));
                }
                parsed.steps.push(*s);
            }
            TraceLine::Summary(s) => {
                if parsed.config.is_none() {
                    return Err(bad("summary before config".into()));
                }
                parsed.summary = Some(*s);
            }
        }
    }
    Ok(parsed)
}

pub fn parse_complete_trace(text: &str) -> Result<RunTrace> {
    let parsed = parse_trace(text)?;
    let last = text.lines().count();
    let config = parsed.config.ok_or(GdroError::Parse {
        line: 1,
        message: "missing config record".into(),
    })?;
    let summary = parsed.summary.ok_or(GdroError::Parse {
        line: last + 1,
        message: "missing summary record".into(),
    })?;
    Ok(RunTrace {
        config,
        steps: parsed.steps,
        summary,
    })
}

/// Rebuilds `diagnostics.csv` from a trace's logged state.
pub fn replay_diagnostics(text: &str) -> Result<String> {
    let parsed = parse_trace(text)?;
    let Some(config) = parsed.config else {
        return Ok(diagnostics_csv(&[]));
    };
    let rows = recompute_diagnostics(&parsed.steps, config.bin_edges.len() + 1, config.mean_budget)?;
    Ok(diagnostics_csv(&rows))
}
