//! Side-by-side comparison of two finished runs.

use serde::{Deserialize, Serialize};

use super::trace::RunTrace;
use crate::error::{GdroError, Result};

/// Deltas are `a - b`. A relative reduction is `(reference - x) / reference`, so positive
/// values mean lower WSE than the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub mode_a: String,
    pub mode_b: String,
    pub bins: usize,
    pub steps: usize,
    pub worst_bin_pass_at_k_a: f64,
    pub worst_bin_pass_at_k_b: f64,
    pub worst_bin_pass_at_k_delta: f64,
    /// Per-bin final pass@k deltas on the fixed evaluation groups. `None` for empty groups.
    pub per_bin_pass_at_k_delta: Vec<Option<f64>>,
    pub mean_wse_a: f64,
    pub mean_wse_b: f64,
    /// Each run's relative WSE reduction against its own compute-matched uniform allocation.
    pub wse_reduction_a: f64,
    pub wse_reduction_b: f64,
    /// `wse_reduction_a - wse_reduction_b`.
    pub mean_wse_reduction: f64,
    pub mass_ge3_delta: f64,
    pub mass_ge8_delta: f64,
    pub mean_rollouts_delta: f64,
}

fn relative_reduction(a: f64, b: f64) -> f64 {
    if b.abs() > f64::EPSILON {
        (b - a) / b
    } else {
        0.0
    }
}

/// Compares two traces over their common horizon. Fails when bin structures differ.
pub fn compare_runs(a: &RunTrace, b: &RunTrace) -> Result<RunComparison> {
    if a.config.bin_edges != b.config.bin_edges {
        return Err(GdroError::Argument("traces use different bin edges".into()));
    }
    let (sa, sb) = (&a.summary, &b.summary);
    if sa.eval_group_sizes.len() != sb.eval_group_sizes.len() {
        return Err(GdroError::Argument("traces have different bin counts".into()));
    }
    let horizon = a.steps.len().min(b.steps.len());
    let mean_over = |t: &RunTrace, f: &dyn Fn(&super::trace::StepRecord) -> f64| -> f64 {
        if horizon == 0 {
            0.0
        } else {
            t.steps[..horizon].iter().map(f).sum::<f64>() / horizon as f64
        }
    };
    let mean_wse_a = mean_over(a, &|s| s.diagnostics.wse);
    let mean_wse_b = mean_over(b, &|s| s.diagnostics.wse);
    // Each run carries its own batch composition and sigma estimate, so WSE is only
    // compared against the uniform allocation evaluated on the same steps.
    let wse_reduction_a = relative_reduction(mean_wse_a, mean_over(a, &|s| s.diagnostics.wse_uniform));
    let wse_reduction_b = relative_reduction(mean_wse_b, mean_over(b, &|s| s.diagnostics.wse_uniform));
    let per_bin_pass_at_k_delta = sa
        .final_eval_pass_at_k
        .iter()
        .zip(&sb.final_eval_pass_at_k)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        })
        .collect();
    let last = |t: &RunTrace| t.steps.get(horizon.wrapping_sub(1)).map(|s| s.diagnostics.clone());
    let (la, lb) = (last(a), last(b));
    let mass = |d: &Option<crate::diagnostics::StepDiagnostics>, f: fn(&crate::diagnostics::StepDiagnostics) -> f64| {
        d.as_ref().map_or(0.0, f)
    };
    let batch_a = a.config.batch_size.max(1) as f64;
    let batch_b = b.config.batch_size.max(1) as f64;
    Ok(RunComparison {
        mode_a: a.config.mode.as_str().to_string(),
        mode_b: b.config.mode.as_str().to_string(),
        bins: sa.eval_group_sizes.len(),
        steps: horizon,
        worst_bin_pass_at_k_a: sa.final_worst_bin_pass_at_k,
        worst_bin_pass_at_k_b: sb.final_worst_bin_pass_at_k,
        worst_bin_pass_at_k_delta: sa.final_worst_bin_pass_at_k - sb.final_worst_bin_pass_at_k,
        per_bin_pass_at_k_delta,
        mean_wse_a,
        mean_wse_b,
        wse_reduction_a,
        wse_reduction_b,
        mean_wse_reduction: wse_reduction_a - wse_reduction_b,
        mass_ge3_delta: mass(&la, |d| d.mass_ge3) - mass(&lb, |d| d.mass_ge3),
        mass_ge8_delta: mass(&la, |d| d.mass_ge8) - mass(&lb, |d| d.mass_ge8),
        mean_rollouts_delta: mean_over(a, &|s| s.rollouts_total as f64 / batch_a)
            - mean_over(b, &|s| s.rollouts_total as f64 / batch_b),
    })
}
