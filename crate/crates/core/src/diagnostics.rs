//! Per-step curriculum diagnostics: lead-lag gap, weighted standard error, entropy and
//! high-bin mass.

use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
pub use crate::numeric::entropy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub mu_data: f64,
    pub mu_weight: f64,
    pub delta_mu: f64,
    pub wse: f64,
    pub wse_uniform: f64,
    pub entropy_q: f64,
    pub entropy_w: f64,
    /// Mean bin index of the adversary's sampling distribution (not part of the CSV).
    pub mean_bin_index: f64,
    pub mass_ge3: f64,
    pub mass_ge8: f64,
}

pub const DIAGNOSTICS_CSV_HEADER: &str =
    "step,mu_data,mu_weight,delta_mu,wse,wse_uniform,entropy_q,entropy_w,mass_ge3,mass_ge8";

impl StepDiagnostics {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.mu_data,
            self.mu_weight,
            self.delta_mu,
            self.wse,
            self.wse_uniform,
            self.entropy_q,
            self.entropy_w,
            self.mass_ge3,
            self.mass_ge8
        )
    }
}

/// Renders rows under the fixed header; an empty slice yields the header alone.
pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut out = String::from(DIAGNOSTICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// `sum_b b * p(b)` with bins indexed from zero.
pub fn mean_bin_index(dist: &[f64]) -> f64 {
    dist.iter().enumerate().map(|(b, p)| b as f64 * p).sum()
}

/// `(mu_data, mu_weight, mu_weight - mu_data)`.
pub fn lead_lag(shares: &[f64], weights: &[f64]) -> Result<(f64, f64, f64)> {
    if shares.len() != weights.len() {
        return Err(argument("share and weight vectors differ in length"));
    }
    let data = mean_bin_index(shares);
    let weight = mean_bin_index(weights);
    Ok((data, weight, weight - data))
}

/// `sum_b q(b) sigma(b) / sqrt(n(b))`; bins without a sigma estimate contribute zero.
pub fn wse(shares: &[f64], sigma_hat: &[Option<f64>], allocation: &[f64]) -> Result<f64> {
    if shares.len() != sigma_hat.len() || shares.len() != allocation.len() {
        return Err(argument("shares, sigma and allocation must align"));
    }
    let mut total = 0.0;
    for ((&q, s), &n) in shares.iter().zip(sigma_hat).zip(allocation) {
        if q == 0.0 {
            continue;
        }
        if !(n > 0.0) {
            return Err(argument("allocation must be positive on populated bins"));
        }
        if let Some(s) = s {
            total += q * s / n.sqrt();
        }
    }
    Ok(total)
}

/// Probability mass on bins with index at least `threshold` (zero past the last bin).
pub fn mass_above(dist: &[f64], threshold: usize) -> f64 {
    dist.iter().skip(threshold).sum()
}

/// Running per-bin moments used to estimate a fixed sigma for the WSE series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BinMoments {
    pub count: Vec<u64>,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl BinMoments {
    pub fn new(bins: usize) -> Self {
        Self {
            count: vec![0; bins],
            sum: vec![0.0; bins],
            sum_sq: vec![0.0; bins],
        }
    }

    pub fn push(&mut self, bin: usize, value: f64) {
        self.count[bin] += 1;
        self.sum[bin] += value;
        self.sum_sq[bin] += value * value;
    }

    pub fn merge(&mut self, other: &BinMoments) {
        for b in 0..self.count.len() {
            self.count[b] += other.count[b];
            self.sum[b] += other.sum[b];
            self.sum_sq[b] += other.sum_sq[b];
        }
    }

    /// Population standard deviation per bin; `None` for bins with no observations.
    pub fn sigma(&self) -> Vec<Option<f64>> {
        (0..self.count.len())
            .map(|b| {
                let c = self.count[b];
                (c > 0).then(|| {
                    let m = self.sum[b] / c as f64;
                    (self.sum_sq[b] / c as f64 - m * m).max(0.0).sqrt()
                })
            })
            .collect()
    }
}

/// Logged per-step quantities from which diagnostics are recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticInputs {
    pub step: usize,
    /// Realized prompt share per bin.
    pub shares: Vec<f64>,
    /// Weight-only distribution before exploration mixing.
    pub weights: Vec<f64>,
    /// Adversary sampling distribution (after mixing).
    pub adversary: Vec<f64>,
    /// Rollouts per prompt in each bin this step.
    pub allocation: Vec<f64>,
}

pub fn step_diagnostics(inputs: &DiagnosticInputs, sigma_hat: &[Option<f64>], mean_budget: f64) -> Result<StepDiagnostics> {
    let (mu_data, mu_weight, delta_mu) = lead_lag(&inputs.shares, &inputs.weights)?;
    let uniform = vec![mean_budget; inputs.shares.len()];
    Ok(StepDiagnostics {
        step: inputs.step,
        mu_data,
        mu_weight,
        delta_mu,
        wse: wse(&inputs.shares, sigma_hat, &inputs.allocation)?,
        wse_uniform: wse(&inputs.shares, sigma_hat, &uniform)?,
        entropy_q: entropy(&inputs.shares),
        entropy_w: entropy(&inputs.weights),
        mean_bin_index: mean_bin_index(&inputs.adversary),
        mass_ge3: mass_above(&inputs.shares, 3),
        mass_ge8: mass_above(&inputs.shares, 8),
    })
}
