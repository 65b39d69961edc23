//! Variance-optimal rollout allocation and the batch variance proxy.

use serde::{Deserialize, Serialize};

use super::Check;
use crate::error::{argument, Result};
use crate::numeric::is_distribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceAllocQuery {
    /// Intrinsic per-bin variances; must be positive wherever the share is positive.
    pub variances: Vec<f64>,
    pub shares: Vec<f64>,
    pub mean_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtAllocation {
    /// Continuous optimal allocation; zero on bins with zero share.
    pub allocation: Vec<f64>,
    pub optimal_value: f64,
    pub uniform_value: f64,
    /// `sum_b q_b n_b - n_bar`
    pub budget_residual: f64,
    pub checks: Vec<Check>,
}

/// Minimizes `sum_b q_b v_b / n_b` subject to `sum_b q_b n_b = n_bar`.
///
/// The minimizer puts `n_b` proportional to `sqrt(v_b)`.
pub fn sqrt_allocation(query: &VarianceAllocQuery) -> Result<SqrtAllocation> {
    let VarianceAllocQuery {
        variances: v,
        shares: q,
        mean_budget,
    } = query;
    if v.len() != q.len() || v.is_empty() {
        return Err(argument("variances and shares must have equal, non-zero length"));
    }
    if !is_distribution(q, 1e-9) {
        return Err(argument("shares must form a distribution"));
    }
    if !(*mean_budget > 0.0 && mean_budget.is_finite()) {
        return Err(argument("mean budget must be positive and finite"));
    }
    for (b, (&vb, &qb)) in v.iter().zip(q).enumerate() {
        if qb > 0.0 && !(vb > 0.0 && vb.is_finite()) {
            return Err(argument(format!("variance of active bin {b} must be positive, got {vb}")));
        }
    }
    let norm: f64 = v.iter().zip(q).filter(|(_, &qb)| qb > 0.0).map(|(vb, qb)| qb * vb.sqrt()).sum();
    let allocation: Vec<f64> = v
        .iter()
        .zip(q)
        .map(|(vb, &qb)| if qb > 0.0 { mean_budget * vb.sqrt() / norm } else { 0.0 })
        .collect();
    let optimal_value = norm * norm / mean_budget;
    let uniform_value: f64 =
        v.iter().zip(q).filter(|(_, &qb)| qb > 0.0).map(|(vb, qb)| qb * vb).sum::<f64>() / mean_budget;
    let spent: f64 = allocation.iter().zip(q).map(|(n, qb)| n * qb).sum();
    let budget_residual = spent - mean_budget;
    let checks = vec![
        Check::le("budget_identity", budget_residual.abs(), 1e-12 * mean_budget.max(1.0)),
        Check::le("optimal_le_uniform", optimal_value, uniform_value * (1.0 + 1e-12)),
    ];
    Ok(SqrtAllocation {
        allocation,
        optimal_value,
        uniform_value,
        budget_residual,
        checks,
    })
}

/// Minimizer over `n > 0` of `v / n + mu * n`.
pub fn shadow_price_best_response(variance: f64, price: f64) -> Result<f64> {
    if !(price > 0.0 && price.is_finite()) {
        return Err(argument("shadow price must be positive"));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(argument("variance must be positive"));
    }
    Ok((variance / price).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchVarianceReport {
    /// `(1/M) sum_b q_b v_b / n_b`
    pub proxy: f64,
    /// `sum_b q_b sqrt(v_b / n_b)`
    pub wse: f64,
    /// `sum_b q_b v_b / n_b`, the Cauchy-Schwarz upper bound on `wse^2`.
    pub weighted_second_moment: f64,
    pub checks: Vec<Check>,
}

pub fn batch_variance_proxy(variances: &[f64], shares: &[f64], allocation: &[f64], batch: usize) -> Result<BatchVarianceReport> {
    if variances.len() != shares.len() || shares.len() != allocation.len() || shares.is_empty() {
        return Err(argument("variances, shares and allocation must align"));
    }
    if batch == 0 {
        return Err(argument("batch size must be positive"));
    }
    let mut second = 0.0;
    let mut wse = 0.0;
    for ((&v, &q), &n) in variances.iter().zip(shares).zip(allocation) {
        if q == 0.0 {
            continue;
        }
        if !(n > 0.0) || v < 0.0 {
            return Err(argument("active bins need positive allocation and nonnegative variance"));
        }
        second += q * v / n;
        wse += q * (v / n).sqrt();
    }
    let checks = vec![Check::le("wse_squared_le_second_moment", wse * wse, second * (1.0 + 1e-12))];
    Ok(BatchVarianceReport {
        proxy: second / batch as f64,
        wse,
        weighted_second_moment: second,
        checks,
    })
}
