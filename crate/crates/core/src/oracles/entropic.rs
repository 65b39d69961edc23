//! Log-sum-exp risk: value, maximizing distribution and gradient.

use serde::{Deserialize, Serialize};

use super::Check;
use crate::error::{argument, Result};
use crate::numeric::{dot, entropy, log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropicSurrogateQuery {
    pub losses: Vec<f64>,
    pub temperature: f64,
}

impl EntropicSurrogateQuery {
    pub fn validate(&self) -> Result<()> {
        if self.losses.is_empty() || self.losses.iter().any(|l| !l.is_finite()) {
            return Err(argument("losses must be a non-empty finite vector"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(argument("temperature must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropicReport {
    pub query: EntropicSurrogateQuery,
    pub value: f64,
    pub distribution: Vec<f64>,
    /// `|value - (<q, L> + H(q) / eta)|` at the returned distribution.
    pub variational_residual: f64,
    pub checks: Vec<Check>,
}

/// `(1/eta) log sum exp(eta L)` and its maximizer `softmax(eta L)` over the
/// entropy-regularized simplex objective `<q, L> + H(q)/eta`.
pub fn lse_value_and_best_response(query: &EntropicSurrogateQuery) -> Result<EntropicReport> {
    query.validate()?;
    let eta = query.temperature;
    let max_loss = query.losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Shifting by the max before scaling keeps `value >= max_loss` exact in floating point;
    // scaling first and dividing back can land one ulp below it.
    let shifted: Vec<f64> = query.losses.iter().map(|l| eta * (l - max_loss)).collect();
    let value = max_loss + log_sum_exp(&shifted) / eta;
    let distribution = softmax(&shifted);
    let objective = dot(&distribution, &query.losses) + entropy(&distribution) / eta;
    let residual = (value - objective).abs();

    let b = query.losses.len() as f64;
    // Rounding slack proportional to the magnitude involved.
    let slack = 1e-12 * (1.0 + max_loss.abs());
    let checks = vec![
        Check::le("max_loss_le_value", max_loss - slack, value),
        Check::le("value_le_max_loss_plus_logb_over_eta", value, max_loss + b.ln() / eta + slack),
        Check::le("variational_residual", residual, 1e-10 * (1.0 + value.abs())),
    ];
    Ok(EntropicReport {
        query: query.clone(),
        value,
        distribution,
        variational_residual: residual,
        checks,
    })
}

/// Gradient of the log-sum-exp risk: the `softmax(eta L)`-weighted mixture of group gradients.
pub fn entropic_gradient(losses: &[f64], loss_gradients: &[Vec<f64>], eta: f64) -> Result<Vec<f64>> {
    if losses.len() != loss_gradients.len() || losses.is_empty() {
        return Err(argument("one gradient per group is required"));
    }
    let dim = loss_gradients[0].len();
    if loss_gradients.iter().any(|g| g.len() != dim) {
        return Err(argument("group gradients must share a dimension"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(argument("temperature must be positive and finite"));
    }
    let scaled: Vec<f64> = losses.iter().map(|l| eta * l).collect();
    let q = softmax(&scaled);
    let mut out = vec![0.0; dim];
    for (w, g) in q.iter().zip(loss_gradients) {
        for (o, gi) in out.iter_mut().zip(g) {
            *o += w * gi;
        }
    }
    Ok(out)
}
