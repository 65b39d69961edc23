//! Truncated-Lagrangian rollout allocation game: entropic mirror descent on per-bin arm
//! distributions against projected dual ascent on the shadow price.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Check;
use crate::error::{argument, Result};
use crate::numeric::{is_distribution, log_sum_exp, softmax};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftminResult {
    pub distribution: Vec<f64>,
    pub value: f64,
    pub min_cost: f64,
    pub checks: Vec<Check>,
}

/// Gibbs distribution `p(n) ∝ exp(-eta (V(n) + mu n))` and its soft-min value.
pub fn softmin_arm_distribution(costs: &[f64], arms: &[usize], price: f64, eta: f64) -> Result<SoftminResult> {
    if costs.len() != arms.len() || costs.is_empty() {
        return Err(argument("one cost per arm is required"));
    }
    if costs.iter().any(|c| !c.is_finite()) || !price.is_finite() {
        return Err(argument("costs and price must be finite"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(argument("temperature must be positive and finite"));
    }
    let penalized: Vec<f64> = costs.iter().zip(arms).map(|(v, &n)| v + price * n as f64).collect();
    let logits: Vec<f64> = penalized.iter().map(|c| -eta * c).collect();
    let value = -log_sum_exp(&logits) / eta;
    let min_cost = penalized.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = costs.len() as f64;
    let slack = 1e-12 * (1.0 + min_cost.abs());
    Ok(SoftminResult {
        distribution: softmax(&logits),
        value,
        min_cost,
        checks: vec![
            Check::le("softmin_le_min", value - slack, min_cost),
            Check::le("min_le_softmin_plus_logk_over_eta", min_cost, value + k.ln() / eta + slack),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGameSpec {
    /// Fixed bin fractions.
    pub shares: Vec<f64>,
    /// Candidate rollout counts; the compute cost of arm `n` is `n`.
    pub arms: Vec<usize>,
    /// `costs[b][k]`: variance cost of arm `arms[k]` in bin `b`.
    pub costs: Vec<Vec<f64>>,
    pub mean_budget: f64,
    pub dual_cap: f64,
    pub horizon: usize,
    /// `None` selects the explicit step sizes.
    pub primal_step: Option<f64>,
    pub dual_step: Option<f64>,
}

impl RolloutGameSpec {
    /// Random instance with `V_b(n) = v_b / n` over consecutive arms.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, bins: usize, arm_count: usize, horizon: usize) -> Self {
        let n_min = rng.random_range(1..=2usize);
        let arms: Vec<usize> = (n_min..n_min + arm_count).collect();
        let raw: Vec<f64> = (0..bins).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let shares = raw.iter().map(|x| x / total).collect();
        let costs = (0..bins)
            .map(|_| {
                let v = rng.random_range(0.1..4.0);
                arms.iter().map(|&n| v / n as f64).collect()
            })
            .collect();
        let lo = arms[0] as f64;
        let hi = *arms.last().unwrap() as f64;
        Self {
            shares,
            mean_budget: rng.random_range(lo..=hi),
            arms,
            costs,
            dual_cap: rng.random_range(1.0..10.0),
            horizon,
            primal_step: None,
            dual_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.shares.len();
        if b == 0 || self.arms.is_empty() || self.horizon == 0 {
            return Err(argument("game needs bins, arms and a positive horizon"));
        }
        if !is_distribution(&self.shares, 1e-9) {
            return Err(argument("shares must form a distribution"));
        }
        if self.costs.len() != b || self.costs.iter().any(|c| c.len() != self.arms.len()) {
            return Err(argument("costs must be bins x arms"));
        }
        if self.costs.iter().flatten().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(argument("arm costs must be finite and nonnegative"));
        }
        if !(self.dual_cap > 0.0 && self.dual_cap.is_finite()) || !(self.mean_budget > 0.0) {
            return Err(argument("dual cap and budget must be positive"));
        }
        Ok(())
    }

    pub fn cost_bound(&self) -> f64 {
        self.costs.iter().flatten().cloned().fold(0.0, f64::max)
    }

    pub fn compute_bound(&self) -> f64 {
        *self.arms.iter().max().unwrap() as f64
    }

    pub fn step_sizes(&self) -> (f64, f64) {
        let b = self.shares.len() as f64;
        let k = self.arms.len() as f64;
        let t = self.horizon as f64;
        let (v, a, mu) = (self.cost_bound(), self.compute_bound(), self.dual_cap);
        let primal = self
            .primal_step
            .unwrap_or((8.0 * b * k.ln()).sqrt() / ((v + mu * a) * t.sqrt()));
        let dual = self.dual_step.unwrap_or(mu / (a * t.sqrt()));
        (primal, dual)
    }

    /// Right-hand side of the saddle-gap bound for the configured step sizes.
    pub fn gap_bound(&self) -> f64 {
        let b = self.shares.len() as f64;
        let k = self.arms.len() as f64;
        let t = self.horizon as f64;
        let (v, a, mu) = (self.cost_bound(), self.compute_bound(), self.dual_cap);
        let (eta_p, eta_mu) = self.step_sizes();
        let primal = if k > 1.0 {
            b * k.ln() / (eta_p * t) + eta_p / 8.0 * (v + mu * a).powi(2)
        } else {
            0.0
        };
        primal + mu * mu / (2.0 * eta_mu * t) + eta_mu / 2.0 * a * a
    }

    /// Closed-form value of the bound under the explicit step sizes.
    pub fn explicit_gap_bound(&self) -> f64 {
        let b = self.shares.len() as f64;
        let k = self.arms.len() as f64;
        let t = self.horizon as f64;
        let (v, a, mu) = (self.cost_bound(), self.compute_bound(), self.dual_cap);
        (v + mu * a) * (b * k.ln() / (2.0 * t)).sqrt() + mu * a / t.sqrt()
    }

    /// `(sum_b q_b E[V], sum_b q_b E[n])` under per-bin arm distributions.
    pub fn objective_and_spend(&self, p: &[Vec<f64>]) -> (f64, f64) {
        let mut obj = 0.0;
        let mut spend = 0.0;
        for ((q, costs), pb) in self.shares.iter().zip(&self.costs).zip(p) {
            for ((c, &n), w) in costs.iter().zip(&self.arms).zip(pb) {
                obj += q * w * c;
                spend += q * w * n as f64;
            }
        }
        (obj, spend)
    }

    /// Exact optimum of the budgeted variance problem over mixed per-bin policies.
    ///
    /// The achievable (spend, objective) set is the convex hull of deterministic
    /// assignments, so the optimum is a feasible assignment or a two-point mixture on the
    /// budget line. Returns `None` when no mixture meets the budget.
    pub fn brute_force_optimum(&self) -> Option<f64> {
        let bins = self.shares.len();
        let k = self.arms.len();
        let mut points = Vec::new();
        let mut idx = vec![0usize; bins];
        loop {
            let mut obj = 0.0;
            let mut spend = 0.0;
            for b in 0..bins {
                obj += self.shares[b] * self.costs[b][idx[b]];
                spend += self.shares[b] * self.arms[idx[b]] as f64;
            }
            points.push((spend, obj));
            let mut pos = 0;
            while pos < bins {
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == bins {
                break;
            }
        }
        let budget = self.mean_budget;
        // Shares sum to one only up to rounding, so spends are compared with a small slack.
        let tol = 1e-12 * budget.max(1.0);
        let mut best: Option<f64> = None;
        let mut consider = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
        for &(s, v) in &points {
            if s <= budget + tol {
                consider(v);
            }
        }
        for &(s1, v1) in points.iter().filter(|p| p.0 < budget - tol) {
            for &(s2, v2) in points.iter().filter(|p| p.0 > budget + tol) {
                let lambda = (budget - s1) / (s2 - s1);
                consider(v1 + lambda * (v2 - v1));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGameReport {
    pub horizon: usize,
    pub primal_step: f64,
    pub dual_step: f64,
    pub p_bar: Vec<Vec<f64>>,
    pub mu_bar: f64,
    pub final_mu: f64,
    pub objective: f64,
    pub spend: f64,
    pub violation: f64,
    pub measured_gap: f64,
    pub gap_bound: f64,
    pub explicit_gap_bound: f64,
    pub optimum: Option<f64>,
    pub checks: Vec<Check>,
}

pub fn run_rollout_game(spec: &RolloutGameSpec) -> Result<RolloutGameReport> {
    spec.validate()?;
    let (eta_p, eta_mu) = spec.step_sizes();
    let bins = spec.shares.len();
    let k = spec.arms.len();
    let mut log_p = vec![vec![0.0; k]; bins];
    let mut p_sum = vec![vec![0.0; k]; bins];
    let mut mu = 0.0f64;
    let mut mu_sum = 0.0;
    for _ in 0..spec.horizon {
        let p: Vec<Vec<f64>> = log_p.iter().map(|l| softmax(l)).collect();
        for (s, pb) in p_sum.iter_mut().zip(&p) {
            s.iter_mut().zip(pb).for_each(|(a, x)| *a += x);
        }
        mu_sum += mu;
        let (_, spend) = spec.objective_and_spend(&p);
        for b in 0..bins {
            let q = spec.shares[b];
            for (j, l) in log_p[b].iter_mut().enumerate() {
                *l -= eta_p * q * (spec.costs[b][j] + mu * spec.arms[j] as f64);
            }
            let shift = log_sum_exp(&log_p[b]);
            log_p[b].iter_mut().for_each(|l| *l -= shift);
        }
        mu = (mu + eta_mu * (spend - spec.mean_budget)).clamp(0.0, spec.dual_cap);
    }
    let t = spec.horizon as f64;
    let p_bar: Vec<Vec<f64>> = p_sum.iter().map(|s| s.iter().map(|x| x / t).collect()).collect();
    let mu_bar = mu_sum / t;
    let (objective, spend) = spec.objective_and_spend(&p_bar);
    let violation = (spend - spec.mean_budget).max(0.0);
    let best_response: f64 = spec
        .shares
        .iter()
        .zip(&spec.costs)
        .map(|(q, costs)| {
            let m = costs
                .iter()
                .zip(&spec.arms)
                .map(|(c, &n)| c + mu_bar * n as f64)
                .fold(f64::INFINITY, f64::min);
            q * m
        })
        .sum::<f64>()
        - mu_bar * spec.mean_budget;
    let measured_gap = objective + spec.dual_cap * violation - best_response;
    let gap_bound = spec.gap_bound();
    let optimum = spec.brute_force_optimum();
    let tol = 1e-12;
    let mut checks = vec![Check::le("saddle_gap_le_bound", measured_gap, gap_bound + tol)];
    if let Some(opt) = optimum {
        checks.push(Check::le("objective_gap_le_gap", objective - opt, gap_bound + tol));
        checks.push(Check::le(
            "violation_le_opt_plus_gap_over_cap",
            violation,
            (opt + gap_bound) / spec.dual_cap + tol,
        ));
    }
    checks.push(Check::le(
        "violation_le_vmax_plus_gap_over_cap",
        violation,
        (spec.cost_bound() + gap_bound) / spec.dual_cap + tol,
    ));
    Ok(RolloutGameReport {
        horizon: spec.horizon,
        primal_step: eta_p,
        dual_step: eta_mu,
        p_bar,
        mu_bar,
        final_mu: mu,
        objective,
        spend,
        violation,
        measured_gap,
        gap_bound,
        explicit_gap_bound: spec.explicit_gap_bound(),
        optimum,
        checks,
    })
}
