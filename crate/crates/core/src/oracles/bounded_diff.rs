//! Bounded-differences and 1/n variance checks for the group-normalized prompt gradient
//! of a tabular softmax policy.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Check;
use crate::error::{argument, Result};
use crate::grpo::{sample_categorical, TabularGrpoWorld, Uid};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedDiffQuery {
    pub group_size: usize,
    pub replacement_trials: usize,
    pub variance_groups: usize,
    pub epsilon: f64,
    /// Optional symmetric clamp on the standardized advantages.
    pub advantage_clip: Option<f64>,
    pub seed: u64,
}

/// A group and replacement that broke the inequality, kept for diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationInstance {
    pub answers: Vec<usize>,
    pub coordinate: usize,
    pub replacement: usize,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedDiffReport {
    pub query: BoundedDiffQuery,
    pub reward_range: f64,
    pub score_bound: f64,
    pub constant: f64,
    pub max_difference: f64,
    pub difference_bound: f64,
    pub variance: f64,
    pub variance_standard_error: f64,
    pub variance_bound: f64,
    pub violation: Option<ViolationInstance>,
    pub checks: Vec<Check>,
}

/// `(1/n) sum_j A_j (e_{y_j} - pi)` with biased-std standardization.
pub fn normalized_gradient(answers: &[usize], rewards: &[f64], probs: &[f64], epsilon: f64, clip: Option<f64>) -> Vec<f64> {
    let n = answers.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut g = vec![0.0; probs.len()];
    for (&y, &r) in answers.iter().zip(rewards) {
        let mut a = (r - mean) / (std + epsilon);
        if let Some(c) = clip {
            a = a.clamp(-c, c);
        }
        g[y] += a / n;
        for (gi, p) in g.iter_mut().zip(probs) {
            *gi -= a * p / n;
        }
    }
    g
}

/// `max_a ||e_a - pi||`: the exact score bound of a softmax policy over its logits.
pub fn score_bound(probs: &[f64]) -> f64 {
    let sq: f64 = probs.iter().map(|p| p * p).sum();
    probs
        .iter()
        .map(|&p| (sq - p * p + (1.0 - p).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs the replacement search and the Monte Carlo variance estimate for one prompt.
///
/// Rewards are shifted so the incorrect reward maps to zero; the range is then
/// `reward_correct - reward_incorrect`.
pub fn bounded_differences_check(world: &TabularGrpoWorld, uid: Uid, query: &BoundedDiffQuery) -> Result<BoundedDiffReport> {
    if query.group_size == 0 || query.replacement_trials == 0 || query.variance_groups < 2 {
        return Err(argument("group size, trials and variance groups must be positive"));
    }
    if !(query.epsilon > 0.0 && query.epsilon.is_finite()) {
        return Err(argument("epsilon must be positive"));
    }
    let probs = world.policy_probs(uid)?;
    let answers = world.answer_count();
    let base = world.params().reward_incorrect;
    let shifted: Vec<f64> = (0..answers)
        .map(|a| world.reward_for(uid, a).map(|r| r - base))
        .collect::<Result<_>>()?;
    let range = world.params().reward_correct - base;
    let n = query.group_size;
    let eps = query.epsilon;
    let g_pi = score_bound(&probs);
    let constant = g_pi * (3.0 * range * range / (eps * eps) + 5.0 * range / eps);
    let difference_bound = constant / n as f64;

    let chunk = 1000usize;
    let chunks = query.replacement_trials.div_ceil(chunk);
    let (max_difference, worst) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(query.seed, n as u64, Stream::Oracle, c as u64);
            let mut best = (0.0f64, None);
            let trials = chunk.min(query.replacement_trials - c * chunk);
            for _ in 0..trials {
                // Half the groups come from the policy, half uniformly, to reach rare configurations.
                let ys: Vec<usize> = if rng.random::<bool>() {
                    (0..n).map(|_| sample_categorical(&probs, &mut rng)).collect()
                } else {
                    (0..n).map(|_| rng.random_range(0..answers)).collect()
                };
                let rewards: Vec<f64> = ys.iter().map(|&y| shifted[y]).collect();
                let g = normalized_gradient(&ys, &rewards, &probs, eps, query.advantage_clip);
                let k = rng.random_range(0..n);
                for replacement in 0..answers {
                    let mut ys2 = ys.clone();
                    ys2[k] = replacement;
                    let mut r2 = rewards.clone();
                    r2[k] = shifted[replacement];
                    let g2 = normalized_gradient(&ys2, &r2, &probs, eps, query.advantage_clip);
                    let d = distance(&g, &g2);
                    if d > best.0 {
                        best = (
                            d,
                            Some(ViolationInstance {
                                answers: ys.clone(),
                                coordinate: k,
                                replacement,
                                difference: d,
                            }),
                        );
                    }
                }
            }
            best
        })
        .reduce(
            || (0.0, None),
            |a, b| if b.0 > a.0 { b } else { a },
        );

    let mut rng = substream(query.seed, n as u64, Stream::Oracle, u64::MAX);
    let grads: Vec<Vec<f64>> = (0..query.variance_groups)
        .map(|_| {
            let ys: Vec<usize> = (0..n).map(|_| sample_categorical(&probs, &mut rng)).collect();
            let rewards: Vec<f64> = ys.iter().map(|&y| shifted[y]).collect();
            normalized_gradient(&ys, &rewards, &probs, eps, query.advantage_clip)
        })
        .collect();
    let m = grads.len() as f64;
    let mut mean = vec![0.0; answers];
    for g in &grads {
        mean.iter_mut().zip(g).for_each(|(a, x)| *a += x / m);
    }
    let sq: Vec<f64> = grads.iter().map(|g| distance(g, &mean).powi(2)).collect();
    let variance = sq.iter().sum::<f64>() / (m - 1.0);
    let sq_mean = sq.iter().sum::<f64>() / m;
    let sq_var = sq.iter().map(|s| (s - sq_mean).powi(2)).sum::<f64>() / (m - 1.0);
    let variance_standard_error = (sq_var / m).sqrt();
    let variance_bound = constant * constant / (2.0 * n as f64);

    let checks = vec![
        Check::le("replacement_difference_le_c_over_n", max_difference, difference_bound),
        Check::le(
            "variance_minus_three_se_le_c2_over_2n",
            variance - 3.0 * variance_standard_error,
            variance_bound,
        ),
    ];
    let violation = if max_difference > difference_bound { worst } else { None };
    Ok(BoundedDiffReport {
        query: query.clone(),
        reward_range: range,
        score_bound: g_pi,
        constant,
        max_difference,
        difference_bound,
        variance,
        variance_standard_error,
        variance_bound,
        violation,
        checks,
    })
}
