//! Reference implementations used as test oracles. Each one reaches its answer by a
//! different route than the library code it checks.

#![allow(dead_code)]

use gdro_core::oracles::{ConvexGameSpec, RolloutGameSpec};

/// Log-sum-exp risk computed with a plain max shift.
pub fn reference_lse(losses: &[f64], eta: f64) -> f64 {
    let m = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = losses.iter().map(|l| (eta * (l - m)).exp()).sum();
    m + s.ln() / eta
}

pub fn reference_softmax(losses: &[f64], eta: f64) -> Vec<f64> {
    let m = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = losses.iter().map(|l| (eta * (l - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Equality-constrained Newton's method for `min sum q v / n  s.t.  sum q n = budget`.
///
/// Starts from the uniform allocation and solves the KKT system each iteration, with a
/// fraction-to-boundary rule keeping every `n` positive.
pub fn newton_allocation(v: &[f64], q: &[f64], budget: f64) -> Vec<f64> {
    let b = v.len();
    let mut n = vec![budget; b];
    for _ in 0..200 {
        // Gradient and diagonal Hessian of the objective.
        let g: Vec<f64> = (0..b).map(|i| -q[i] * v[i] / (n[i] * n[i])).collect();
        let h: Vec<f64> = (0..b).map(|i| 2.0 * q[i] * v[i] / (n[i] * n[i] * n[i])).collect();
        // KKT: h_i dn_i + q_i lambda = -g_i,  sum q_i dn_i = 0.
        let num: f64 = (0..b).map(|i| q[i] * (-g[i]) / h[i]).sum();
        let den: f64 = (0..b).map(|i| q[i] * q[i] / h[i]).sum();
        let lambda = num / den;
        let dn: Vec<f64> = (0..b).map(|i| (-g[i] - q[i] * lambda) / h[i]).collect();
        let mut step: f64 = 1.0;
        for i in 0..b {
            if dn[i] < 0.0 {
                step = step.min(0.9 * n[i] / -dn[i]);
            }
        }
        let mut biggest: f64 = 0.0;
        for i in 0..b {
            n[i] += step * dn[i];
            biggest = biggest.max((step * dn[i]).abs());
        }
        if biggest < 1e-15 * budget {
            break;
        }
    }
    n
}

/// Inner minimum `min_{||theta|| <= r} sum_b q_b (h_b + s_b ||theta - c_b||^2)`.
///
/// The weighted sum of isotropic quadratics is itself isotropic around the weighted
/// centroid, so the minimizer is the projection of that centroid onto the ball.
pub fn convex_inner_minimum(spec: &ConvexGameSpec, q: &[f64]) -> f64 {
    let d = spec.dimension;
    let s: f64 = spec.groups.iter().zip(q).map(|(g, w)| w * g.scale).sum();
    let mut centroid = vec![0.0; d];
    for (g, w) in spec.groups.iter().zip(q) {
        for (c, x) in centroid.iter_mut().zip(&g.center) {
            *c += w * g.scale * x / s;
        }
    }
    let norm = centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > spec.radius {
        centroid.iter_mut().for_each(|x| *x *= spec.radius / norm);
    }
    spec.groups
        .iter()
        .zip(q)
        .map(|(g, w)| {
            let dist2: f64 = centroid.iter().zip(&g.center).map(|(a, b)| (a - b).powi(2)).sum();
            w * (g.offset + g.scale * dist2)
        })
        .sum()
}

/// Saddle-gap bound at the tuned step sizes, derived from the problem constants directly.
pub fn convex_gap_bound(spec: &ConvexGameSpec) -> f64 {
    let r = spec.radius;
    let mut g: f64 = 0.0;
    let mut m: f64 = 0.0;
    for grp in &spec.groups {
        let far = r + grp.center.iter().map(|x| x * x).sum::<f64>().sqrt();
        g = g.max(2.0 * grp.scale * far);
        m = m.max(grp.offset + grp.scale * far * far);
    }
    let t = spec.horizon as f64;
    let b = spec.groups.len() as f64;
    let g_sg = (g * g + spec.noise * spec.noise).sqrt();
    2.0 * r * g_sg / t.sqrt() + m * (b.ln() / (2.0 * t)).sqrt()
}

/// Lagrange dual of the budgeted allocation LP, maximized exactly over its breakpoints.
///
/// `max_{mu >= 0} sum_b q_b min_n (V_b(n) + mu n) - mu n_bar`. By LP duality this equals
/// the best objective over mixed per-bin policies that respect the budget.
pub fn rollout_lp_optimum(spec: &RolloutGameSpec) -> f64 {
    let dual = |mu: f64| -> f64 {
        spec.shares
            .iter()
            .zip(&spec.costs)
            .map(|(q, c)| {
                q * c
                    .iter()
                    .zip(&spec.arms)
                    .map(|(v, &n)| v + mu * n as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            - mu * spec.mean_budget
    };
    let mut candidates = vec![0.0];
    for c in &spec.costs {
        for i in 0..c.len() {
            for j in 0..c.len() {
                let dn = spec.arms[j] as f64 - spec.arms[i] as f64;
                if dn > 0.0 {
                    let mu = (c[i] - c[j]) / dn;
                    if mu > 0.0 {
                        candidates.push(mu);
                    }
                }
            }
        }
    }
    candidates.into_iter().map(dual).fold(f64::NEG_INFINITY, f64::max)
}

/// Exhaustive search over arm assignments for the active bins.
///
/// Returns `(arms, total, objective, feasible)` under the selection rule: exact target if
/// reachable, else the nearest reachable total with ties to the lower one; within the
/// chosen total the highest objective wins and near-ties go to the lexicographically
/// smallest arm vector.
pub fn brute_force_allocation(
    counts: &[usize],
    arms: &[usize],
    log_p: &[Vec<f64>],
    target: usize,
    count_weighted: bool,
) -> (Vec<Option<usize>>, usize, f64, bool) {
    let active: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] > 0).collect();
    let k = arms.len();
    let mut assignments: Vec<(Vec<usize>, usize, f64)> = Vec::new();
    for code in 0..k.pow(active.len() as u32) {
        let mut rest = code;
        let mut chosen = Vec::with_capacity(active.len());
        let mut total = 0;
        let mut obj = 0.0;
        for &b in &active {
            let j = rest % k;
            rest /= k;
            total += counts[b] * arms[j];
            let w = if count_weighted { counts[b] as f64 } else { 1.0 };
            obj += w * log_p[b][j];
            chosen.push(arms[j]);
        }
        assignments.push((chosen, total, obj));
    }
    let reachable: Vec<usize> = assignments.iter().map(|a| a.1).collect();
    let chosen_total = *reachable
        .iter()
        .min_by_key(|&&t| (t.abs_diff(target), t))
        .expect("at least one assignment");
    let best_obj = assignments
        .iter()
        .filter(|a| a.1 == chosen_total)
        .map(|a| a.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * (1.0 + best_obj.abs());
    let best = assignments
        .iter()
        .filter(|a| a.1 == chosen_total && a.2 >= best_obj - tol)
        .map(|a| a.0.clone())
        .min()
        .expect("non-empty optimum set");
    let mut out = vec![None; counts.len()];
    for (pos, &b) in active.iter().enumerate() {
        out[b] = Some(best[pos]);
    }
    (out, chosen_total, best_obj, chosen_total == target)
}

/// `max_a ||e_a - pi||` by direct evaluation of every vertex distance.
pub fn reference_score_bound(probs: &[f64]) -> f64 {
    (0..probs.len())
        .map(|a| {
            probs
                .iter()
                .enumerate()
                .map(|(i, p)| if i == a { (1.0 - p).powi(2) } else { p * p })
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Group-normalized score-function gradient written per coordinate.
pub fn reference_group_gradient(answers: &[usize], rewards: &[f64], probs: &[f64], eps: f64) -> Vec<f64> {
    let n = answers.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + eps;
    (0..probs.len())
        .map(|i| {
            answers
                .iter()
                .zip(rewards)
                .map(|(&y, r)| {
                    let indicator = if y == i { 1.0 } else { 0.0 };
                    (r - mean) / denom * (indicator - probs[i])
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
