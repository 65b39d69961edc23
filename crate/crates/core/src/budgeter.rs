//! Rollout budgeter: one exponential-weights bandit per bin over discrete rollout counts,
//! a dual price on the mean-rollout budget, and an exact-sum dynamic program that picks
//! the most probable joint allocation meeting the budget.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{argument, GdroError, Result};
use crate::numeric::softmax;

/// How bins enter the allocation objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DpWeighting {
    /// `sum_b count_b * log p_b(n_b)`
    #[default]
    CountWeighted,
    /// `sum_b log p_b(n_b)`
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgeterConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub mean_budget: f64,
    pub dual_rate: f64,
    pub dual_cap: f64,
    pub initial_dual: f64,
    pub arm_ema: f64,
    pub arm_learning_rate: f64,
    pub arm_exploration: f64,
    pub weighting: DpWeighting,
}

impl Default for BudgeterConfig {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 12,
            mean_budget: 4.0,
            dual_rate: 0.05,
            dual_cap: 10.0,
            initial_dual: 0.0,
            arm_ema: 0.4,
            arm_learning_rate: 0.65,
            arm_exploration: 0.01,
            weighting: DpWeighting::CountWeighted,
        }
    }
}

impl BudgeterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(argument("rollout arms need 1 <= n_min <= n_max"));
        }
        if !(self.mean_budget > 0.0 && self.mean_budget.is_finite()) {
            return Err(argument("mean_budget must be positive and finite"));
        }
        if !(self.dual_cap > 0.0 && self.dual_cap.is_finite()) {
            return Err(argument("dual_cap must be positive and finite"));
        }
        if !(self.dual_rate >= 0.0 && self.dual_rate.is_finite()) {
            return Err(argument("dual_rate must be finite and nonnegative"));
        }
        if !(0.0..=self.dual_cap).contains(&self.initial_dual) {
            return Err(argument("initial_dual must lie in [0, dual_cap]"));
        }
        if !(self.arm_ema > 0.0 && self.arm_ema <= 1.0) {
            return Err(argument("arm_ema must lie in (0, 1]"));
        }
        if !(self.arm_learning_rate >= 0.0 && self.arm_learning_rate.is_finite()) {
            return Err(argument("arm_learning_rate must be finite and nonnegative"));
        }
        if !(self.arm_exploration > 0.0 && self.arm_exploration <= 1.0) {
            return Err(argument("arm_exploration must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn arms(&self) -> RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn arm_count(&self) -> usize {
        self.n_max - self.n_min + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgeterState {
    config: BudgeterConfig,
    /// `scores[bin][arm - n_min]`: EMA of importance-weighted arm losses.
    scores: Vec<Vec<f64>>,
    dual: f64,
}

/// Joint allocation chosen for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Chosen rollout count per bin; `None` for bins absent from the batch.
    pub arms: Vec<Option<usize>>,
    pub total: usize,
    pub target: usize,
    pub realized_mean: f64,
    pub feasible: bool,
    pub objective: f64,
}

impl BudgeterState {
    pub fn new(bin_count: usize, config: BudgeterConfig) -> Result<Self> {
        config.validate()?;
        if bin_count == 0 {
            return Err(argument("bin count must be positive"));
        }
        let k = config.arm_count();
        Ok(Self {
            dual: config.initial_dual,
            scores: vec![vec![0.0; k]; bin_count],
            config,
        })
    }

    pub fn config(&self) -> &BudgeterConfig {
        &self.config
    }

    pub fn bin_count(&self) -> usize {
        self.scores.len()
    }

    pub fn dual(&self) -> f64 {
        self.dual
    }

    pub fn scores(&self, bin: usize) -> &[f64] {
        &self.scores[bin]
    }

    fn arm_index(&self, arm: usize) -> Result<usize> {
        if self.config.arms().contains(&arm) {
            Ok(arm - self.config.n_min)
        } else {
            Err(argument(format!(
                "arm {arm} outside [{}, {}]",
                self.config.n_min, self.config.n_max
            )))
        }
    }

    fn check_bin(&self, bin: usize) -> Result<()> {
        if bin < self.bin_count() {
            Ok(())
        } else {
            Err(argument(format!("bin {bin} out of range")))
        }
    }

    /// Exploration-mixed softmax over `-eta * score`.
    pub fn arm_distribution(&self, bin: usize) -> Vec<f64> {
        let eta = self.config.arm_learning_rate;
        let logits: Vec<f64> = self.scores[bin].iter().map(|s| -eta * s).collect();
        let gamma = self.config.arm_exploration;
        let floor = gamma / logits.len() as f64;
        softmax(&logits)
            .into_iter()
            .map(|p| (1.0 - gamma) * p + floor)
            .collect()
    }

    pub fn arm_probability(&self, bin: usize, arm: usize) -> Result<f64> {
        self.check_bin(bin)?;
        Ok(self.arm_distribution(bin)[self.arm_index(arm)?])
    }

    /// Penalized bandit loss `-J + mu * n`.
    pub fn arm_loss(&self, utility: f64, arm: usize) -> Result<f64> {
        self.arm_index(arm)?;
        Ok(-utility + self.dual * arm as f64)
    }

    /// Arm minimizing `-J(n) + mu * n`, smallest on ties. `utilities` is indexed by arm.
    pub fn best_response_arm(&self, utilities: &[f64]) -> Result<usize> {
        if utilities.len() != self.config.arm_count() {
            return Err(argument("one utility per arm is required"));
        }
        let mut best = (self.config.n_min, f64::INFINITY);
        for (arm, &u) in self.config.arms().zip(utilities) {
            let loss = self.arm_loss(u, arm)?;
            if loss < best.1 {
                best = (arm, loss);
            }
        }
        Ok(best.0)
    }

    /// Feeds the importance-weighted loss of the played arm into its EMA score.
    pub fn update_arm_scores(&mut self, bin: usize, chosen_arm: usize, observed_loss: f64) -> Result<()> {
        self.check_bin(bin)?;
        let idx = self.arm_index(chosen_arm)?;
        if !observed_loss.is_finite() {
            return Err(GdroError::Numerical(format!("non-finite arm loss for bin {bin}")));
        }
        let p = self.arm_distribution(bin)[idx];
        let floor = self.config.arm_exploration / self.config.arm_count() as f64;
        if p < floor * (1.0 - 1e-12) {
            return Err(GdroError::Numerical(format!(
                "arm probability {p} below exploration floor {floor}"
            )));
        }
        let estimate = observed_loss / p;
        let beta = self.config.arm_ema;
        let s = &mut self.scores[bin][idx];
        *s = (1.0 - beta) * *s + beta * estimate;
        Ok(())
    }

    /// Projected dual ascent on the mean-rollout constraint.
    pub fn update_dual(&mut self, realized_mean: f64) -> Result<()> {
        let (lo, hi) = (self.config.n_min as f64, self.config.n_max as f64);
        if !(realized_mean >= lo && realized_mean <= hi) {
            return Err(argument(format!("realized mean {realized_mean} outside [{lo}, {hi}]")));
        }
        let next = self.dual + self.config.dual_rate * (realized_mean - self.config.mean_budget);
        self.dual = next.clamp(0.0, self.config.dual_cap);
        Ok(())
    }

    /// Integer rollout target `mean_budget * batch`.
    pub fn target_total(&self, batch: usize) -> Result<usize> {
        let t = self.config.mean_budget * batch as f64;
        let rounded = t.round();
        if (t - rounded).abs() > 1e-9 {
            return Err(argument(format!(
                "mean budget {} times batch {batch} is not an integer",
                self.config.mean_budget
            )));
        }
        Ok(rounded as usize)
    }

    /// Most probable joint allocation with `sum_b count_b * n_b` equal to the target.
    ///
    /// When the target is out of reach the nearest reachable total is used (lower on
    /// ties) and `feasible` is false. Among equal objectives the lexicographically
    /// smallest arm vector wins.
    pub fn select_allocation(&self, counts: &[usize], batch: usize) -> Result<AllocationResult> {
        if counts.len() != self.bin_count() {
            return Err(argument("one count per bin is required"));
        }
        if counts.iter().sum::<usize>() != batch {
            return Err(argument("bin counts must sum to the batch size"));
        }
        let active: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] > 0).collect();
        if active.is_empty() {
            return Err(argument("no active bins"));
        }
        let target = self.target_total(batch)?;
        let weights: Vec<Vec<f64>> = active
            .iter()
            .map(|&b| {
                let scale = match self.config.weighting {
                    DpWeighting::CountWeighted => counts[b] as f64,
                    DpWeighting::Unweighted => 1.0,
                };
                self.arm_distribution(b).iter().map(|p| scale * p.ln()).collect()
            })
            .collect();
        let active_counts: Vec<usize> = active.iter().map(|&b| counts[b]).collect();
        let plan = exact_sum_dp(&active_counts, &weights, self.config.n_min, self.config.n_max, target);

        let mut arms = vec![None; counts.len()];
        for (&b, &n) in active.iter().zip(&plan.arms) {
            arms[b] = Some(n);
        }
        Ok(AllocationResult {
            arms,
            total: plan.total,
            target,
            realized_mean: plan.total as f64 / batch as f64,
            feasible: plan.total == target,
            objective: plan.objective,
        })
    }
}

struct DpPlan {
    arms: Vec<usize>,
    total: usize,
    objective: f64,
}

/// Suffix DP over bins with the accumulated rollout total as state.
///
/// `weights[i][n - n_min]` is the objective contribution of giving arm `n` to item `i`,
/// whose cost is `counts[i] * n`.
fn exact_sum_dp(counts: &[usize], weights: &[Vec<f64>], n_min: usize, n_max: usize, target: usize) -> DpPlan {
    let items = counts.len();
    let max_total: usize = counts.iter().map(|c| c * n_max).sum();
    let width = max_total + 1;
    let mut best = vec![f64::NEG_INFINITY; (items + 1) * width];
    best[items * width] = 0.0;
    for i in (0..items).rev() {
        let c = counts[i];
        for s in 0..width {
            let mut value = f64::NEG_INFINITY;
            for n in n_min..=n_max {
                let cost = c * n;
                if cost > s {
                    break;
                }
                let rest = best[(i + 1) * width + s - cost];
                if rest == f64::NEG_INFINITY {
                    continue;
                }
                let v = weights[i][n - n_min] + rest;
                if v > value {
                    value = v;
                }
            }
            best[i * width + s] = value;
        }
    }

    let reachable = |s: usize| best[s] > f64::NEG_INFINITY;
    let total = if target < width && reachable(target) {
        target
    } else {
        let below = (0..target.min(width)).rev().find(|&s| reachable(s));
        let above = (target + 1..width).find(|&s| reachable(s));
        match (below, above) {
            (Some(lo), Some(hi)) => {
                if target - lo <= hi - target {
                    lo
                } else {
                    hi
                }
            }
            (Some(lo), None) => lo,
            (None, Some(hi)) => hi,
            (None, None) => unreachable!("every item has at least one arm"),
        }
    };

    let mut arms = Vec::with_capacity(items);
    let mut s = total;
    for i in 0..items {
        let c = counts[i];
        let goal = best[i * width + s];
        let n = (n_min..=n_max)
            .find(|&n| {
                let cost = c * n;
                cost <= s && {
                    let rest = best[(i + 1) * width + s - cost];
                    rest > f64::NEG_INFINITY && weights[i][n - n_min] + rest == goal
                }
            })
            .expect("optimal arm reconstructs");
        arms.push(n);
        s -= c * n;
    }
    DpPlan {
        arms,
        total,
        objective: best[total],
    }
}

/// One row of the per-step budgeter CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgeterRow {
    pub step: usize,
    pub bin: usize,
    pub count: usize,
    pub chosen_arm: usize,
    pub p_chosen: f64,
    pub mu: f64,
    pub realized_mean: f64,
    pub feasible: bool,
}

pub const BUDGETER_CSV_HEADER: &str = "step,bin,count,chosen_arm,p_chosen,mu,realized_mean,feasible";

impl BudgeterRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step, self.bin, self.count, self.chosen_arm, self.p_chosen, self.mu, self.realized_mean, self.feasible
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::grpo::sample_categorical;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(bins: usize, config: BudgeterConfig) -> BudgeterState {
        BudgeterState::new(bins, config).unwrap()
    }

    #[test]
    fn arm_loss_arithmetic() {
        let config = BudgeterConfig {
            initial_dual: 0.1,
            ..BudgeterConfig::default()
        };
        let s = state(1, config);
        assert!((s.arm_loss(0.3, 6).unwrap() - 0.3).abs() < 1e-15);
        assert!(s.arm_loss(0.3, 13).is_err());
        assert!(s.arm_loss(0.3, 1).is_err());
        assert_eq!(s.config().arms(), 2..=12);
    }

    #[test]
    fn equal_scores_give_uniform_distribution() {
        let s = state(2, BudgeterConfig::default());
        let d = s.arm_distribution(1);
        for p in d {
            assert!((p - 1.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lower_loss_arm_converges_to_max_mass() {
        let mut s = state(1, BudgeterConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let best = 7;
        for _ in 0..4000 {
            let dist = s.arm_distribution(0);
            let arm = 2 + sample_categorical(&dist, &mut rng);
            let loss = if arm == best { 0.1 } else { 1.0 };
            s.update_arm_scores(0, arm, loss).unwrap();
        }
        let k = 11.0;
        let max_mass = (1.0 - 0.01) + 0.01 / k;
        let p = s.arm_probability(0, best).unwrap();
        assert!(p > 0.95 * max_mass, "p = {p}");
        assert!(p <= max_mass + 1e-12);
    }

    #[test]
    fn dual_update_examples() {
        let mut s = state(
            1,
            BudgeterConfig {
                initial_dual: 0.1,
                ..BudgeterConfig::default()
            },
        );
        s.update_dual(4.0).unwrap();
        assert_eq!(s.dual(), 0.1);
        s.update_dual(4.5).unwrap();
        assert!((s.dual() - 0.125).abs() < 1e-15);
        s.update_dual(2.0).unwrap();
        s.update_dual(2.0).unwrap();
        assert_eq!(s.dual(), 0.0);
        assert!(s.update_dual(1.0).is_err());
    }

    #[test]
    fn single_bin_is_forced() {
        let s = state(3, BudgeterConfig::default());
        let a = s.select_allocation(&[0, 4, 0], 4).unwrap();
        assert_eq!(a.arms, vec![None, Some(4), None]);
        assert!(a.feasible);
        assert_eq!(a.total, 16);
    }

    #[test]
    fn peaked_bins_get_their_modes() {
        let config = BudgeterConfig {
            n_min: 2,
            n_max: 6,
            ..BudgeterConfig::default()
        };
        let mut s = state(2, config);
        // Make bin 0 prefer 2 and bin 1 prefer 6 by feeding low loss to those arms.
        for _ in 0..50 {
            for arm in 2..=6 {
                s.update_arm_scores(0, arm, if arm == 2 { 0.0 } else { 1.0 }).unwrap();
                s.update_arm_scores(1, arm, if arm == 6 { 0.0 } else { 1.0 }).unwrap();
            }
        }
        let a = s.select_allocation(&[2, 2], 4).unwrap();
        assert_eq!(a.arms, vec![Some(2), Some(6)]);
        assert_eq!(a.total, 16);
        assert!(a.feasible);
    }

    #[test]
    fn infeasible_target_falls_back_to_nearest_total() {
        let config = BudgeterConfig {
            n_min: 5,
            n_max: 6,
            mean_budget: 4.0,
            ..BudgeterConfig::default()
        };
        let s = state(1, config);
        let a = s.select_allocation(&[3], 3).unwrap();
        assert!(!a.feasible);
        assert_eq!(a.total, 15);
        assert_eq!(a.arms, vec![Some(5)]);
    }

    #[test]
    fn nearest_total_ties_go_low() {
        // Counts of 2 only reach even totals; target 4*... choose mean_budget 3.5 with batch 2 -> 7.
        let config = BudgeterConfig {
            n_min: 2,
            n_max: 6,
            mean_budget: 3.5,
            ..BudgeterConfig::default()
        };
        let s = state(1, config);
        let a = s.select_allocation(&[2], 2).unwrap();
        assert_eq!(a.total, 6);
        assert!(!a.feasible);
    }

    #[test]
    fn allocation_errors() {
        let s = state(2, BudgeterConfig::default());
        assert!(s.select_allocation(&[0, 0], 0).is_err());
        assert!(s.select_allocation(&[1, 1], 3).is_err());
        let frac = state(
            1,
            BudgeterConfig {
                mean_budget: 4.5,
                ..BudgeterConfig::default()
            },
        );
        assert!(frac.select_allocation(&[3], 3).is_err());
    }

    #[test]
    fn closed_loop_mean_matches_budget_on_stationary_landscape() {
        // Batch composition drifts every step; utilities are a fixed function of (bin, n).
        let mut s = state(3, BudgeterConfig::default());
        let variance = [0.2, 1.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut realized = Vec::new();
        for _ in 0..1000 {
            let a = rng.random_range(1..200usize);
            let b = rng.random_range(1..(256 - a));
            let counts = [a, b, 256 - a - b];
            let alloc = s.select_allocation(&counts, 256).unwrap();
            assert!(alloc.feasible);
            assert_eq!(alloc.total, 1024);
            for (bin, arm) in alloc.arms.iter().enumerate() {
                let n = arm.unwrap();
                let loss = s.arm_loss(-variance[bin] / n as f64, n).unwrap();
                s.update_arm_scores(bin, n, loss).unwrap();
            }
            s.update_dual(alloc.realized_mean).unwrap();
            realized.push(alloc.realized_mean);
        }
        let tail = &realized[500..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 4.0).abs() < 0.1, "running mean {mean}");
        assert!((0.0..=10.0).contains(&s.dual()));
    }

    proptest! {
        #[test]
        fn best_response_weakly_decreases_in_price(
            utilities in proptest::collection::vec(-2.0f64..2.0, 11),
            mut prices in proptest::collection::vec(0.0f64..10.0, 2..8),
        ) {
            prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut last = usize::MAX;
            for mu in prices {
                let s = state(1, BudgeterConfig { initial_dual: mu, ..BudgeterConfig::default() });
                let arm = s.best_response_arm(&utilities).unwrap();
                prop_assert!(arm <= last);
                last = arm;
            }
        }

        #[test]
        fn dual_stays_in_range(steps in proptest::collection::vec(2.0f64..=12.0, 1..200), rate in 0.0f64..5.0) {
            let mut s = state(1, BudgeterConfig { dual_rate: rate, ..BudgeterConfig::default() });
            for n in steps {
                s.update_dual(n).unwrap();
                prop_assert!((0.0..=10.0).contains(&s.dual()));
            }
        }

        #[test]
        fn arm_mass_respects_exploration_floor(
            updates in proptest::collection::vec((2usize..=12, 0.0f64..50.0), 1..100),
        ) {
            let mut s = state(1, BudgeterConfig::default());
            for (arm, loss) in updates {
                s.update_arm_scores(0, arm, loss).unwrap();
                let d = s.arm_distribution(0);
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(d.iter().all(|&p| p >= 0.01 / 11.0 - 1e-15));
            }
        }
    }
}
