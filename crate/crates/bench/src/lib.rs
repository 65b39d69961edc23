//! Deterministic fixtures shared by the controller benchmarks.

use gdro_core::{BudgeterConfig, BudgeterState, Mode, PromptAdversaryConfig, PromptAdversaryState, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A budgeter with `bins` bins whose arm scores have seen a few noisy updates.
pub fn warmed_budgeter(bins: usize, n_min: usize, n_max: usize, seed: u64) -> BudgeterState {
    let cfg = BudgeterConfig {
        n_min,
        n_max,
        mean_budget: (n_min + n_max) as f64 / 2.0,
        ..BudgeterConfig::default()
    };
    let mut state = BudgeterState::new(bins, cfg).expect("valid budgeter config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in 0..bins {
        for _ in 0..16 {
            let arm = rng.random_range(n_min..=n_max);
            state.update_arm_scores(b, arm, rng.random_range(0.0..2.0)).expect("arm in range");
        }
    }
    state
}

/// Random bin counts summing to `batch`.
pub fn bin_counts(bins: usize, batch: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0; bins];
    for _ in 0..batch {
        counts[rng.random_range(0..bins)] += 1;
    }
    counts
}

/// Per-bin mean losses (some bins empty) and matching shares.
pub fn adversary_inputs(bins: usize, seed: u64) -> (PromptAdversaryState, Vec<Option<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let losses = (0..bins)
        .map(|_| rng.random_bool(0.8).then(|| rng.random_range(0.0..1.0)))
        .collect();
    let raw: Vec<f64> = (0..bins).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let shares = raw.into_iter().map(|x| x / total).collect();
    let state = PromptAdversaryState::new(bins, PromptAdversaryConfig::default()).expect("valid adversary config");
    (state, losses, shares)
}

/// A short run of the standard setup in the given mode.
pub fn short_run_config(mode: Mode, steps: usize) -> RunConfig {
    RunConfig {
        mode,
        steps,
        ..RunConfig::default()
    }
}
