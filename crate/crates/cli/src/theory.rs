//! Randomized batteries behind `gdro theory-check`.

use clap::ValueEnum;
use gdro_core::grpo::{GrpoParams, SyntheticPrompt, TabularGrpoWorld, Uid};
use gdro_core::oracles::{
    all_pass, bounded_differences_check, lse_value_and_best_response, mean_gap_over_seeds, run_rollout_game,
    softmin_arm_distribution, sqrt_allocation, BoundedDiffQuery, Check, ConvexGameSpec, EntropicSurrogateQuery,
    RolloutGameSpec, VarianceAllocQuery,
};
use gdro_core::rng::{substream, Stream};
use gdro_core::Result;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Lse,
    Game,
    Sqrt,
    Softmin,
    RolloutGame,
    EfronStein,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Lse,
        Suite::Game,
        Suite::Sqrt,
        Suite::Softmin,
        Suite::RolloutGame,
        Suite::EfronStein,
    ];
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub failed_checks: usize,
    /// Largest `measured / bound` over the suite's inequality checks with a positive bound.
    pub worst_ratio: f64,
    pub pass: bool,
}

fn summarize(suite: Suite, instances: usize, checks: &[Check]) -> SuiteReport {
    let failed = checks.iter().filter(|c| !c.pass).count();
    let worst_ratio = checks
        .iter()
        .filter(|c| c.bound > 0.0)
        .map(|c| c.measured / c.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    SuiteReport {
        suite,
        instances,
        failed_checks: failed,
        worst_ratio,
        pass: all_pass(checks),
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut rng = substream(seed, 0, Stream::Oracle, suite as u64);
    let mut checks = Vec::new();
    let instances = match suite {
        Suite::Lse => {
            let temperatures = [0.1, 1.0, 10.0];
            for i in 0..1000 {
                let b = rng.random_range(2..=32usize);
                let losses = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
                let r = lse_value_and_best_response(&EntropicSurrogateQuery {
                    losses,
                    temperature: temperatures[i % 3],
                })?;
                checks.extend(r.checks);
            }
            1000
        }
        Suite::Game => {
            for _ in 0..10 {
                let d = rng.random_range(1..=10usize);
                let b = rng.random_range(2..=8usize);
                let spec = ConvexGameSpec::random(&mut rng, d, b, 10_000, 0.5);
                let (gap, valid) = mean_gap_over_seeds(&spec, 4)?;
                checks.push(Check::le("seed_mean_gap_le_bound", gap, spec.theoretical_bound()));
                checks.push(Check::le("inner_solver_converged", if valid { 0.0 } else { 1.0 }, 0.0));
            }
            10
        }
        Suite::Sqrt => {
            for _ in 0..100 {
                let b = rng.random_range(2..=16usize);
                let raw: Vec<f64> = (0..b).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let r = sqrt_allocation(&VarianceAllocQuery {
                    variances: (0..b).map(|_| rng.random_range(0.01..2.0)).collect(),
                    shares: raw.iter().map(|x| x / total).collect(),
                    mean_budget: rng.random_range(2.0..12.0),
                })?;
                checks.extend(r.checks);
            }
            100
        }
        Suite::Softmin => {
            for _ in 0..1000 {
                let k = rng.random_range(1..=11usize);
                let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..4.0)).collect();
                let arms: Vec<usize> = (2..2 + k).collect();
                let r = softmin_arm_distribution(&costs, &arms, rng.random_range(0.0..1.0), rng.random_range(0.1..10.0))?;
                checks.extend(r.checks);
            }
            1000
        }
        Suite::RolloutGame => {
            for _ in 0..20 {
                let bins = rng.random_range(1..=4usize);
                let k = rng.random_range(2..=5usize);
                let spec = RolloutGameSpec::random(&mut rng, bins, k, 10_000);
                checks.extend(run_rollout_game(&spec)?.checks);
            }
            20
        }
        Suite::EfronStein => {
            let prompts = vec![SyntheticPrompt {
                uid: Uid(0),
                correct_answer: 0,
                latent_difficulty: 0.5,
            }];
            let world = TabularGrpoWorld::new(prompts, 6, GrpoParams::default())?;
            let mut n_cases = 0;
            for epsilon in [1e-6, 0.5] {
                for n in [2usize, 4, 8] {
                    let r = bounded_differences_check(
                        &world,
                        Uid(0),
                        &BoundedDiffQuery {
                            group_size: n,
                            replacement_trials: 20_000,
                            variance_groups: 5_000,
                            epsilon,
                            advantage_clip: None,
                            seed,
                        },
                    )?;
                    checks.extend(r.checks);
                    n_cases += 1;
                }
            }
            n_cases
        }
    };
    Ok(summarize(suite, instances, &checks))
}
