//! The closed training loop.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::config::{ArmFeedback, Mode, RunConfig};
use super::trace::{
    pooled_sigma, recompute_diagnostics, worst_bin, BudgeterSnapshot, PromptAdversarySnapshot, RunSummary, RunTrace,
    StepRecord,
};
use crate::binning::{counts_from_bins, shares_from_bins, BinPartition, DifficultyTracker};
use crate::budgeter::{BudgeterRow, BudgeterState, BUDGETER_CSV_HEADER};
use crate::diagnostics::{BinMoments, DiagnosticInputs, StepDiagnostics};
use crate::error::Result;
use crate::grpo::{RolloutGroup, TabularGrpoWorld, Uid};
use crate::prompt_adversary::{PromptAdversaryRow, PromptAdversaryState, PROMPT_ADVERSARY_CSV_HEADER};
use crate::rng::{substream, Stream};

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub world: TabularGrpoWorld,
    pub tracker: DifficultyTracker,
}

/// Fixed evaluation groups: prompts binned once by their exact initial pass@k.
struct EvalGroups {
    k: u32,
    members: Vec<Vec<Uid>>,
}

impl EvalGroups {
    fn new(world: &TabularGrpoWorld, partition: &BinPartition, k: u32) -> Result<Self> {
        let mut members = vec![Vec::new(); partition.bin_count()];
        for p in world.prompts() {
            members[partition.bin_of(world.exact_pass_at_k(p.uid, k)?)].push(p.uid);
        }
        Ok(Self { k, members })
    }

    fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    fn evaluate(&self, world: &TabularGrpoWorld) -> Result<Vec<Option<f64>>> {
        self.members
            .iter()
            .map(|uids| {
                if uids.is_empty() {
                    return Ok(None);
                }
                let mut total = 0.0;
                for &u in uids {
                    total += world.exact_pass_at_k(u, self.k)?;
                }
                Ok(Some(total / uids.len() as f64))
            })
            .collect()
    }
}

fn placeholder_diagnostics(step: usize) -> StepDiagnostics {
    StepDiagnostics {
        step,
        mu_data: 0.0,
        mu_weight: 0.0,
        delta_mu: 0.0,
        wse: 0.0,
        wse_uniform: 0.0,
        entropy_q: 0.0,
        entropy_w: 0.0,
        mean_bin_index: 0.0,
        mass_ge3: 0.0,
        mass_ge8: 0.0,
    }
}

/// Runs the configured experiment. Deterministic given the config, including its seed.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let seed = config.seed;
    let partition = config.partition()?;
    let bins = partition.bin_count();
    let mut population_rng = substream(seed, 0, Stream::Population, 0);
    let prompts = config.population_spec().generate(&mut population_rng)?;
    let mut world = TabularGrpoWorld::new(prompts, config.answer_count, config.grpo_params())?;
    let mut tracker = DifficultyTracker::new(config.window, config.hysteresis, config.pass_k, &partition)?;
    let mut adversary = PromptAdversaryState::new(bins, config.adversary_config())?;
    let mut budgeter = BudgeterState::new(bins, config.budgeter_config())?;
    let uids: Vec<Uid> = world.prompts().iter().map(|p| p.uid).collect();
    let reward_correct = world.params().reward_correct;
    let eval = EvalGroups::new(&world, &partition, config.pass_k as u32)?;
    let initial_eval = eval.evaluate(&world)?;
    let mut current_eval = initial_eval.clone();
    let mut steps = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let t = step as u64;
        let mut batch_rng = substream(seed, t, Stream::Batch, 0);
        let mut picked = sample(&mut batch_rng, uids.len(), config.batch_size).into_vec();
        picked.sort_unstable();
        let batch: Vec<Uid> = picked.iter().map(|&i| uids[i]).collect();

        // Bin assignment. Prompt and baseline modes track with k dedicated rollouts first;
        // rollout mode bins from history and records its own rollouts afterwards.
        let bin_of: Vec<usize> = if config.mode == Mode::RolloutGdro {
            batch
                .iter()
                .map(|&u| {
                    if tracker.history_len(u) > 0 {
                        tracker.assign_bin(&partition, u)
                    } else {
                        Ok(0)
                    }
                })
                .collect::<Result<_>>()?
        } else {
            let flags: Vec<Vec<bool>> = batch
                .par_iter()
                .map(|&u| {
                    let mut rng = substream(seed, t, Stream::Tracking, u.0);
                    let g = world.sample_rollout_group(u, config.pass_k, &mut rng)?;
                    Ok(g.correct_flags(reward_correct))
                })
                .collect::<Result<_>>()?;
            let mut out = Vec::with_capacity(batch.len());
            for (&u, f) in batch.iter().zip(&flags) {
                tracker.record_outcome(u, f)?;
                out.push(tracker.assign_bin(&partition, u)?);
            }
            out
        };
        let counts = counts_from_bins(&bin_of, bins)?;
        let shares = shares_from_bins(&bin_of, bins)?;

        let allocation = if config.mode == Mode::RolloutGdro {
            Some(budgeter.select_allocation(&counts, config.batch_size)?)
        } else {
            None
        };
        let rollouts_for = |bin: usize| match &allocation {
            Some(a) => a.arms[bin].expect("populated bins have an arm"),
            None => config.rollouts_per_prompt,
        };

        let groups: Vec<RolloutGroup> = batch
            .par_iter()
            .zip(&bin_of)
            .map(|(&u, &b)| {
                let mut rng = substream(seed, t, Stream::Training, u.0);
                world.sample_rollout_group(u, rollouts_for(b), &mut rng)
            })
            .collect::<Result<_>>()?;
        if config.mode == Mode::RolloutGdro {
            for g in &groups {
                tracker.record_outcome(g.prompt_uid, &g.correct_flags(reward_correct))?;
            }
        }

        let mut loss_sum = vec![0.0; bins];
        let mut var_sum = vec![0.0; bins];
        let mut moments = BinMoments::new(bins);
        for (g, &b) in groups.iter().zip(&bin_of) {
            loss_sum[b] += g.prompt_loss;
            var_sum[b] += g.reward_variance();
            for &l in &g.per_rollout_losses {
                moments.push(b, l);
            }
        }
        let per_bin = |sums: &[f64]| -> Vec<Option<f64>> {
            (0..bins)
                .map(|b| (counts[b] > 0).then(|| sums[b] / counts[b] as f64))
                .collect()
        };
        let bin_mean_loss = per_bin(&loss_sum);
        let bin_reward_variance = per_bin(&var_sum);

        let mut multipliers = vec![1.0; bins];
        let mut adversary_snapshot = None;
        if config.mode == Mode::PromptGdro {
            let update = adversary.update_scores(&bin_mean_loss, &shares)?;
            multipliers = adversary.multipliers();
            adversary_snapshot = Some(PromptAdversarySnapshot {
                scores: adversary.scores().to_vec(),
                weights: adversary.weights(),
                normalized_weights: adversary.normalized_weights(),
                distribution: adversary.bin_distribution(),
                multipliers: multipliers.clone(),
                rejected: update.rejected,
            });
        }

        let mut budgeter_snapshot = None;
        if let Some(alloc) = &allocation {
            let mu_before = budgeter.dual();
            let mut p_chosen = vec![None; bins];
            let mut utility = vec![None; bins];
            let mut arm_loss = vec![None; bins];
            for b in 0..bins {
                let Some(n) = alloc.arms[b] else { continue };
                let j = match config.arm_feedback {
                    ArmFeedback::VarianceProxy => -bin_reward_variance[b].unwrap_or(0.0) / n as f64,
                    ArmFeedback::PromptLoss => -bin_mean_loss[b].unwrap_or(0.0),
                };
                let loss = budgeter.arm_loss(j, n)?;
                p_chosen[b] = Some(budgeter.arm_probability(b, n)?);
                budgeter.update_arm_scores(b, n, loss)?;
                utility[b] = Some(j);
                arm_loss[b] = Some(loss);
            }
            budgeter.update_dual(alloc.realized_mean)?;
            budgeter_snapshot = Some(BudgeterSnapshot {
                arms: alloc.arms.clone(),
                p_chosen,
                utility,
                arm_loss,
                mu_before,
                mu: budgeter.dual(),
                total: alloc.total,
                target: alloc.target,
                realized_mean: alloc.realized_mean,
                feasible: alloc.feasible,
            });
        }

        let gradients: Vec<(Uid, Vec<f64>)> = groups
            .par_iter()
            .zip(&bin_of)
            .map(|(g, &b)| Ok((g.prompt_uid, world.prompt_gradient(g, multipliers[b])?)))
            .collect::<Result<_>>()?;
        world.apply_update(&gradients)?;
        world.refresh_behavior();
        current_eval = eval.evaluate(&world)?;

        let rollouts_total: usize = groups.iter().map(RolloutGroup::len).sum();
        let allocation_per_bin: Vec<f64> = (0..bins)
            .map(|b| match &allocation {
                Some(a) => a.arms[b].map_or(config.mean_budget, |n| n as f64),
                None => config.rollouts_per_prompt as f64,
            })
            .collect();
        let (weights, adversary_dist) = match config.mode {
            Mode::PromptGdro => (adversary.normalized_weights(), adversary.bin_distribution()),
            Mode::RolloutGdro => {
                let spend: Vec<f64> = (0..bins)
                    .map(|b| counts[b] as f64 * allocation_per_bin[b] / rollouts_total as f64)
                    .map(|x| if x.is_finite() { x } else { 0.0 })
                    .collect();
                let spend: Vec<f64> = (0..bins).map(|b| if counts[b] > 0 { spend[b] } else { 0.0 }).collect();
                (spend.clone(), spend)
            }
            Mode::BaselineGrpo => (shares.clone(), shares.clone()),
        };

        steps.push(StepRecord {
            step,
            counts,
            shares: shares.clone(),
            bin_mean_loss,
            bin_reward_variance,
            loss_moments: moments,
            rollouts_total,
            prompt_adversary: adversary_snapshot,
            budgeter: budgeter_snapshot,
            diagnostic_inputs: DiagnosticInputs {
                step,
                shares,
                weights,
                adversary: adversary_dist,
                allocation: allocation_per_bin,
            },
            diagnostics: placeholder_diagnostics(step),
            eval_pass_at_k: current_eval.clone(),
        });
    }

    // Sigma for the WSE series needs the whole run, so diagnostics are finalized here
    // with the same routine replay uses.
    let diagnostics = recompute_diagnostics(&steps, bins, config.mean_budget)?;
    for (s, d) in steps.iter_mut().zip(diagnostics) {
        s.diagnostics = d;
    }
    let n_steps = steps.len().max(1) as f64;
    let last = steps.last().map(|s| s.diagnostics.clone());
    let summary = RunSummary {
        mode: config.mode,
        steps: steps.len(),
        sigma_hat: pooled_sigma(&steps, bins),
        eval_group_sizes: eval.sizes(),
        initial_worst_bin_pass_at_k: worst_bin(&initial_eval),
        final_worst_bin_pass_at_k: worst_bin(&current_eval),
        initial_eval_pass_at_k: initial_eval,
        final_eval_pass_at_k: current_eval,
        mean_wse: steps.iter().map(|s| s.diagnostics.wse).sum::<f64>() / n_steps,
        mean_wse_uniform: steps.iter().map(|s| s.diagnostics.wse_uniform).sum::<f64>() / n_steps,
        mean_realized_rollouts: steps
            .iter()
            .map(|s| s.rollouts_total as f64 / config.batch_size as f64)
            .sum::<f64>()
            / n_steps,
        final_mass_ge3: last.as_ref().map_or(0.0, |d| d.mass_ge3),
        final_mass_ge8: last.as_ref().map_or(0.0, |d| d.mass_ge8),
    };
    Ok(RunOutcome {
        trace: RunTrace {
            config: config.clone(),
            steps,
            summary,
        },
        world,
        tracker,
    })
}

fn prompt_adversary_csv(trace: &RunTrace) -> String {
    let mut out = format!("{PROMPT_ADVERSARY_CSV_HEADER}\n");
    for s in &trace.steps {
        let Some(a) = &s.prompt_adversary else { continue };
        for b in 0..a.scores.len() {
            let row = PromptAdversaryRow {
                step: s.step,
                bin: b,
                score: a.scores[b],
                weight: a.weights[b],
                q: a.distribution[b],
                share: s.shares[b],
                mean_loss: s.bin_mean_loss[b],
            };
            out.push_str(&row.csv_line());
            out.push('\n');
        }
    }
    out
}

fn budgeter_csv(trace: &RunTrace) -> String {
    let mut out = format!("{BUDGETER_CSV_HEADER}\n");
    for s in &trace.steps {
        let Some(b) = &s.budgeter else { continue };
        for (bin, arm) in b.arms.iter().enumerate() {
            let (Some(arm), Some(p)) = (arm, b.p_chosen[bin]) else { continue };
            let row = BudgeterRow {
                step: s.step,
                bin,
                count: s.counts[bin],
                chosen_arm: *arm,
                p_chosen: p,
                mu: b.mu,
                realized_mean: b.realized_mean,
                feasible: b.feasible,
            };
            out.push_str(&row.csv_line());
            out.push('\n');
        }
    }
    out
}

/// Writes `trace.jsonl`, `diagnostics.csv`, `summary.json` and the per-module CSVs.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let trace = &outcome.trace;
    fs::write(dir.join("trace.jsonl"), trace.to_jsonl())?;
    fs::write(dir.join("diagnostics.csv"), trace.diagnostics_csv())?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&trace.summary)?)?;
    fs::write(dir.join("prompt_adversary.csv"), prompt_adversary_csv(trace))?;
    fs::write(dir.join("budgeter.csv"), budgeter_csv(trace))?;
    fs::write(dir.join("tracker.csv"), outcome.tracker.to_csv())?;
    fs::write(dir.join("population.txt"), outcome.world.population_text())?;
    Ok(())
}
