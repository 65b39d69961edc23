//! Tabular GRPO world.
//!
//! Each prompt owns a softmax policy over `A` discrete answers. A response is a single
//! answer token, so the clipped surrogate reduces to one importance ratio per rollout and
//! every quantity (losses, KL, gradients) has a closed form.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{argument, GdroError, Result};
use crate::numeric::{kl_divergence, softmax};

/// Stable identifier of a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Uid(pub u64);

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPrompt {
    pub uid: Uid,
    pub correct_answer: usize,
    /// Sets the initial logit of the correct answer to `-latent_difficulty`.
    pub latent_difficulty: f64,
}

/// Loss and update hyperparameters of the tabular learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoParams {
    pub reward_correct: f64,
    pub reward_incorrect: f64,
    pub kl_coefficient: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub advantage_epsilon: f64,
    pub advantage_clip: f64,
    pub learning_rate: f64,
}

impl Default for GrpoParams {
    fn default() -> Self {
        Self {
            reward_correct: 1.0,
            reward_incorrect: -1.0,
            kl_coefficient: 0.001,
            clip_low: 0.2,
            clip_high: 0.28,
            advantage_epsilon: 1e-6,
            advantage_clip: 5.0,
            learning_rate: 0.5,
        }
    }
}

impl GrpoParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.reward_correct,
            self.reward_incorrect,
            self.kl_coefficient,
            self.clip_low,
            self.clip_high,
            self.advantage_epsilon,
            self.advantage_clip,
            self.learning_rate,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(argument("GRPO parameters must be finite"));
        }
        if self.clip_low <= 0.0 || self.clip_high <= 0.0 {
            return Err(argument("clip_low and clip_high must be positive"));
        }
        if self.clip_low >= 1.0 {
            return Err(argument("clip_low must be below 1"));
        }
        if self.advantage_epsilon <= 0.0 {
            return Err(argument("advantage_epsilon must be positive"));
        }
        if self.advantage_clip <= 0.0 {
            return Err(argument("advantage_clip must be positive"));
        }
        if self.kl_coefficient < 0.0 || self.learning_rate < 0.0 {
            return Err(argument("kl_coefficient and learning_rate must be nonnegative"));
        }
        Ok(())
    }
}

/// One GRPO rollout group for a single prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub prompt_uid: Uid,
    pub sampled_answers: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub per_rollout_losses: Vec<f64>,
    pub prompt_loss: f64,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.sampled_answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled_answers.is_empty()
    }

    pub fn correct_flags(&self, reward_correct: f64) -> Vec<bool> {
        self.rewards.iter().map(|&r| r == reward_correct).collect()
    }

    /// Biased (1/n) variance of the group's rewards.
    pub fn reward_variance(&self) -> f64 {
        let n = self.rewards.len() as f64;
        let mean = self.rewards.iter().sum::<f64>() / n;
        self.rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
    }
}

/// Within-group standardized advantages `(r - mean) / (std + eps)` with the biased
/// standard deviation, clamped to `[-clip, clip]`.
pub fn group_advantages(rewards: &[f64], epsilon: f64, clip: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    rewards
        .iter()
        .map(|r| ((r - mean) / (std + epsilon)).clamp(-clip, clip))
        .collect()
}

/// Synthetic prompt population with softmax answer policies.
#[derive(Debug, Clone)]
pub struct TabularGrpoWorld {
    prompts: Vec<SyntheticPrompt>,
    index: HashMap<Uid, usize>,
    answer_count: usize,
    policy: Vec<Vec<f64>>,
    reference: Vec<Vec<f64>>,
    behavior: Vec<Vec<f64>>,
    params: GrpoParams,
}

impl TabularGrpoWorld {
    pub fn new(prompts: Vec<SyntheticPrompt>, answer_count: usize, params: GrpoParams) -> Result<Self> {
        params.validate()?;
        if answer_count < 2 {
            return Err(argument("answer_count must be at least 2"));
        }
        let mut index = HashMap::with_capacity(prompts.len());
        for (i, p) in prompts.iter().enumerate() {
            if p.correct_answer >= answer_count {
                return Err(argument(format!(
                    "prompt {} has correct answer {} outside [0, {answer_count})",
                    p.uid, p.correct_answer
                )));
            }
            if !p.latent_difficulty.is_finite() {
                return Err(argument(format!("prompt {} has non-finite difficulty", p.uid)));
            }
            if index.insert(p.uid, i).is_some() {
                return Err(argument(format!("duplicate uid {}", p.uid)));
            }
        }
        let policy: Vec<Vec<f64>> = prompts
            .iter()
            .map(|p| {
                let mut logits = vec![0.0; answer_count];
                logits[p.correct_answer] = -p.latent_difficulty;
                logits
            })
            .collect();
        Ok(Self {
            reference: policy.clone(),
            behavior: policy.clone(),
            policy,
            prompts,
            index,
            answer_count,
            params,
        })
    }

    pub fn prompts(&self) -> &[SyntheticPrompt] {
        &self.prompts
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn answer_count(&self) -> usize {
        self.answer_count
    }

    pub fn params(&self) -> &GrpoParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut GrpoParams {
        &mut self.params
    }

    pub fn position(&self, uid: Uid) -> Result<usize> {
        self.index
            .get(&uid)
            .copied()
            .ok_or_else(|| GdroError::Lookup(format!("prompt {uid}")))
    }

    pub fn prompt(&self, uid: Uid) -> Result<&SyntheticPrompt> {
        Ok(&self.prompts[self.position(uid)?])
    }

    pub fn policy_logits(&self, uid: Uid) -> Result<&[f64]> {
        Ok(&self.policy[self.position(uid)?])
    }

    pub fn reference_logits(&self, uid: Uid) -> Result<&[f64]> {
        Ok(&self.reference[self.position(uid)?])
    }

    pub fn behavior_logits(&self, uid: Uid) -> Result<&[f64]> {
        Ok(&self.behavior[self.position(uid)?])
    }

    /// Overwrites a prompt's policy logits (test and oracle hook).
    pub fn set_policy_logits(&mut self, uid: Uid, logits: &[f64]) -> Result<()> {
        let i = self.position(uid)?;
        if logits.len() != self.answer_count || logits.iter().any(|v| !v.is_finite()) {
            return Err(argument("logits must be finite with one entry per answer"));
        }
        self.policy[i].copy_from_slice(logits);
        Ok(())
    }

    pub fn policy_probs(&self, uid: Uid) -> Result<Vec<f64>> {
        Ok(softmax(self.policy_logits(uid)?))
    }

    /// Exact probability that one sampled answer is correct under the current policy.
    pub fn pass_probability(&self, uid: Uid) -> Result<f64> {
        let i = self.position(uid)?;
        Ok(softmax(&self.policy[i])[self.prompts[i].correct_answer])
    }

    /// Exact pass@k under the current policy: `1 - (1 - p)^k`.
    pub fn exact_pass_at_k(&self, uid: Uid, k: u32) -> Result<f64> {
        let p = self.pass_probability(uid)?;
        Ok(1.0 - (1.0 - p).powi(k as i32))
    }

    pub fn reward_for(&self, uid: Uid, answer: usize) -> Result<f64> {
        let prompt = self.prompt(uid)?;
        Ok(if answer == prompt.correct_answer {
            self.params.reward_correct
        } else {
            self.params.reward_incorrect
        })
    }

    /// Samples `n` answers i.i.d. from the behavior snapshot and builds the rollout group.
    pub fn sample_rollout_group<R: Rng + ?Sized>(&self, uid: Uid, n: usize, rng: &mut R) -> Result<RolloutGroup> {
        if n == 0 {
            return Err(argument("rollout group size must be at least 1"));
        }
        let i = self.position(uid)?;
        let probs = softmax(&self.behavior[i]);
        let answers: Vec<usize> = (0..n).map(|_| sample_categorical(&probs, rng)).collect();
        self.group_from_answers(uid, answers)
    }

    /// Builds a rollout group from explicit answers (rewards, advantages and losses filled in).
    pub fn group_from_answers(&self, uid: Uid, answers: Vec<usize>) -> Result<RolloutGroup> {
        if answers.is_empty() {
            return Err(argument("rollout group size must be at least 1"));
        }
        let i = self.position(uid)?;
        if let Some(a) = answers.iter().find(|&&a| a >= self.answer_count) {
            return Err(argument(format!("answer {a} outside the answer space")));
        }
        let correct = self.prompts[i].correct_answer;
        let rewards: Vec<f64> = answers
            .iter()
            .map(|&a| {
                if a == correct {
                    self.params.reward_correct
                } else {
                    self.params.reward_incorrect
                }
            })
            .collect();
        let advantages = group_advantages(&rewards, self.params.advantage_epsilon, self.params.advantage_clip);
        let mut group = RolloutGroup {
            prompt_uid: uid,
            sampled_answers: answers,
            rewards,
            advantages,
            per_rollout_losses: Vec::new(),
            prompt_loss: 0.0,
        };
        self.evaluate_losses(&mut group)?;
        Ok(group)
    }

    /// Recomputes the group's per-rollout and prompt losses at the current policy.
    pub fn evaluate_losses(&self, group: &mut RolloutGroup) -> Result<()> {
        let losses = self.per_rollout_losses(group)?;
        group.prompt_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        group.per_rollout_losses = losses;
        Ok(())
    }

    /// `-min(rho A, clip(rho) A) + beta KL(pi || pi_ref)` for every rollout.
    pub fn per_rollout_losses(&self, group: &RolloutGroup) -> Result<Vec<f64>> {
        let i = self.position(group.prompt_uid)?;
        let pi = softmax(&self.policy[i]);
        let old = softmax(&self.behavior[i]);
        let kl = self.params.kl_coefficient * kl_divergence(&pi, &softmax(&self.reference[i]));
        let (lo, hi) = (1.0 - self.params.clip_low, 1.0 + self.params.clip_high);
        group
            .sampled_answers
            .iter()
            .zip(&group.advantages)
            .map(|(&a, &adv)| {
                let ratio = pi[a] / old[a];
                if !ratio.is_finite() {
                    return Err(GdroError::Numerical(format!(
                        "non-finite importance ratio for answer {a} of prompt {}",
                        group.prompt_uid
                    )));
                }
                let surrogate = (ratio * adv).min(ratio.clamp(lo, hi) * adv);
                Ok(-surrogate + kl)
            })
            .collect()
    }

    /// Mean of the per-rollout losses at the current policy.
    pub fn prompt_loss(&self, group: &RolloutGroup) -> Result<f64> {
        let losses = self.per_rollout_losses(group)?;
        Ok(losses.iter().sum::<f64>() / losses.len() as f64)
    }

    /// Gradient of the advantage-weighted clipped surrogate part of the prompt loss.
    pub fn surrogate_gradient(&self, group: &RolloutGroup, weight: f64) -> Result<Vec<f64>> {
        let i = self.position(group.prompt_uid)?;
        let pi = softmax(&self.policy[i]);
        let old = softmax(&self.behavior[i]);
        let (lo, hi) = (1.0 - self.params.clip_low, 1.0 + self.params.clip_high);
        let n = group.len() as f64;
        let mut grad = vec![0.0; self.answer_count];
        for (&a, &adv) in group.sampled_answers.iter().zip(&group.advantages) {
            let adv = weight * adv;
            let ratio = pi[a] / old[a];
            if !ratio.is_finite() {
                return Err(GdroError::Numerical(format!(
                    "non-finite importance ratio for answer {a} of prompt {}",
                    group.prompt_uid
                )));
            }
            // The clipped branch is flat in theta.
            let clipped = (adv > 0.0 && ratio > hi) || (adv < 0.0 && ratio < lo);
            if clipped || adv == 0.0 {
                continue;
            }
            // d rho / d theta_k = rho (1[k = a] - pi_k)
            let scale = -adv * ratio / n;
            for (k, g) in grad.iter_mut().enumerate() {
                let indicator = if k == a { 1.0 } else { 0.0 };
                *g += scale * (indicator - pi[k]);
            }
        }
        Ok(grad)
    }

    /// Gradient of `beta KL(pi_theta || pi_ref)` with respect to the prompt's logits.
    pub fn kl_gradient(&self, uid: Uid) -> Result<Vec<f64>> {
        let i = self.position(uid)?;
        let pi = softmax(&self.policy[i]);
        let reference = softmax(&self.reference[i]);
        let kl = kl_divergence(&pi, &reference);
        let beta = self.params.kl_coefficient;
        Ok(pi
            .iter()
            .zip(&reference)
            .map(|(&p, &r)| beta * p * ((p / r).ln() - kl))
            .collect())
    }

    /// Gradient of the prompt loss with advantages scaled by `weight`.
    pub fn prompt_gradient(&self, group: &RolloutGroup, weight: f64) -> Result<Vec<f64>> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(argument("advantage weight must be finite and nonnegative"));
        }
        let mut grad = self.surrogate_gradient(group, weight)?;
        for (g, k) in grad.iter_mut().zip(self.kl_gradient(group.prompt_uid)?) {
            *g += k;
        }
        Ok(grad)
    }

    /// Steps each listed prompt's logits by `-learning_rate * gradient`.
    ///
    /// All gradients are validated before any parameter changes.
    pub fn apply_update(&mut self, gradients: &[(Uid, Vec<f64>)]) -> Result<()> {
        let mut positions = Vec::with_capacity(gradients.len());
        for (uid, g) in gradients {
            if g.len() != self.answer_count {
                return Err(argument(format!("gradient for {uid} has wrong dimension")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(GdroError::Numerical(format!("non-finite gradient for prompt {uid}")));
            }
            positions.push(self.position(*uid)?);
        }
        let lr = self.params.learning_rate;
        for (&i, (_, g)) in positions.iter().zip(gradients) {
            for (theta, gk) in self.policy[i].iter_mut().zip(g) {
                *theta -= lr * gk;
            }
        }
        Ok(())
    }

    /// Copies the current policy into the behavior snapshot used for rollouts.
    pub fn refresh_behavior(&mut self) {
        self.behavior.clone_from(&self.policy);
    }

    /// Serializes the population as `uid,correct_answer,latent_difficulty,A` lines.
    pub fn population_text(&self) -> String {
        population_to_text(&self.prompts, self.answer_count)
    }
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Population generator: correct answers uniform, difficulties `offset + LogNormal(mu, sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub size: usize,
    pub answer_count: usize,
    pub difficulty_offset: f64,
    pub difficulty_log_mean: f64,
    pub difficulty_log_std: f64,
}

impl PopulationSpec {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<SyntheticPrompt>> {
        if self.answer_count < 2 {
            return Err(argument("answer_count must be at least 2"));
        }
        let spread = LogNormal::new(self.difficulty_log_mean, self.difficulty_log_std)
            .map_err(|e| argument(format!("difficulty distribution: {e}")))?;
        Ok((0..self.size)
            .map(|i| SyntheticPrompt {
                uid: Uid(i as u64),
                correct_answer: rng.random_range(0..self.answer_count),
                latent_difficulty: self.difficulty_offset + spread.sample(rng),
            })
            .collect())
    }
}

pub fn population_to_text(prompts: &[SyntheticPrompt], answer_count: usize) -> String {
    let mut out = String::new();
    for p in prompts {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.uid, p.correct_answer, p.latent_difficulty, answer_count
        ));
    }
    out
}

/// Parses `uid,correct_answer,latent_difficulty,A` lines; blank lines and `#` comments are skipped.
pub fn population_from_text(text: &str) -> Result<(Vec<SyntheticPrompt>, usize)> {
    let mut prompts = Vec::new();
    let mut answer_count = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| GdroError::Parse { line: lineno + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let uid = parse_field::<u64>(fields[0], "uid").map_err(bad)?;
        let correct = parse_field::<usize>(fields[1], "correct_answer").map_err(bad)?;
        let difficulty = parse_field::<f64>(fields[2], "latent_difficulty").map_err(bad)?;
        let a = parse_field::<usize>(fields[3], "A").map_err(bad)?;
        match answer_count {
            None => answer_count = Some(a),
            Some(prev) if prev != a => {
                return Err(bad(format!("answer count {a} differs from earlier {prev}")));
            }
            _ => {}
        }
        if correct >= a {
            return Err(bad(format!("correct answer {correct} outside [0, {a})")));
        }
        prompts.push(SyntheticPrompt {
            uid: Uid(uid),
            correct_answer: correct,
            latent_difficulty: difficulty,
        });
    }
    let answer_count = answer_count.ok_or(GdroError::Parse {
        line: 0,
        message: "population is empty".into(),
    })?;
    Ok((prompts, answer_count))
}

fn parse_field<T: FromStr>(raw: &str, name: &str) -> std::result::Result<T, String> {
    raw.parse::<T>().map_err(|_| format!("cannot parse {name} from {raw:?}"))
}
