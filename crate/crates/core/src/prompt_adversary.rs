//! Prompt-level adversary over difficulty bins.
//!
//! Scores track the intensive (mean) loss of each bin with an EMA, optionally divided by
//! the bin's realized batch share. Weights are `exp(eta * clip(S, -C, C))`; the bin
//! distribution mixes the normalized weights with a uniform floor, and each prompt's
//! advantages are multiplied by its bin's capped raw weight.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::numeric::is_distribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAdversaryConfig {
    pub ema_decay: f64,
    pub learning_rate: f64,
    pub score_clip: f64,
    pub exploration: f64,
    pub weight_cap: f64,
    pub share_floor: f64,
    pub normalize_by_share: bool,
}

impl Default for PromptAdversaryConfig {
    fn default() -> Self {
        Self {
            ema_decay: 0.12,
            learning_rate: 0.65,
            score_clip: 10.0,
            exploration: 0.01,
            weight_cap: 15.0,
            share_floor: 0.01,
            normalize_by_share: true,
        }
    }
}

impl PromptAdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ema_decay > 0.0 && self.ema_decay <= 1.0) {
            return Err(argument("prompt adversary ema_decay must lie in (0, 1]"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(argument("prompt adversary learning_rate must be finite and nonnegative"));
        }
        if !(self.score_clip > 0.0 && self.score_clip.is_finite()) {
            return Err(argument("score_clip must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(argument("exploration must lie in [0, 1]"));
        }
        if !(self.weight_cap > 0.0) {
            return Err(argument("weight_cap must be positive"));
        }
        if !(self.share_floor > 0.0 && self.share_floor <= 1.0) {
            return Err(argument("share_floor must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAdversaryState {
    config: PromptAdversaryConfig,
    scores: Vec<f64>,
}

/// Outcome of one score update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreUpdate {
    pub updated: Vec<usize>,
    pub rejected: Vec<usize>,
}

impl PromptAdversaryState {
    /// All scores start at zero, so the initial distribution is uniform.
    pub fn new(bin_count: usize, config: PromptAdversaryConfig) -> Result<Self> {
        config.validate()?;
        if bin_count == 0 {
            return Err(argument("bin count must be positive"));
        }
        Ok(Self {
            config,
            scores: vec![0.0; bin_count],
        })
    }

    pub fn with_scores(scores: Vec<f64>, config: PromptAdversaryConfig) -> Result<Self> {
        let mut state = Self::new(scores.len(), config)?;
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(argument("scores must be finite"));
        }
        state.scores = scores
            .into_iter()
            .map(|s| s.clamp(-state.config.score_clip, state.config.score_clip))
            .collect();
        Ok(state)
    }

    pub fn config(&self) -> &PromptAdversaryConfig {
        &self.config
    }

    pub fn bin_count(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// EMA update of the per-bin scores from this step's bin mean losses.
    ///
    /// Bins without data keep their score. Non-finite losses are rejected per bin.
    pub fn update_scores(&mut self, bin_mean_losses: &[Option<f64>], bin_shares: &[f64]) -> Result<ScoreUpdate> {
        let b = self.bin_count();
        if bin_mean_losses.len() != b || bin_shares.len() != b {
            return Err(argument("loss and share vectors must have one entry per bin"));
        }
        if !is_distribution(bin_shares, 1e-9) {
            return Err(argument("bin shares must form a distribution"));
        }
        let cfg = &self.config;
        let mut report = ScoreUpdate::default();
        for (bin, (loss, &share)) in bin_mean_losses.iter().zip(bin_shares).enumerate() {
            let Some(loss) = *loss else { continue };
            if !loss.is_finite() {
                warn!("rejecting non-finite mean loss {loss} for bin {bin}");
                report.rejected.push(bin);
                continue;
            }
            let signal = if cfg.normalize_by_share {
                loss / share.max(cfg.share_floor)
            } else {
                loss
            };
            let next = (1.0 - cfg.ema_decay) * self.scores[bin] + cfg.ema_decay * signal;
            // Stored scores stay inside the clip range.
            self.scores[bin] = next.clamp(-cfg.score_clip, cfg.score_clip);
            report.updated.push(bin);
        }
        Ok(report)
    }

    /// Raw weights `exp(eta * clip(S, -C, C))`.
    pub fn weights(&self) -> Vec<f64> {
        let c = self.config.score_clip;
        self.scores
            .iter()
            .map(|s| (self.config.learning_rate * s.clamp(-c, c)).exp())
            .collect()
    }

    /// Weight-only distribution `w / sum(w)`, before exploration mixing.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.weights();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `q(b) = (1 - gamma) w(b) / sum(w) + gamma / B`.
    pub fn bin_distribution(&self) -> Vec<f64> {
        let gamma = self.config.exploration;
        let floor = gamma / self.bin_count() as f64;
        self.normalized_weights()
            .into_iter()
            .map(|p| (1.0 - gamma) * p + floor)
            .collect()
    }

    /// Capped raw weight `min(w(bin), w_max)` applied to the bin's advantages.
    pub fn advantage_multiplier(&self, bin: usize) -> Result<f64> {
        if bin >= self.bin_count() {
            return Err(argument(format!("bin {bin} out of range")));
        }
        let c = self.config.score_clip;
        let w = (self.config.learning_rate * self.scores[bin].clamp(-c, c)).exp();
        Ok(w.min(self.config.weight_cap))
    }

    pub fn multipliers(&self) -> Vec<f64> {
        (0..self.bin_count())
            .map(|b| self.advantage_multiplier(b).expect("bin in range"))
            .collect()
    }
}

/// One row of the per-step adversary CSV (`step,bin,score,weight,q,share,mean_loss`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAdversaryRow {
    pub step: usize,
    pub bin: usize,
    pub score: f64,
    pub weight: f64,
    pub q: f64,
    pub share: f64,
    pub mean_loss: Option<f64>,
}

pub const PROMPT_ADVERSARY_CSV_HEADER: &str = "step,bin,score,weight,q,share,mean_loss";

impl PromptAdversaryRow {
    pub fn csv_line(&self) -> String {
        let loss = self.mean_loss.map(|l| l.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.step, self.bin, self.score, self.weight, self.q, self.share, loss
        )
    }
}
