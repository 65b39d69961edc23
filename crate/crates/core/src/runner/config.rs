//! Flat key-value run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binning::BinPartition;
use crate::budgeter::{BudgeterConfig, DpWeighting};
use crate::error::{GdroError, Result};
use crate::grpo::{GrpoParams, PopulationSpec};
use crate::prompt_adversary::PromptAdversaryConfig;

/// Learner step size of the standard synthetic setup. Slow enough that bin-level
/// variability stays roughly stationary over a 600-step run.
pub const STANDARD_LEARNING_RATE: f64 = 0.1;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GDRO_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BaselineGrpo,
    PromptGdro,
    RolloutGdro,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BaselineGrpo => "baseline_grpo",
            Mode::PromptGdro => "prompt_gdro",
            Mode::RolloutGdro => "rollout_gdro",
        }
    }
}

/// Utility signal fed to the rollout bandits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmFeedback {
    /// `J_b(n) = -v_b / n` with `v_b` the mean within-group reward variance of the bin.
    VarianceProxy,
    /// `J_b(n) = -(mean prompt loss of the bin)`.
    PromptLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub steps: usize,
    pub population_size: usize,
    pub batch_size: usize,
    pub answer_count: usize,
    pub difficulty_offset: f64,
    pub difficulty_log_mean: f64,
    pub difficulty_log_std: f64,

    /// Interior bin edges; 0 and 1 are implied.
    pub bin_edges: Vec<f64>,
    pub window: usize,
    pub hysteresis: f64,
    pub pass_k: usize,
    pub rollouts_per_prompt: usize,

    pub score_ema: f64,
    pub score_learning_rate: f64,
    pub score_clip: f64,
    pub exploration: f64,
    pub weight_cap: f64,
    pub share_floor: f64,
    pub normalize_by_share: bool,

    pub arm_min: usize,
    pub arm_max: usize,
    pub mean_budget: f64,
    pub dual_rate: f64,
    pub dual_cap: f64,
    pub arm_ema: f64,
    pub arm_learning_rate: f64,
    pub arm_exploration: f64,
    pub dp_weighting: DpWeighting,
    pub arm_feedback: ArmFeedback,

    pub kl_coefficient: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub advantage_epsilon: f64,
    pub advantage_clip: f64,
    pub learning_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grpo = GrpoParams::default();
        let adv = PromptAdversaryConfig::default();
        let bud = BudgeterConfig::default();
        Self {
            seed: 0,
            mode: Mode::PromptGdro,
            steps: 600,
            population_size: 2000,
            batch_size: 256,
            answer_count: 8,
            difficulty_offset: -1.0,
            difficulty_log_mean: 1.0,
            difficulty_log_std: 0.8,
            bin_edges: (1..10).map(|i| i as f64 / 10.0).collect(),
            window: 8,
            hysteresis: 0.02,
            pass_k: 8,
            rollouts_per_prompt: 4,
            score_ema: adv.ema_decay,
            score_learning_rate: adv.learning_rate,
            score_clip: adv.score_clip,
            exploration: adv.exploration,
            weight_cap: adv.weight_cap,
            share_floor: adv.share_floor,
            normalize_by_share: adv.normalize_by_share,
            arm_min: bud.n_min,
            arm_max: bud.n_max,
            mean_budget: bud.mean_budget,
            dual_rate: bud.dual_rate,
            dual_cap: bud.dual_cap,
            arm_ema: bud.arm_ema,
            arm_learning_rate: bud.arm_learning_rate,
            arm_exploration: bud.arm_exploration,
            dp_weighting: bud.weighting,
            arm_feedback: ArmFeedback::VarianceProxy,
            kl_coefficient: grpo.kl_coefficient,
            clip_low: grpo.clip_low,
            clip_high: grpo.clip_high,
            advantage_epsilon: grpo.advantage_epsilon,
            advantage_clip: grpo.advantage_clip,
            learning_rate: STANDARD_LEARNING_RATE,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| GdroError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, then applies the seed override from the environment if set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            config.seed = seed
                .trim()
                .parse()
                .map_err(|_| GdroError::Config(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn grpo_params(&self) -> GrpoParams {
        GrpoParams {
            kl_coefficient: self.kl_coefficient,
            clip_low: self.clip_low,
            clip_high: self.clip_high,
            advantage_epsilon: self.advantage_epsilon,
            advantage_clip: self.advantage_clip,
            learning_rate: self.learning_rate,
            ..GrpoParams::default()
        }
    }

    pub fn adversary_config(&self) -> PromptAdversaryConfig {
        PromptAdversaryConfig {
            ema_decay: self.score_ema,
            learning_rate: self.score_learning_rate,
            score_clip: self.score_clip,
            exploration: self.exploration,
            weight_cap: self.weight_cap,
            share_floor: self.share_floor,
            normalize_by_share: self.normalize_by_share,
        }
    }

    pub fn budgeter_config(&self) -> BudgeterConfig {
        BudgeterConfig {
            n_min: self.arm_min,
            n_max: self.arm_max,
            mean_budget: self.mean_budget,
            dual_rate: self.dual_rate,
            dual_cap: self.dual_cap,
            initial_dual: 0.0,
            arm_ema: self.arm_ema,
            arm_learning_rate: self.arm_learning_rate,
            arm_exploration: self.arm_exploration,
            weighting: self.dp_weighting,
        }
    }

    pub fn population_spec(&self) -> PopulationSpec {
        PopulationSpec {
            size: self.population_size,
            answer_count: self.answer_count,
            difficulty_offset: self.difficulty_offset,
            difficulty_log_mean: self.difficulty_log_mean,
            difficulty_log_std: self.difficulty_log_std,
        }
    }

    pub fn partition(&self) -> Result<BinPartition> {
        BinPartition::from_interior(&self.bin_edges)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GdroError::Config(m.to_string()));
        if self.population_size == 0 || self.batch_size == 0 {
            return bad("population_size and batch_size must be positive");
        }
        if self.batch_size > self.population_size {
            return bad("batch_size cannot exceed population_size");
        }
        if self.answer_count < 2 {
            return bad("answer_count must be at least 2");
        }
        if !(self.difficulty_log_std > 0.0) || !self.difficulty_offset.is_finite() || !self.difficulty_log_mean.is_finite() {
            return bad("difficulty spread needs finite offset/mean and positive std");
        }
        if self.window == 0 || self.pass_k == 0 || self.rollouts_per_prompt == 0 {
            return bad("window, pass_k and rollouts_per_prompt must be positive");
        }
        let partition = self.partition().map_err(|e| GdroError::Config(e.to_string()))?;
        if !(self.hysteresis >= 0.0 && self.hysteresis < partition.min_width()) {
            return bad("hysteresis must lie in [0, min bin width)");
        }
        let to_config = |e: GdroError| GdroError::Config(e.to_string());
        self.grpo_params().validate().map_err(to_config)?;
        self.adversary_config().validate().map_err(to_config)?;
        let budgeter = self.budgeter_config();
        budgeter.validate().map_err(to_config)?;
        if self.mode == Mode::RolloutGdro {
            let t = self.mean_budget * self.batch_size as f64;
            if (t - t.round()).abs() > 1e-9 {
                return bad("mean_budget * batch_size must be an integer in rollout mode");
            }
            if self.mean_budget < self.arm_min as f64 || self.mean_budget > self.arm_max as f64 {
                return bad("mean_budget must lie within [arm_min, arm_max]");
            }
        }
        Ok(())
    }
}
