//! One TOML file drives the whole pipeline: a section per stage, every
//! field optional (falling back to the documented default), unknown keys
//! rejected. `parse(emit(c)) == c` for any config `c`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::SchedulerConfig;
use crate::error::{Error, Result};
use crate::optimizer::{ObjectiveConfig, ObjectiveVariant};
use crate::rewards::RewardWeights;
use crate::scenario::GenConfig;
use crate::sft::SftConfig;

/// Supervised/RL pool split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Fraction of each question type reserved for supervised fine-tuning.
    pub sft_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { sft_fraction: 0.2, seed: 13 }
    }
}

/// Policy shape settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Maximum response length in tokens.
    pub max_len: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { max_len: 24 }
    }
}

/// Confidence thresholds for the difficulty rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DifficultyConfig {
    /// Correct and at least this confident: easy.
    pub th1: f64,
    /// Wrong and at least this confident: hard.
    pub th2: f64,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        DifficultyConfig { th1: 0.6, th2: 0.4 }
    }
}

/// Held-out evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Held-out scenarios, generated with the scenario settings but this
    /// seed.
    pub n_eval: usize,
    pub seed: u64,
    /// Steps between held-out evaluations during RL (0 disables them).
    pub interval: usize,
    /// Rolling-mean window for smoothed curves in summaries and plot data.
    pub smoothing_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_eval: 200, seed: 101, interval: 25, smoothing_window: 50 }
    }
}

/// Multi-seed sweep settings for `compare` and `ablation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// RL seeds; earlier pipeline stages are shared across them.
    pub seeds: Vec<u64>,
    /// Variants compared by the `compare` subcommand.
    pub variants: Vec<ObjectiveVariant>,
    pub out_dir: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            seeds: vec![1, 2, 3, 4, 5],
            variants: vec![ObjectiveVariant::Thinkdrive, ObjectiveVariant::Grpo],
            out_dir: "runs".into(),
        }
    }
}

/// Everything the pipeline reads, grouped by stage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: GenConfig,
    pub split: SplitConfig,
    pub policy: PolicyConfig,
    pub rewards: RewardWeights,
    pub sft: SftConfig,
    pub difficulty: DifficultyConfig,
    pub scheduler: SchedulerConfig,
    pub objective: ObjectiveConfig,
    pub evaluation: EvalConfig,
    pub experiment: SweepConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !(self.split.sft_fraction > 0.0 && self.split.sft_fraction < 1.0) {
            return Err(Error::Config("split.sft_fraction must lie strictly in (0, 1)".into()));
        }
        if self.policy.max_len < 4 {
            return Err(Error::Config(
                "policy.max_len must be at least 4 (the shortest well-formed response)".into(),
            ));
        }
        if !(self.rewards.task_weight > 0.0 && self.rewards.format_weight >= 0.0) {
            return Err(Error::Config(
                "rewards.task_weight must be positive and rewards.format_weight non-negative"
                    .into(),
            ));
        }
        self.sft.validate()?;
        for (key, value) in [("th1", self.difficulty.th1), ("th2", self.difficulty.th2)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("difficulty.{key} must lie in [0, 1]")));
            }
        }
        self.scheduler.validate()?;
        self.objective.validate()?;
        if self.scheduler.total_steps != self.objective.steps {
            return Err(Error::Config(format!(
                "scheduler.total_steps ({}) must equal objective.steps ({}) so the curriculum \
                 spans the whole run",
                self.scheduler.total_steps, self.objective.steps
            )));
        }
        if self.evaluation.n_eval == 0 {
            return Err(Error::Config("evaluation.n_eval must be positive".into()));
        }
        if self.evaluation.smoothing_window == 0 {
            return Err(Error::Config("evaluation.smoothing_window must be positive".into()));
        }
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must not be empty".into()));
        }
        if self.experiment.variants.is_empty() {
            return Err(Error::Config("experiment.variants must not be empty".into()));
        }
        if self.experiment.out_dir.is_empty() {
            return Err(Error::Config("experiment.out_dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn emit(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
