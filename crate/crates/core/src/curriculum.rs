//! Difficulty curriculum: a Gaussian window slides across the level axis as
//! training progresses, so batches drift smoothly from easy to hard.
//!
//! The window center follows `x_t = (t/T)^beta * (K-1)` and level `k` gets
//! weight `exp(-(x_t - mu_k)^2 / (2 sigma^2))`, normalized over the levels
//! whose pools are non-empty. A `Uniform` mode weights pools by size
//! instead (every scenario equally likely), which is what the no-curriculum
//! ablation and the baseline objectives use.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::difficulty::{DifficultyLabel, TaggedDataset, TaggedScenario};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// How batch-level proportions evolve over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    /// Sliding Gaussian window over the level axis.
    Gaussian,
    /// Size-weighted pools: uniform over scenarios, constant in `t`.
    Uniform,
}

/// Scheduler settings. Level centers default to `mu_k = k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Number of difficulty levels `K`.
    pub levels: usize,
    /// Total training steps `T`.
    pub total_steps: usize,
    pub sigma: f64,
    pub beta: f64,
    pub mu: Vec<f64>,
    pub mode: CurriculumMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            levels: 3,
            total_steps: 300,
            sigma: 0.5,
            beta: 0.5,
            mu: vec![0.0, 1.0, 2.0],
            mode: CurriculumMode::Gaussian,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config("scheduler needs at least 2 levels".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("scheduler total_steps must be positive".into()));
        }
        if !(self.sigma > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Config("scheduler sigma and beta must be positive".into()));
        }
        if self.mu.len() != self.levels {
            return Err(Error::Config(format!(
                "scheduler mu has {} entries for {} levels",
                self.mu.len(),
                self.levels
            )));
        }
        Ok(())
    }
}

/// Window center at (possibly fractional) step `t`.
pub fn sampling_position(t: f64, config: &SchedulerConfig) -> f64 {
    let frac = (t / config.total_steps as f64).clamp(0.0, 1.0);
    frac.powf(config.beta) * (config.levels - 1) as f64
}

/// Raw Gaussian weights and their normalization at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights {
    pub weights: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn level_weights(t: f64, config: &SchedulerConfig) -> LevelWeights {
    let x = sampling_position(t, config);
    let weights: Vec<f64> = config
        .mu
        .iter()
        .map(|&mu| (-(x - mu).powi(2) / (2.0 * config.sigma * config.sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|&w| w / total).collect();
    LevelWeights { weights, probs }
}

struct LevelPool<'a> {
    items: Vec<&'a TaggedScenario>,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> LevelPool<'a> {
    fn new(items: Vec<&'a TaggedScenario>) -> Self {
        let order = (0..items.len()).collect();
        LevelPool { items, order, cursor: 0 }
    }

    /// Without-replacement draw within the pool's current epoch; reshuffles
    /// and starts a new epoch when exhausted.
    fn next(&mut self, rng: &mut ChaCha8Rng) -> &'a TaggedScenario {
        if self.cursor == 0 {
            self.order.shuffle(rng);
        }
        let item = self.items[self.order[self.cursor]];
        self.cursor = (self.cursor + 1) % self.items.len();
        item
    }
}

/// Stateful batch sampler over the tagged pools. Pool epochs persist across
/// steps, so a scenario repeats only after its whole level has been used.
pub struct CurriculumSampler<'a> {
    pools: Vec<LevelPool<'a>>,
    config: SchedulerConfig,
    rng: ChaCha8Rng,
}

impl<'a> CurriculumSampler<'a> {
    pub fn new(tagged: &'a TaggedDataset, config: SchedulerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.levels != DifficultyLabel::ALL.len() {
            return Err(Error::Config(
                "sampling requires exactly the three tagged difficulty levels".into(),
            ));
        }
        if tagged.is_empty() {
            return Err(Error::Config("all difficulty pools are empty".into()));
        }
        let pools = DifficultyLabel::ALL
            .into_iter()
            .map(|label| LevelPool::new(tagged.pool(label).iter().collect()))
            .collect();
        Ok(CurriculumSampler { pools, config, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Level probabilities at step `t` after zeroing empty pools and
    /// renormalizing (or size-weighting, in uniform mode).
    pub fn effective_probs(&self, t: usize) -> Vec<f64> {
        let mut probs: Vec<f64> = match self.config.mode {
            CurriculumMode::Gaussian => level_weights(t as f64, &self.config)
                .weights
                .iter()
                .zip(&self.pools)
                .map(|(&w, pool)| if pool.items.is_empty() { 0.0 } else { w })
                .collect(),
            CurriculumMode::Uniform => {
                self.pools.iter().map(|p| p.items.len() as f64).collect()
            }
        };
        let total: f64 = probs.iter().sum();
        debug_assert!(total > 0.0, "sampler constructed with all pools empty");
        for p in probs.iter_mut() {
            *p /= total;
        }
        probs
    }

    /// Draw one scenario: pick a level from the step's distribution, then
    /// take the level's next epoch item.
    pub fn draw(&mut self, t: usize) -> (DifficultyLabel, &'a Scenario) {
        let probs = self.effective_probs(t);
        let u: f64 = self.rng.gen();
        // Default to the last non-empty level so rounding at u ~ 1 cannot
        // land on an empty pool.
        let mut level = probs.iter().rposition(|&p| p > 0.0).expect("a pool is non-empty");
        let mut acc = 0.0;
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if p > 0.0 && u < acc {
                level = k;
                break;
            }
        }
        let label = DifficultyLabel::ALL[level];
        let item = self.pools[level].next(&mut self.rng);
        (label, &item.scenario)
    }

    pub fn sample_batch(&mut self, t: usize, batch_size: usize) -> Vec<(DifficultyLabel, &'a Scenario)> {
        (0..batch_size).map(|_| self.draw(t)).collect()
    }
}
