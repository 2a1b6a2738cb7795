//! The RL fine-tuning core: rollout groups, dynamic sampling, cluster
//! entropy over decision outcomes, entropy-modulated group-relative
//! advantages, clipped surrogate objectives, and the training loop.
//!
//! Three surrogate families share one entry point:
//!
//! * geometric — per-token log-ratios are capped and averaged, the
//!   exponential of that mean multiplies the advantage (`thinkdrive`,
//!   `gmpo`);
//! * token-mean — the classic PPO min over per-token ratios, averaged over
//!   a rollout (`grpo`, `dapo`);
//! * sequence-ratio — one length-normalized ratio per rollout, clipped as a
//!   whole (`gspo`).
//!
//! All gradients are exact subgradients: tokens whose clipped branch is
//! selected contribute nothing, everything else flows through the analytic
//! score-function gradient of the policy.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::{CurriculumSampler, SchedulerConfig};
use crate::difficulty::{DifficultyLabel, TaggedDataset};
use crate::error::{Error, Result};
use crate::policy::{accumulate_score_grad, PolicyParams, PolicySnapshot, PolicySpace, Rollout};
use crate::rewards::{compute_reward, ParsedResponse, RewardBreakdown, RewardWeights};
use crate::runlog::{EvalRecord, LogRecord, StepRecord};
use crate::scenario::Scenario;
use crate::seeds;
use crate::sft::evaluate;

/// Which objective shapes the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveVariant {
    Thinkdrive,
    Grpo,
    Dapo,
    Gspo,
    Gmpo,
}

impl ObjectiveVariant {
    pub const ALL: [ObjectiveVariant; 5] = [
        ObjectiveVariant::Thinkdrive,
        ObjectiveVariant::Grpo,
        ObjectiveVariant::Dapo,
        ObjectiveVariant::Gspo,
        ObjectiveVariant::Gmpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveVariant::Thinkdrive => "thinkdrive",
            ObjectiveVariant::Grpo => "grpo",
            ObjectiveVariant::Dapo => "dapo",
            ObjectiveVariant::Gspo => "gspo",
            ObjectiveVariant::Gmpo => "gmpo",
        }
    }

    /// Only the headline variant scales advantages by cluster entropy.
    pub fn modulates(self) -> bool {
        matches!(self, ObjectiveVariant::Thinkdrive)
    }
}

impl fmt::Display for ObjectiveVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective variant '{s}'")))
    }
}

/// RL optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub variant: ObjectiveVariant,
    /// Lower clip margin.
    pub eps_low: f64,
    /// Upper clip margin; larger than `eps_low` gives clip-higher behavior.
    pub eps_high: f64,
    /// Geometric variants only: cap log-ratios toward the advantage's sign
    /// (min for positive, max for negative) instead of the literal min.
    pub sign_aware_clip: bool,
    /// Discount; episodes are single-turn, so this is fixed at 1.
    pub gamma: f64,
    /// Reference-model KL coefficient; reserved, fixed at 0.
    pub kl_coef: f64,
    /// Discard groups whose rollouts are all correct or all wrong.
    pub dynamic_sampling: bool,
    /// Replacement-draw rounds after discarding violating groups.
    pub max_resample: usize,
    /// Added to the reward standard deviation when normalizing advantages.
    pub std_epsilon: f64,
    /// Entropy-modulation coefficient.
    pub alpha: f64,
    pub learning_rate: f64,
    /// Total training steps.
    pub steps: usize,
    /// Rollouts per group.
    pub group_size: usize,
    /// Prompt groups per step.
    pub prompts_per_step: usize,
    /// Rollout sampling temperature; ratios and gradients use the same value.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            variant: ObjectiveVariant::Thinkdrive,
            eps_low: 0.2,
            eps_high: 0.28,
            sign_aware_clip: false,
            gamma: 1.0,
            kl_coef: 0.0,
            dynamic_sampling: true,
            max_resample: 3,
            std_epsilon: 1e-8,
            alpha: 1.5,
            learning_rate: 0.3,
            steps: 300,
            group_size: 8,
            prompts_per_step: 8,
            temperature: 1.0,
            seed: 23,
        }
    }
}

impl ObjectiveConfig {
    /// Baseline presets: each variant's published recipe, holding everything
    /// it does not prescribe at the shared defaults.
    pub fn for_variant(variant: ObjectiveVariant) -> Self {
        let mut config = ObjectiveConfig { variant, ..ObjectiveConfig::default() };
        match variant {
            ObjectiveVariant::Thinkdrive => {}
            ObjectiveVariant::Grpo => {
                config.eps_high = config.eps_low;
                config.dynamic_sampling = false;
            }
            ObjectiveVariant::Dapo => {}
            ObjectiveVariant::Gspo => {
                config.dynamic_sampling = false;
            }
            ObjectiveVariant::Gmpo => {
                config.sign_aware_clip = true;
                config.dynamic_sampling = false;
            }
        }
        config
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_low > 0.0 && self.eps_low < 1.0 && self.eps_high > 0.0 && self.eps_high < 1.0)
        {
            return Err(Error::Config("objective eps_low and eps_high must lie in (0, 1)".into()));
        }
        if self.gamma != 1.0 {
            return Err(Error::Config(
                "objective.gamma is fixed at 1.0 (episodes are single-turn)".into(),
            ));
        }
        if self.kl_coef != 0.0 {
            return Err(Error::Config(
                "objective.kl_coef is reserved and fixed at 0 (no reference model)".into(),
            ));
        }
        if self.group_size < 2 {
            return Err(Error::Config("objective.group_size must be at least 2".into()));
        }
        if self.prompts_per_step == 0 || self.steps == 0 {
            return Err(Error::Config(
                "objective.prompts_per_step and objective.steps must be positive".into(),
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("objective.temperature must be positive".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config("objective.alpha must be non-negative".into()));
        }
        if !(self.std_epsilon > 0.0) {
            return Err(Error::Config("objective.std_epsilon must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("objective.learning_rate must be non-negative".into()));
        }
        Ok(())
    }
}

/// One prompt's sampled rollouts with their rewards.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub scenario: Scenario,
    /// Difficulty pool the prompt was drawn from.
    pub level: DifficultyLabel,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<RewardBreakdown>,
    /// Rollouts whose parsed answer set equals the gold set.
    pub n_correct: usize,
}

/// Sample one group of rollouts from the frozen snapshot.
#[allow(clippy::too_many_arguments)]
pub fn collect_group(
    space: &PolicySpace,
    snapshot: &PolicySnapshot,
    current: &PolicyParams,
    scenario: &Scenario,
    level: DifficultyLabel,
    weights: &RewardWeights,
    config: &ObjectiveConfig,
    rng: &mut ChaCha8Rng,
) -> RolloutGroup {
    let mut rollouts = Vec::with_capacity(config.group_size);
    let mut rewards = Vec::with_capacity(config.group_size);
    let mut n_correct = 0;
    for _ in 0..config.group_size {
        // Each rollout gets its own derived stream so group determinism does
        // not depend on how many draws a sibling rollout consumed.
        let mut stream = ChaCha8Rng::seed_from_u64(rng.gen());
        let rollout =
            space.sample_rollout(snapshot, current, scenario, config.temperature, &mut stream);
        if rollout.parsed.answers == scenario.gold {
            n_correct += 1;
        }
        rewards.push(compute_reward(&rollout.parsed, scenario, weights));
        rollouts.push(rollout);
    }
    RolloutGroup { scenario: scenario.clone(), level, rollouts, rewards, n_correct }
}

/// A group carries learning signal only when its outcomes disagree.
pub fn passes_dynamic_sampling(group: &RolloutGroup) -> bool {
    group.n_correct > 0 && group.n_correct < group.rollouts.len()
}

/// Decision outcome of one rollout; malformed responses pool together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClusterKey {
    Malformed,
    Answers(BTreeSet<String>),
}

impl ClusterKey {
    pub fn of(parsed: &ParsedResponse) -> Self {
        if parsed.well_formed {
            ClusterKey::Answers(parsed.answers.clone())
        } else {
            ClusterKey::Malformed
        }
    }
}

/// Outcome-distribution entropy of a group and the advantage scale it
/// induces.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyStats {
    /// Normalized probability mass per decision outcome.
    pub clusters: BTreeMap<ClusterKey, f64>,
    pub entropy: f64,
    /// `ln(G)`: the entropy of G rollouts with distinct outcomes and equal
    /// mass.
    pub max_entropy: f64,
    /// `alpha * (1 - entropy / max_entropy)`.
    pub scale: f64,
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Cluster rollouts by parsed answer set and measure the entropy of the
/// cluster masses, where each rollout weighs in with its full-sequence
/// probability under the snapshot it was sampled from.
pub fn cluster_entropy(group: &RolloutGroup, alpha: f64) -> EntropyStats {
    let logps: Vec<f64> = group.rollouts.iter().map(|r| r.logp_old.iter().sum()).collect();
    let total = logsumexp(&logps);
    let mut members: BTreeMap<ClusterKey, Vec<f64>> = BTreeMap::new();
    for (rollout, &lp) in group.rollouts.iter().zip(&logps) {
        members.entry(ClusterKey::of(&rollout.parsed)).or_default().push(lp);
    }
    let clusters: BTreeMap<ClusterKey, f64> =
        members.into_iter().map(|(key, lps)| (key, (logsumexp(&lps) - total).exp())).collect();
    let entropy = -clusters
        .values()
        .filter(|&&mass| mass > 0.0)
        .map(|&mass| mass * mass.ln())
        .sum::<f64>();
    let max_entropy = (group.rollouts.len() as f64).ln();
    let scale =
        if max_entropy > 0.0 { alpha * (1.0 - entropy / max_entropy) } else { alpha };
    EntropyStats { clusters, entropy, max_entropy, scale }
}

/// Group-normalized advantages, before and after entropy modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub raw: Vec<f64>,
    pub modulated: Vec<f64>,
}

/// Standardize total rewards within the group (population std plus
/// `std_epsilon`), then scale by the entropy factor for variants that
/// modulate; baselines pass raw advantages through.
pub fn advantages(
    group: &RolloutGroup,
    stats: &EntropyStats,
    config: &ObjectiveConfig,
) -> AdvantageVector {
    let rewards: Vec<f64> = group.rewards.iter().map(|r| r.total).collect();
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + config.std_epsilon;
    let raw: Vec<f64> = rewards.iter().map(|r| (r - mean) / denom).collect();
    let scale = if config.variant.modulates() { stats.scale } else { 1.0 };
    let modulated = raw.iter().map(|a| a * scale).collect();
    AdvantageVector { raw, modulated }
}

enum SurrogateFamily {
    Geometric,
    TokenMean,
    SequenceRatio,
}

fn family(variant: ObjectiveVariant) -> SurrogateFamily {
    match variant {
        ObjectiveVariant::Thinkdrive | ObjectiveVariant::Gmpo => SurrogateFamily::Geometric,
        ObjectiveVariant::Grpo | ObjectiveVariant::Dapo => SurrogateFamily::TokenMean,
        ObjectiveVariant::Gspo => SurrogateFamily::SequenceRatio,
    }
}

/// Clipped-surrogate objective for one group and its exact gradient with
/// respect to the current parameters.
///
/// Per-token log-ratios are taken between a fresh teacher-forced pass under
/// `current` and the stored `logp_old`, both at the configured temperature.
pub fn surrogate(
    space: &PolicySpace,
    group: &RolloutGroup,
    adv: &AdvantageVector,
    current: &PolicyParams,
    config: &ObjectiveConfig,
) -> Result<(f64, Array2<f64>)> {
    let g = group.rollouts.len() as f64;
    let log_hi = (1.0 + config.eps_high).ln();
    let log_lo = (1.0 - config.eps_low).ln();
    let mut objective = 0.0;
    let mut grad = Array2::zeros(current.theta.dim());

    for (i, rollout) in group.rollouts.iter().enumerate() {
        if rollout.tokens.is_empty() {
            continue;
        }
        let a_hat = adv.modulated[i];
        let len = rollout.tokens.len() as f64;
        let pass = space.forward(current, &group.scenario, &rollout.tokens, config.temperature);
        let deltas: Vec<f64> =
            pass.logps.iter().zip(&rollout.logp_old).map(|(new, old)| new - old).collect();
        if deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::NumericGuard { rollout: i });
        }

        match family(config.variant) {
            SurrogateFamily::Geometric => {
                let mut mean_capped = 0.0;
                let mut active = Vec::with_capacity(deltas.len());
                for &d in &deltas {
                    let (capped, act) = if config.sign_aware_clip && a_hat < 0.0 {
                        (d.max(log_lo), d > log_lo)
                    } else {
                        (d.min(log_hi), d < log_hi)
                    };
                    mean_capped += capped / len;
                    active.push(act);
                }
                let factor = mean_capped.exp();
                objective += factor * a_hat / g;
                let coef = factor * a_hat / (g * len * config.temperature);
                for (t, &tok) in rollout.tokens.iter().enumerate() {
                    if active[t] && coef != 0.0 {
                        accumulate_score_grad(&mut grad, tok, &pass.probs[t], &pass.phis[t], coef);
                    }
                }
            }
            SurrogateFamily::TokenMean => {
                for (t, &d) in deltas.iter().enumerate() {
                    let ratio = d.exp();
                    let clipped = ratio.clamp(1.0 - config.eps_low, 1.0 + config.eps_high);
                    let unclipped = ratio * a_hat;
                    let alternative = clipped * a_hat;
                    if unclipped <= alternative {
                        objective += unclipped / (g * len);
                        let coef = a_hat * ratio / (g * len * config.temperature);
                        if coef != 0.0 {
                            accumulate_score_grad(
                                &mut grad,
                                rollout.tokens[t],
                                &pass.probs[t],
                                &pass.phis[t],
                                coef,
                            );
                        }
                    } else {
                        objective += alternative / (g * len);
                    }
                }
            }
            SurrogateFamily::SequenceRatio => {
                let seq_ratio = (deltas.iter().sum::<f64>() / len).exp();
                let clipped = seq_ratio.clamp(1.0 - config.eps_low, 1.0 + config.eps_high);
                let unclipped = seq_ratio * a_hat;
                let alternative = clipped * a_hat;
                if unclipped <= alternative {
                    objective += unclipped / g;
                    let coef = a_hat * seq_ratio / (g * len * config.temperature);
                    if coef != 0.0 {
                        for (t, &tok) in rollout.tokens.iter().enumerate() {
                            accumulate_score_grad(
                                &mut grad,
                                tok,
                                &pass.probs[t],
                                &pass.phis[t],
                                coef,
                            );
                        }
                    }
                } else {
                    objective += alternative / g;
                }
            }
        }
    }
    Ok((objective, grad))
}

/// Everything `train_rl` reads besides the evolving parameters.
pub struct TrainSetup<'a> {
    pub space: &'a PolicySpace,
    pub tagged: &'a TaggedDataset,
    pub weights: RewardWeights,
    pub objective: ObjectiveConfig,
    pub scheduler: SchedulerConfig,
    /// Held-out scenarios for periodic greedy evaluation.
    pub eval_data: &'a [Scenario],
    /// Evaluate every this many steps (0 disables periodic evaluation).
    pub eval_interval: usize,
    /// Base seed for the run's sampler and rollout streams.
    pub seed: u64,
}

/// Run the full RL loop: snapshot, sample a prompt batch from the
/// curriculum, collect groups (filtering and redrawing under dynamic
/// sampling), and ascend the surrogate gradient averaged over retained
/// groups. Returns the final parameters and the step/eval log.
pub fn train_rl(setup: &TrainSetup, init: &PolicyParams) -> Result<(PolicyParams, Vec<LogRecord>)> {
    let config = &setup.objective;
    config.validate()?;
    if !init.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            message: "initial parameters are not finite".into(),
        });
    }
    let mut sampler =
        CurriculumSampler::new(setup.tagged, setup.scheduler.clone(), seeds::derive(setup.seed, &[0]))?;
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(seeds::derive(setup.seed, &[1]));
    let mut params = init.clone();
    let mut records = Vec::new();

    let do_eval = setup.eval_interval > 0 && !setup.eval_data.is_empty();
    if do_eval {
        let metrics = evaluate(setup.space, &params, setup.eval_data)?;
        records.push(LogRecord::Eval(EvalRecord::new(0, &metrics)));
    }

    for t in 0..config.steps {
        let snapshot = PolicySnapshot::new(&params);
        let mut kept: Vec<RolloutGroup> = Vec::new();
        let mut discarded = 0;
        let mut all_rewards: Vec<f64> = Vec::new();
        for _round in 0..=config.max_resample {
            let want = config.prompts_per_step - kept.len();
            if want == 0 {
                break;
            }
            for (level, scenario) in sampler.sample_batch(t, want) {
                let group = collect_group(
                    setup.space,
                    &snapshot,
                    &params,
                    scenario,
                    level,
                    &setup.weights,
                    config,
                    &mut rollout_rng,
                );
                all_rewards.extend(group.rewards.iter().map(|r| r.total));
                if !config.dynamic_sampling || passes_dynamic_sampling(&group) {
                    kept.push(group);
                } else {
                    discarded += 1;
                }
            }
            if !config.dynamic_sampling {
                break;
            }
        }

        let mut grad = Array2::zeros(params.theta.dim());
        let mut entropy_sum = 0.0;
        let mut scale_sum = 0.0;
        let mut realized = [0usize; 3];
        let mut n_correct_min = None;
        let mut n_correct_max = None;
        for group in &kept {
            let stats = cluster_entropy(group, config.alpha);
            let adv = advantages(group, &stats, config);
            let (_, group_grad) = surrogate(setup.space, group, &adv, &params, config)?;
            grad += &group_grad;
            entropy_sum += stats.entropy;
            scale_sum += stats.scale;
            realized[group.level.index()] += 1;
            n_correct_min =
                Some(n_correct_min.map_or(group.n_correct, |m: usize| m.min(group.n_correct)));
            n_correct_max =
                Some(n_correct_max.map_or(group.n_correct, |m: usize| m.max(group.n_correct)));
        }

        let n_kept = kept.len();
        let mut grad_norm = 0.0;
        if n_kept > 0 {
            grad.mapv_inplace(|x| x / n_kept as f64);
            grad_norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            if config.learning_rate != 0.0 {
                params.theta.scaled_add(config.learning_rate, &grad);
                if !params.is_finite() {
                    return Err(Error::Divergence {
                        step: t,
                        message: "parameters became non-finite after the update".into(),
                    });
                }
            }
        }

        let probs = sampler.effective_probs(t);
        // The headline reward curve tracks the batch the optimizer trained
        // on; the unfiltered mean over everything sampled (kept or
        // discarded) rides along so the filter's effect stays visible.
        let kept_rewards: Vec<f64> =
            kept.iter().flat_map(|g| g.rewards.iter().map(|r| r.total)).collect();
        let (reward_all_mean, _) = mean_std(&all_rewards);
        let (reward_mean, reward_std) = if kept_rewards.is_empty() {
            mean_std(&all_rewards)
        } else {
            mean_std(&kept_rewards)
        };
        records.push(LogRecord::Step(StepRecord {
            step: t,
            variant: config.variant.to_string(),
            reward_mean,
            reward_std,
            reward_all_mean,
            entropy_mean: if n_kept > 0 { entropy_sum / n_kept as f64 } else { 0.0 },
            scale_mean: if n_kept > 0 { scale_sum / n_kept as f64 } else { 0.0 },
            n_groups_kept: n_kept,
            n_groups_discarded: discarded,
            p_easy: probs[0],
            p_medium: probs[1],
            p_hard: probs[2],
            realized_easy: realized[0],
            realized_medium: realized[1],
            realized_hard: realized[2],
            n_correct_min,
            n_correct_max,
            group_size: config.group_size,
            dynamic_sampling: config.dynamic_sampling,
            grad_norm,
        }));

        if do_eval && ((t + 1) % setup.eval_interval == 0 || t + 1 == config.steps) {
            let metrics = evaluate(setup.space, &params, setup.eval_data)?;
            records.push(LogRecord::Eval(EvalRecord::new(t + 1, &metrics)));
        }
    }
    Ok((params, records))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
