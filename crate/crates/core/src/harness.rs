//! Experiment orchestration: the artifact layout, the pipeline behind each
//! CLI subcommand, multi-seed sweeps, run-log summaries, and plot data.
//!
//! Every command is a pure function of (config, seed) and writes
//! deterministic bytes, so rerunning any of them reproduces its artifacts
//! exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::curriculum::{CurriculumMode, SchedulerConfig};
use crate::difficulty::{load_tagged, save_tagged, tag_dataset};
use crate::error::{Error, Result};
use crate::optimizer::{train_rl, ObjectiveConfig, ObjectiveVariant, TrainSetup};
use crate::policy::{load_checkpoint, save_checkpoint, PolicyParams, PolicySpace};
use crate::runlog::{read_runlog, write_runlog, EvalRecord, LogRecord};
use crate::scenario::{
    generate_dataset, load_dataset, save_dataset, split_dataset, GenConfig, Scenario,
};
use crate::seeds;
use crate::sft::{evaluate, sft_train, MetricsReport};
use crate::vocab::Vocabulary;

/// Artifact layout rooted at one output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new<P: Into<PathBuf>>(root: P) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn eval_dataset(&self) -> PathBuf {
        self.root.join("eval.jsonl")
    }

    pub fn sft_pool(&self) -> PathBuf {
        self.root.join("sft_pool.jsonl")
    }

    pub fn rl_pool(&self) -> PathBuf {
        self.root.join("rl_pool.jsonl")
    }

    pub fn cold_start(&self) -> PathBuf {
        self.root.join("cold_start.json")
    }

    pub fn eval_model(&self) -> PathBuf {
        self.root.join("eval_model.json")
    }

    pub fn sft_log(&self) -> PathBuf {
        self.root.join("sft_log.jsonl")
    }

    pub fn eval_model_log(&self) -> PathBuf {
        self.root.join("eval_model_log.jsonl")
    }

    pub fn tagged(&self) -> PathBuf {
        self.root.join("tagged.jsonl")
    }

    pub fn runlog(&self) -> PathBuf {
        self.root.join("runlog.jsonl")
    }

    pub fn rl_final(&self) -> PathBuf {
        self.root.join("rl_final.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("eval.json")
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.root.join("compare")
    }

    pub fn compare_summary(&self) -> PathBuf {
        self.compare_dir().join("summary.csv")
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }

    pub fn ablation_summary(&self) -> PathBuf {
        self.ablation_dir().join("summary.csv")
    }

    /// `<root>/<group>/<name>-s<seed>`, e.g. `compare/grpo-s3`.
    pub fn run_dir(&self, group: &str, name: &str, seed: u64) -> PathBuf {
        self.root.join(group).join(format!("{name}-s{seed}"))
    }
}

/// The token space and context width implied by the config.
pub fn build_space(config: &ExperimentConfig) -> Result<PolicySpace> {
    PolicySpace::new(
        Vocabulary::new(config.scenario.feature_dim),
        config.scenario.feature_dim,
        config.policy.max_len,
    )
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "missing artifact {}; run `{produced_by}` first",
            path.display()
        )))
    }
}

/// Generate the train/eval datasets and the supervised/RL split.
pub fn cmd_gen_data(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let ws = Workspace::new(out);
    let data = generate_dataset(&config.scenario)?;
    save_dataset(ws.dataset(), &data)?;
    let eval_gen = GenConfig {
        n: config.evaluation.n_eval,
        seed: config.evaluation.seed,
        ..config.scenario.clone()
    };
    save_dataset(ws.eval_dataset(), &generate_dataset(&eval_gen)?)?;
    let split = split_dataset(&data, config.split.sft_fraction, config.split.seed)?;
    save_dataset(ws.sft_pool(), &split.sft_pool)?;
    save_dataset(ws.rl_pool(), &split.rl_pool)?;
    Ok(())
}

/// Train the cold-start model (full demos) and the answer-only evaluation
/// model, both from a uniform initialization.
pub fn cmd_sft(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let ws = Workspace::new(out);
    require(&ws.sft_pool(), "gen-data")?;
    let space = build_space(config)?;
    let sft_pool = load_dataset(ws.sft_pool())?;
    let init = PolicyParams::zeros(&space);

    let mut cold_config = config.sft.clone();
    cold_config.include_cot = true;
    let (cold, losses) = sft_train(&space, &init, &sft_pool, &cold_config)?;
    save_checkpoint(ws.cold_start(), &cold, &space)?;
    let records: Vec<LogRecord> =
        losses.iter().map(|l| LogRecord::SftEpoch { epoch: l.epoch, nll: l.nll }).collect();
    write_runlog(ws.sft_log(), &records)?;

    let mut answer_config = config.sft.clone();
    answer_config.include_cot = false;
    answer_config.seed = seeds::derive(config.sft.seed, &[1]);
    let full_data;
    let eval_pool: &[Scenario] = if config.sft.eval_model_on_full_data {
        require(&ws.dataset(), "gen-data")?;
        full_data = load_dataset(ws.dataset())?;
        &full_data
    } else {
        &sft_pool
    };
    let (eval_model, losses) = sft_train(&space, &init, eval_pool, &answer_config)?;
    save_checkpoint(ws.eval_model(), &eval_model, &space)?;
    let records: Vec<LogRecord> =
        losses.iter().map(|l| LogRecord::SftEpoch { epoch: l.epoch, nll: l.nll }).collect();
    write_runlog(ws.eval_model_log(), &records)?;
    Ok(())
}

/// Partition the RL pool into difficulty levels using the evaluation model.
pub fn cmd_tag(config: &ExperimentConfig, out: &Path) -> Result<()> {
    config.validate()?;
    let ws = Workspace::new(out);
    require(&ws.rl_pool(), "gen-data")?;
    require(&ws.eval_model(), "sft")?;
    let space = build_space(config)?;
    let rl_pool = load_dataset(ws.rl_pool())?;
    let eval_params = load_checkpoint(ws.eval_model(), &space)?;
    let tagged =
        tag_dataset(&space, &eval_params, &rl_pool, config.difficulty.th1, config.difficulty.th2)?;
    save_tagged(ws.tagged(), &tagged)?;
    Ok(())
}

/// The objective actually run for `variant`: the config's own section when
/// it already targets that variant, otherwise the variant's preset carrying
/// over the shared training knobs.
pub fn objective_for(config: &ExperimentConfig, variant: ObjectiveVariant) -> ObjectiveConfig {
    if config.objective.variant == variant {
        config.objective.clone()
    } else {
        ObjectiveConfig {
            learning_rate: config.objective.learning_rate,
            steps: config.objective.steps,
            group_size: config.objective.group_size,
            prompts_per_step: config.objective.prompts_per_step,
            temperature: config.objective.temperature,
            alpha: config.objective.alpha,
            std_epsilon: config.objective.std_epsilon,
            max_resample: config.objective.max_resample,
            seed: config.objective.seed,
            ..ObjectiveConfig::for_variant(variant)
        }
    }
}

/// Baselines sample the RL pool uniformly; only the headline variant gets
/// the configured curriculum.
pub fn scheduler_for(config: &ExperimentConfig, variant: ObjectiveVariant) -> SchedulerConfig {
    let mut scheduler = config.scheduler.clone();
    if variant != ObjectiveVariant::Thinkdrive {
        scheduler.mode = CurriculumMode::Uniform;
    }
    scheduler
}

/// Run RL fine-tuning for one (variant, seed) into `run_dir`, returning the
/// final held-out metrics.
pub fn cmd_train_rl(
    config: &ExperimentConfig,
    out: &Path,
    run_dir: &Path,
    variant: ObjectiveVariant,
    run_seed: u64,
) -> Result<MetricsReport> {
    config.validate()?;
    let ws = Workspace::new(out);
    require(&ws.rl_pool(), "gen-data")?;
    require(&ws.eval_dataset(), "gen-data")?;
    require(&ws.cold_start(), "sft")?;
    require(&ws.tagged(), "tag-difficulty")?;
    let space = build_space(config)?;
    let rl_pool = load_dataset(ws.rl_pool())?;
    let tagged = load_tagged(ws.tagged(), config.difficulty.th1, config.difficulty.th2)?;
    let pool_ids: BTreeSet<&str> = rl_pool.iter().map(|s| s.id.as_str()).collect();
    for t in tagged.iter() {
        if !pool_ids.contains(t.scenario.id.as_str()) {
            return Err(Error::Alignment(format!(
                "tagged scenario {} is not in the RL pool; rerun tag-difficulty",
                t.scenario.id
            )));
        }
    }
    let eval_data = load_dataset(ws.eval_dataset())?;
    let init = load_checkpoint(ws.cold_start(), &space)?;
    let setup = TrainSetup {
        space: &space,
        tagged: &tagged,
        weights: config.rewards,
        objective: objective_for(config, variant),
        scheduler: scheduler_for(config, variant),
        eval_data: &eval_data,
        eval_interval: config.evaluation.interval,
        seed: seeds::derive(config.objective.seed, &[run_seed]),
    };
    let (params, records) = train_rl(&setup, &init)?;
    fs::create_dir_all(run_dir)?;
    write_runlog(run_dir.join("runlog.jsonl"), &records)?;
    save_checkpoint(run_dir.join("rl_final.json"), &params, &space)?;
    let metrics = evaluate(&space, &params, &eval_data)?;
    fs::write(run_dir.join("eval.json"), serde_json::to_string_pretty(&metrics)?)?;
    Ok(metrics)
}

/// Evaluate the most-trained checkpoint in the workspace (the RL result if
/// present, the cold start otherwise) on the held-out set.
pub fn cmd_eval(config: &ExperimentConfig, out: &Path) -> Result<MetricsReport> {
    config.validate()?;
    let ws = Workspace::new(out);
    require(&ws.eval_dataset(), "gen-data")?;
    let checkpoint = if ws.rl_final().exists() { ws.rl_final() } else { ws.cold_start() };
    require(&checkpoint, "sft")?;
    let space = build_space(config)?;
    let eval_data = load_dataset(ws.eval_dataset())?;
    let params = load_checkpoint(checkpoint, &space)?;
    let metrics = evaluate(&space, &params, &eval_data)?;
    fs::write(ws.metrics(), serde_json::to_string_pretty(&metrics)?)?;
    Ok(metrics)
}

/// One line of `compare/summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub variant: String,
    pub seed: u64,
    pub exam: f64,
    pub easy_exam: f64,
    pub accuracy: f64,
}

/// Full pipeline plus one RL run per (variant, seed); earlier stages are
/// shared across runs.
pub fn cmd_compare(config: &ExperimentConfig, out: &Path) -> Result<Vec<CompareRow>> {
    cmd_gen_data(config, out)?;
    cmd_sft(config, out)?;
    cmd_tag(config, out)?;
    let ws = Workspace::new(out);
    fs::create_dir_all(ws.compare_dir())?;
    let mut rows = Vec::new();
    for &variant in &config.experiment.variants {
        for &seed in &config.experiment.seeds {
            let run_dir = ws.run_dir("compare", variant.name(), seed);
            let metrics = cmd_train_rl(config, out, &run_dir, variant, seed)?;
            rows.push(CompareRow {
                variant: variant.to_string(),
                seed,
                exam: metrics.exam,
                easy_exam: metrics.easy_exam,
                accuracy: metrics.accuracy,
            });
        }
    }
    let mut writer = csv::Writer::from_path(ws.compare_summary())?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(rows)
}

/// Read back the run logs written by [`cmd_compare`].
pub fn load_compare_logs(config: &ExperimentConfig, out: &Path) -> Result<Vec<RunLog>> {
    let ws = Workspace::new(out);
    let mut logs = Vec::new();
    for &variant in &config.experiment.variants {
        for &seed in &config.experiment.seeds {
            let dir = ws.run_dir("compare", variant.name(), seed);
            logs.push(RunLog {
                variant: variant.to_string(),
                seed,
                records: read_runlog(dir.join("runlog.jsonl"))?,
            });
        }
    }
    Ok(logs)
}

/// One line of `ablation/summary.csv`: seed-mean metrics per pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub stage: String,
    pub exam: f64,
    pub easy_exam: f64,
    pub accuracy: f64,
    pub exam_std: f64,
}

fn ablation_row(stage: &str, runs: &[MetricsReport]) -> AblationRow {
    let n = runs.len() as f64;
    let exam = runs.iter().map(|m| m.exam).sum::<f64>() / n;
    let exam_std =
        (runs.iter().map(|m| (m.exam - exam).powi(2)).sum::<f64>() / n).sqrt();
    AblationRow {
        stage: stage.into(),
        exam,
        easy_exam: runs.iter().map(|m| m.easy_exam).sum::<f64>() / n,
        accuracy: runs.iter().map(|m| m.accuracy).sum::<f64>() / n,
        exam_std,
    }
}

/// The incremental pipeline: untrained policy, cold start, difficulty-aware
/// RL on a level-agnostic mix, and finally the full curriculum. RL stages
/// average over the sweep seeds.
pub fn cmd_ablation(config: &ExperimentConfig, out: &Path) -> Result<Vec<AblationRow>> {
    cmd_gen_data(config, out)?;
    cmd_sft(config, out)?;
    cmd_tag(config, out)?;
    let ws = Workspace::new(out);
    fs::create_dir_all(ws.ablation_dir())?;
    let space = build_space(config)?;
    let eval_data = load_dataset(ws.eval_dataset())?;

    let base = evaluate(&space, &PolicyParams::zeros(&space), &eval_data)?;
    let cold = evaluate(&space, &load_checkpoint(ws.cold_start(), &space)?, &eval_data)?;

    let mut flat = config.clone();
    flat.scheduler.mode = CurriculumMode::Uniform;
    let mut flat_runs = Vec::new();
    let mut full_runs = Vec::new();
    for &seed in &config.experiment.seeds {
        let dir = ws.run_dir("ablation", "difficulty_rl", seed);
        flat_runs.push(cmd_train_rl(&flat, out, &dir, ObjectiveVariant::Thinkdrive, seed)?);
        let dir = ws.run_dir("ablation", "curriculum", seed);
        full_runs.push(cmd_train_rl(config, out, &dir, ObjectiveVariant::Thinkdrive, seed)?);
    }

    let rows = vec![
        ablation_row("base", &[base]),
        ablation_row("+sft", &[cold]),
        ablation_row("+difficulty_rl", &flat_runs),
        ablation_row("+curriculum", &full_runs),
    ];
    let mut writer = csv::Writer::from_path(ws.ablation_summary())?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(rows)
}

/// Write `plots/{reward,easy_exam,proportions}.csv` next to a run log.
pub fn cmd_emit_plots(run_dir: &Path, smoothing_window: usize) -> Result<()> {
    let log_path = run_dir.join("runlog.jsonl");
    require(&log_path, "train-rl")?;
    let records = read_runlog(&log_path)?;
    let plots = run_dir.join("plots");
    fs::create_dir_all(&plots)?;

    let steps: Vec<_> = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
        .collect();
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward_mean).collect();
    let smoothed = rolling_mean(&rewards, smoothing_window);

    let mut writer = csv::Writer::from_path(plots.join("reward.csv"))?;
    writer.write_record(["step", "reward_mean", "reward_smoothed"])?;
    for (step, value) in steps.iter().zip(&smoothed) {
        writer.write_record([
            step.step.to_string(),
            step.reward_mean.to_string(),
            value.to_string(),
        ])?;
    }
    writer.flush()?;

    let mut writer = csv::Writer::from_path(plots.join("easy_exam.csv"))?;
    writer.write_record(["step", "easy_exam", "exam"])?;
    for record in eval_records(&records) {
        writer.write_record([
            record.step.to_string(),
            record.easy_exam.to_string(),
            record.exam.to_string(),
        ])?;
    }
    writer.flush()?;

    let mut writer = csv::Writer::from_path(plots.join("proportions.csv"))?;
    writer.write_record([
        "step",
        "p_easy",
        "p_medium",
        "p_hard",
        "realized_easy",
        "realized_medium",
        "realized_hard",
    ])?;
    for step in &steps {
        writer.write_record([
            step.step.to_string(),
            step.p_easy.to_string(),
            step.p_medium.to_string(),
            step.p_hard.to_string(),
            step.realized_easy.to_string(),
            step.realized_medium.to_string(),
            step.realized_hard.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Trailing rolling mean: entry `i` averages the last `window` values up to
/// and including `i`.
pub fn rolling_mean(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "rolling_mean needs a positive window");
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Per-step training rewards of a run log.
pub fn step_reward_series(records: &[LogRecord]) -> Vec<f64> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Step(s) => Some(s.reward_mean),
            _ => None,
        })
        .collect()
}

/// Periodic evaluation records of a run log, in order.
pub fn eval_records(records: &[LogRecord]) -> Vec<&EvalRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Eval(e) => Some(e),
            _ => None,
        })
        .collect()
}

/// Shape statistics of a smoothed reward curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardShape {
    /// Smoothed value at step 0.
    pub start: f64,
    /// Minimum over the window `[T/8, T/2]`.
    pub early_min: f64,
    pub final_value: f64,
    /// Max minus min over the whole smoothed curve.
    pub range: f64,
}

impl RewardShape {
    /// True when the curve dips below its starting value in `[T/8, T/2]` and
    /// finishes at least `recovery_fraction` of its range above that
    /// minimum.
    pub fn dips_and_recovers(&self, recovery_fraction: f64) -> bool {
        self.early_min < self.start
            && self.final_value >= self.early_min + recovery_fraction * self.range
    }
}

/// Smooth a per-step reward series and measure its dip-and-recover shape.
pub fn reward_shape(step_rewards: &[f64], window: usize) -> Option<RewardShape> {
    if step_rewards.len() < 2 {
        return None;
    }
    let smoothed = rolling_mean(step_rewards, window);
    let t = smoothed.len();
    let early_min =
        smoothed[t / 8..=t / 2].iter().cloned().fold(f64::INFINITY, f64::min);
    let min_all = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_all = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(RewardShape {
        start: smoothed[0],
        early_min,
        final_value: *smoothed.last().expect("non-empty"),
        range: max_all - min_all,
    })
}

/// One run's identity and parsed log.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub variant: String,
    pub seed: u64,
    pub records: Vec<LogRecord>,
}

/// Final metrics and curve aggregates for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub variant: String,
    pub seed: u64,
    pub final_exam: f64,
    pub final_easy_exam: f64,
    pub final_accuracy: f64,
    pub final_format_rate: f64,
    /// Mean easy-exam height over training (trapezoidal over the eval grid).
    pub easy_exam_auc: f64,
}

/// Inter-seed aggregates for one variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub mean_exam: f64,
    pub std_exam: f64,
    pub mean_easy_exam: f64,
    pub mean_auc: f64,
    /// Mean over second-half eval points of the inter-seed easy-exam std:
    /// the training-stability measure (lower is steadier).
    pub second_half_easy_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryReport {
    pub runs: Vec<RunSummary>,
    pub variants: Vec<VariantSummary>,
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Aggregate run logs: per-run final metrics and easy-exam AUC, then
/// per-variant means, stds, and the second-half stability measure. All logs
/// must share one evaluation grid.
pub fn summarize(logs: &[RunLog]) -> Result<SummaryReport> {
    if logs.is_empty() {
        return Err(Error::Alignment("no run logs to summarize".into()));
    }
    let mut grid: Option<Vec<usize>> = None;
    let mut runs = Vec::new();
    let mut curves: Vec<Vec<f64>> = Vec::new();
    for log in logs {
        let evals = eval_records(&log.records);
        if evals.is_empty() {
            return Err(Error::Alignment(format!(
                "run {}-s{} has no evaluation records",
                log.variant, log.seed
            )));
        }
        let steps: Vec<usize> = evals.iter().map(|e| e.step).collect();
        match &grid {
            None => grid = Some(steps),
            Some(expected) if *expected == steps => {}
            Some(expected) => {
                return Err(Error::Alignment(format!(
                    "run {}-s{} evaluates at steps {steps:?}, expected {expected:?}",
                    log.variant, log.seed
                )));
            }
        }
        let span = (evals.last().expect("non-empty").step
            - evals.first().expect("non-empty").step) as f64;
        let auc = if span > 0.0 {
            evals
                .windows(2)
                .map(|w| (w[1].step - w[0].step) as f64 * (w[0].easy_exam + w[1].easy_exam) / 2.0)
                .sum::<f64>()
                / span
        } else {
            evals[0].easy_exam
        };
        let last = evals.last().expect("non-empty");
        runs.push(RunSummary {
            variant: log.variant.clone(),
            seed: log.seed,
            final_exam: last.exam,
            final_easy_exam: last.easy_exam,
            final_accuracy: last.accuracy,
            final_format_rate: last.format_rate,
            easy_exam_auc: auc,
        });
        curves.push(evals.iter().map(|e| e.easy_exam).collect());
    }

    let grid = grid.expect("at least one log");
    let last_step = *grid.last().expect("non-empty grid");
    let second_half: Vec<usize> =
        (0..grid.len()).filter(|&i| 2 * grid[i] >= last_step).collect();

    let mut by_variant: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        by_variant.entry(run.variant.clone()).or_default().push(i);
    }
    let variants = by_variant
        .into_iter()
        .map(|(variant, indices)| {
            let exams: Vec<f64> = indices.iter().map(|&i| runs[i].final_exam).collect();
            let easies: Vec<f64> = indices.iter().map(|&i| runs[i].final_easy_exam).collect();
            let aucs: Vec<f64> = indices.iter().map(|&i| runs[i].easy_exam_auc).collect();
            let stds: Vec<f64> = second_half
                .iter()
                .map(|&p| {
                    let at_point: Vec<f64> = indices.iter().map(|&i| curves[i][p]).collect();
                    population_std(&at_point)
                })
                .collect();
            VariantSummary {
                variant,
                runs: indices.len(),
                mean_exam: exams.iter().sum::<f64>() / exams.len() as f64,
                std_exam: population_std(&exams),
                mean_easy_exam: easies.iter().sum::<f64>() / easies.len() as f64,
                mean_auc: aucs.iter().sum::<f64>() / aucs.len() as f64,
                second_half_easy_std: stds.iter().sum::<f64>() / stds.len().max(1) as f64,
            }
        })
        .collect();
    Ok(SummaryReport { runs, variants })
}
