//! JSONL run logs: per-step training records, periodic evaluation records,
//! and supervised epoch losses, plus an auditor for the dynamic-sampling
//! guarantee.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sft::MetricsReport;

/// One training step's aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub variant: String,
    /// Mean/std of total reward over the rollouts the step trained on (all
    /// rollouts of retained groups; falls back to everything sampled when
    /// nothing was retained).
    pub reward_mean: f64,
    pub reward_std: f64,
    /// Mean total reward over everything sampled this step, kept or
    /// discarded, so filtering's effect on the headline curve stays visible.
    pub reward_all_mean: f64,
    /// Mean cluster entropy over retained groups.
    pub entropy_mean: f64,
    /// Mean advantage scale over retained groups.
    pub scale_mean: f64,
    pub n_groups_kept: usize,
    pub n_groups_discarded: usize,
    /// Scheduled level proportions at this step.
    pub p_easy: f64,
    pub p_medium: f64,
    pub p_hard: f64,
    /// Levels actually drawn for the retained groups.
    pub realized_easy: usize,
    pub realized_medium: usize,
    pub realized_hard: usize,
    /// Range of correct-rollout counts over retained groups (absent when no
    /// group survived); lets an auditor check `0 < n_correct < G` offline.
    pub n_correct_min: Option<usize>,
    pub n_correct_max: Option<usize>,
    pub group_size: usize,
    /// Whether violating groups were filtered at this step.
    pub dynamic_sampling: bool,
    /// L2 norm of the averaged parameter gradient.
    pub grad_norm: f64,
}

/// Periodic held-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub exam: f64,
    pub easy_exam: f64,
    pub accuracy: f64,
    pub format_rate: f64,
}

impl EvalRecord {
    pub fn new(step: usize, metrics: &MetricsReport) -> Self {
        EvalRecord {
            step,
            exam: metrics.exam,
            easy_exam: metrics.easy_exam,
            accuracy: metrics.accuracy,
            format_rate: metrics.format_rate,
        }
    }
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepRecord),
    Eval(EvalRecord),
    SftEpoch { epoch: usize, nll: f64 },
}

pub fn write_runlog<P: AsRef<Path>>(path: P, records: &[LogRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_runlog<P: AsRef<Path>>(path: P) -> Result<Vec<LogRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Outcome of auditing a run log for the dynamic-sampling guarantee.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    /// Steps that retained at least one group and were checked.
    pub steps_checked: usize,
    /// Steps whose retained groups violate `0 < n_correct < G`.
    pub violations: Vec<usize>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify that every retained group in a dynamically sampled run satisfied
/// `0 < n_correct < group_size`, using only the log.
pub fn audit_dynamic_sampling(records: &[LogRecord]) -> AuditReport {
    let mut steps_checked = 0;
    let mut violations = Vec::new();
    for record in records {
        if let LogRecord::Step(step) = record {
            if !step.dynamic_sampling || step.n_groups_kept == 0 {
                continue;
            }
            steps_checked += 1;
            match (step.n_correct_min, step.n_correct_max) {
                (Some(min), Some(max)) if min >= 1 && max <= step.group_size - 1 => {}
                _ => violations.push(step.step),
            }
        }
    }
    AuditReport { steps_checked, violations }
}
