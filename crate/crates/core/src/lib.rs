//! A desk-scale laboratory for progressive RL fine-tuning of a tiny
//! autoregressive policy on synthetic multiple-choice tasks.
//!
//! The pipeline: generate scenarios with a controllable difficulty knob
//! ([`scenario`]), cold-start a linear-softmax token policy on worked
//! demonstrations ([`sft`]), tag the RL pool into difficulty levels with an
//! answer-only probe model ([`difficulty`]), then fine-tune with
//! group-relative policy optimization under a Gaussian curriculum that
//! drifts from easy to hard ([`curriculum`], [`optimizer`]). The headline
//! objective combines a geometric-mean token aggregate, clip-higher
//! asymmetric ratios, entropy-modulated advantages, and dynamic resampling
//! of degenerate groups; `grpo`, `dapo`, `gspo`, and `gmpo` baselines share
//! the same machinery. Everything is analytically differentiable and
//! deterministic, so gradients are checked against finite differences and
//! artifacts are byte-reproducible.

pub mod config;
pub mod curriculum;
pub mod difficulty;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod policy;
pub mod rewards;
pub mod runlog;
pub mod scenario;
pub mod seeds;
pub mod sft;
pub mod vocab;

pub use config::ExperimentConfig;
pub use curriculum::{CurriculumMode, CurriculumSampler, SchedulerConfig};
pub use difficulty::{tag_dataset, DifficultyLabel, TaggedDataset, TaggedScenario};
pub use error::{Error, Result};
pub use optimizer::{train_rl, ObjectiveConfig, ObjectiveVariant, TrainSetup};
pub use policy::{PolicyParams, PolicySnapshot, PolicySpace, Rollout};
pub use rewards::{compute_reward, parse_response, ParsedResponse, RewardBreakdown, RewardWeights};
pub use runlog::{EvalRecord, LogRecord, StepRecord};
pub use scenario::{generate_dataset, split_dataset, GenConfig, Scenario};
pub use sft::{evaluate, sft_train, MetricsReport, SftConfig};
pub use vocab::Vocabulary;
