//! `rlft` — drive the synthetic-task RL fine-tuning pipeline from a TOML
//! config: data generation, supervised cold start, difficulty tagging, RL
//! training, evaluation, sweeps, and plot emission.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rlft_core::harness;
use rlft_core::optimizer::ObjectiveVariant;
use rlft_core::sft::MetricsReport;
use rlft_core::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "rlft",
    version,
    about = "Progressive RL fine-tuning lab for synthetic multiple-choice tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Artifact directory; defaults to the config's `experiment.out_dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// RL run seed: overrides the sweep seed list (single run or sweep).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Objective variant: thinkdrive, grpo, dapo, gspo, or gmpo.
    #[arg(long, value_name = "NAME")]
    variant: Option<ObjectiveVariant>,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    /// Smoothing window for the reward curve; defaults to the config's.
    #[arg(long, value_name = "N")]
    window: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario dataset, held-out exam, and SFT/RL split.
    GenData(Common),
    /// Train the cold-start model and the answer-only evaluation model.
    Sft(Common),
    /// Tag the RL pool into easy/medium/hard levels.
    TagDifficulty(Common),
    /// RL fine-tune from the cold start with one objective variant.
    TrainRl(TrainArgs),
    /// Evaluate the latest checkpoint on the held-out exam.
    Eval(Common),
    /// Sweep all configured variants and seeds; write compare/summary.csv.
    Compare(Common),
    /// Stage-by-stage pipeline ablation; write ablation/summary.csv.
    Ablation(Common),
    /// Write plot-ready CSVs next to a run log.
    EmitPlots(PlotArgs),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.experiment.seeds = vec![seed];
    }
    let out =
        common.out.clone().unwrap_or_else(|| PathBuf::from(&config.experiment.out_dir));
    Ok((config, out))
}

fn print_metrics(label: &str, m: &MetricsReport) {
    println!(
        "{label}: exam {:.4}  easy_exam {:.4}  accuracy {:.4}  format_rate {:.4}",
        m.exam, m.easy_exam, m.accuracy, m.format_rate
    );
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(common) => {
            let (config, out) = load(&common)?;
            harness::cmd_gen_data(&config, &out)?;
            println!("wrote dataset, exam set, and pools under {}", out.display());
        }
        Command::Sft(common) => {
            let (config, out) = load(&common)?;
            harness::cmd_sft(&config, &out)?;
            println!("wrote cold_start.json and eval_model.json under {}", out.display());
        }
        Command::TagDifficulty(common) => {
            let (config, out) = load(&common)?;
            harness::cmd_tag(&config, &out)?;
            println!("wrote tagged.jsonl under {}", out.display());
        }
        Command::TrainRl(args) => {
            let (config, out) = load(&args.common)?;
            let variant = args.variant.unwrap_or(config.objective.variant);
            let run_seed = args.common.seed.unwrap_or(config.experiment.seeds[0]);
            let metrics = harness::cmd_train_rl(&config, &out, &out, variant, run_seed)?;
            print_metrics(&format!("{variant} (seed {run_seed})"), &metrics);
        }
        Command::Eval(common) => {
            let (config, out) = load(&common)?;
            let metrics = harness::cmd_eval(&config, &out)?;
            print_metrics("exam", &metrics);
        }
        Command::Compare(common) => {
            let (config, out) = load(&common)?;
            let rows = harness::cmd_compare(&config, &out)?;
            for row in &rows {
                println!(
                    "{:>10} seed {}: exam {:.4}  easy_exam {:.4}  accuracy {:.4}",
                    row.variant, row.seed, row.exam, row.easy_exam, row.accuracy
                );
            }
            let ws = harness::Workspace::new(&out);
            println!("wrote {}", ws.compare_summary().display());
        }
        Command::Ablation(common) => {
            let (config, out) = load(&common)?;
            let rows = harness::cmd_ablation(&config, &out)?;
            for row in &rows {
                println!(
                    "{:>15}: exam {:.4} (±{:.4})  easy_exam {:.4}  accuracy {:.4}",
                    row.stage, row.exam, row.exam_std, row.easy_exam, row.accuracy
                );
            }
            let ws = harness::Workspace::new(&out);
            println!("wrote {}", ws.ablation_summary().display());
        }
        Command::EmitPlots(args) => {
            let (config, out) = load(&args.common)?;
            let window = args.window.unwrap_or(config.evaluation.smoothing_window);
            harness::cmd_emit_plots(&out, window)?;
            println!("wrote plot CSVs under {}", out.join("plots").display());
        }
    }
    Ok(())
}
