//! `beamtrack`: dataset generation, model training, scheduled rollouts, and
//! metric reporting for mmWave beam tracking, driven by a TOML config.
//!
//! Every subcommand reads `--config` (defaults apply when omitted), writes
//! its artifacts under the output directory, and can be re-run
//! independently as long as the preceding stage's artifacts exist.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use beamtrack_core::dataset::{ingest, stats, RecordFormat};
use beamtrack_core::harness::{
    self, ExperimentConfig, OutputLayout, Report, ScenarioKind,
};
use beamtrack_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "beamtrack",
    version,
    about = "mmWave beam-tracking simulator and evaluation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config in TOML; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed (overrides the config's `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Data,
    Train,
    Track,
    Eval,
    Report,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write its statistics.
    Synth(CommonArgs),
    /// Validate an external scene-records file and canonicalize it.
    Ingest(CommonArgs),
    /// Print statistics of the prepared dataset.
    Stats(CommonArgs),
    /// Train the classification and regression models.
    Train(CommonArgs),
    /// Roll out every configured schedule over the test episodes.
    Track(CommonArgs),
    /// Recompute metrics from the persisted track records.
    Eval(CommonArgs),
    /// Assemble the report and emit plot tables.
    Report(CommonArgs),
    /// Run the full pipeline, or a single stage with --stage.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        stage: Option<Stage>,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report_summary(report: &Report) {
    println!("baseline persistence top-1: {:.4}", report.baseline_top1);
    for e in &report.entries {
        let topk: Vec<String> = e
            .top_k
            .iter()
            .map(|r| format!("top-{} {:.4}", r.k, r.accuracy))
            .collect();
        println!(
            "{} p={}: {} | TR {:.4} | MOR {:.1}%",
            e.head,
            e.schedule_p,
            topk.join(" "),
            e.throughput_ratio,
            e.mor_percent
        );
    }
}

fn cmd_stats(cfg: &ExperimentConfig) -> Result<()> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let ds = ingest(&layout.dataset(), RecordFormat::SceneRecords)?;
    let st = stats(&ds, ds.num_beams)?;
    println!(
        "episodes {} scenes {} beams {}",
        ds.episodes.len(),
        ds.total_scenes(),
        ds.num_beams
    );
    println!(
        "los {} nlos {} mafd {:.4} beam-gain variance {:.2} dB",
        st.los_count, st.nlos_count, st.mafd, st.beam_gain_variance_db
    );
    Ok(())
}

fn run_stage(cfg: &ExperimentConfig, stage: Stage) -> Result<()> {
    match stage {
        Stage::Data => harness::stage_data(cfg).map(|_| ()).map_err(|e| e.in_stage("data")),
        Stage::Train => harness::stage_train(cfg).map_err(|e| e.in_stage("train")),
        Stage::Track => harness::stage_track(cfg).map_err(|e| e.in_stage("track")),
        Stage::Eval => harness::stage_eval(cfg).map(|_| ()).map_err(|e| e.in_stage("eval")),
        Stage::Report => {
            let report = harness::stage_report(cfg).map_err(|e| e.in_stage("report"))?;
            print_report_summary(&report);
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(common) => {
            let cfg = load_config(&common)?;
            if cfg.scenario.kind != ScenarioKind::Synth {
                return Err(Error::InvalidInput(
                    "config scenario is not 'synth'".into(),
                ));
            }
            let ds = harness::stage_data(&cfg).map_err(|e| e.in_stage("data"))?;
            println!(
                "wrote {} episodes ({} scenes) to {}",
                ds.episodes.len(),
                ds.total_scenes(),
                OutputLayout::new(&cfg.out_dir).dataset().display()
            );
            Ok(())
        }
        Command::Ingest(common) => {
            let cfg = load_config(&common)?;
            if cfg.scenario.kind != ScenarioKind::Ingest {
                return Err(Error::InvalidInput(
                    "config scenario is not 'ingest'".into(),
                ));
            }
            let ds = harness::stage_data(&cfg).map_err(|e| e.in_stage("data"))?;
            println!(
                "ingested {} episodes ({} scenes)",
                ds.episodes.len(),
                ds.total_scenes()
            );
            Ok(())
        }
        Command::Stats(common) => cmd_stats(&load_config(&common)?),
        Command::Train(common) => {
            run_stage(&load_config(&common)?, Stage::Train)?;
            println!("checkpoints written");
            Ok(())
        }
        Command::Track(common) => {
            run_stage(&load_config(&common)?, Stage::Track)?;
            println!("track records written");
            Ok(())
        }
        Command::Eval(common) => {
            let cfg = load_config(&common)?;
            let (baseline, entries) =
                harness::stage_eval(&cfg).map_err(|e| e.in_stage("eval"))?;
            println!("baseline persistence top-1: {baseline:.4}");
            println!("{} metric entries written", entries.len());
            Ok(())
        }
        Command::Report(common) => run_stage(&load_config(&common)?, Stage::Report),
        Command::Run { common, stage } => {
            let cfg = load_config(&common)?;
            match stage {
                Some(stage) => run_stage(&cfg, stage),
                None => {
                    let report = harness::run(&cfg)?;
                    print_report_summary(&report);
                    println!(
                        "report: {}",
                        OutputLayout::new(&cfg.out_dir).report().display()
                    );
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
