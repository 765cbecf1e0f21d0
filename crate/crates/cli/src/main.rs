use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ncd_core::pipeline::{self, RunConfig};
use ncd_core::Error;

#[derive(Parser)]
#[command(name = "ncd", version, about = "Two-stage novel category discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as a manifest plus payloads.
    Synth(Common),
    /// Representation learning; writes checkpoint/stage1.
    Stage1(Common),
    /// Self-training from checkpoint/stage1; writes checkpoint/final.
    Stage2(Common),
    /// Accuracy report, confusion matrix and embeddings for a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory (default: <out>/checkpoint/final).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// stage1, stage2 and eval in sequence.
    Run(Common),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid { .. } => 2,
        Error::Io { .. } | Error::Json { .. } | Error::CheckpointMissing { .. } | Error::Malformed { .. } => 3,
        _ => 1,
    }
}

fn setup(c: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let cfg = RunConfig::load(&c.config)?;
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::ConfigInvalid {
            field: "out_dir".into(),
            reason: "pass --out or set out_dir in the config".into(),
        })?;
    Ok((cfg, out))
}

fn print_json<S: serde::Serialize>(value: &S) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(c) => {
            let (cfg, out) = setup(&c)?;
            let dir = pipeline::cmd_synth(&cfg, &out)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Stage1(c) => {
            let (cfg, out) = setup(&c)?;
            pipeline::cmd_stage1(&cfg, &out)?;
            println!("stage I checkpoint at {}", pipeline::stage1_dir(&out).display());
        }
        Command::Stage2(c) => {
            let (cfg, out) = setup(&c)?;
            let records = pipeline::cmd_stage2(&cfg, &out)?;
            for r in &records {
                println!("iter {}: novel-train {:.4}  test all {:.4}", r.iter, r.novel_train, r.test_all);
            }
        }
        Command::Eval { common, checkpoint } => {
            let (cfg, out) = setup(&common)?;
            print_json(&pipeline::cmd_eval(&cfg, &out, checkpoint.as_deref())?);
        }
        Command::Run(c) => {
            let (cfg, out) = setup(&c)?;
            print_json(&pipeline::run_all(&cfg, Path::new(&out))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
