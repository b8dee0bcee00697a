use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use binloc_cli::{commands, Overrides, RunConfig};
use clap::{Parser, Subcommand};

/// Binaural azimuth localization workbench.
#[derive(Debug, Parser)]
#[command(name = "binloc", version)]
struct Cli {
    /// TOML config; omitted keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`; otherwise the config, then $BINLOC_OUTPUT_ROOT, then ./runs.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the labeled binaural dataset and its manifests.
    Synth,
    /// Cache feature planes for every clip.
    Features,
    /// Train one model on the configured feature set.
    Train,
    /// Evaluate a trained checkpoint on the test sets.
    Eval,
    /// Train and evaluate every configured feature set.
    Sweep,
    /// Print the resolved config.
    Config,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::parse("")?,
    };
    cfg.apply(&Overrides { seed: cli.seed, output_dir: cli.output_dir, threads: cli.threads })?;
    commands::with_threads(&cfg, || match cli.command {
        Command::Synth => {
            let s = commands::synth(&cfg)?;
            for split in &s.splits {
                println!("{}: {} clips -> {}", split.name, split.records, split.manifest.display());
            }
            Ok(())
        }
        Command::Features => {
            let f = commands::features(&cfg)?;
            println!("{} feature files ({}) -> {}", f.files, f.spec, f.run_dir.display());
            Ok(())
        }
        Command::Train => {
            let t = commands::train_model(&cfg)?;
            println!(
                "best epoch {} of {} (val loss {:.5}) -> {}",
                t.best_epoch,
                t.epochs_run,
                t.best_val_loss,
                t.checkpoint.display()
            );
            Ok(())
        }
        Command::Eval => {
            let e = commands::eval(&cfg)?;
            for r in &e.reports {
                print!("{}", r.to_text());
            }
            println!("-> {}", e.run_dir.display());
            Ok(())
        }
        Command::Sweep => {
            let s = commands::sweep(&cfg)?;
            print!("{}", s.result.to_text());
            println!("-> {}", s.run_dir.display());
            Ok(())
        }
        Command::Config => {
            print!("{}", cfg.resolved().to_toml()?);
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
