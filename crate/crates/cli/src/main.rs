use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wvdnet::config::RunConfig;
use wvdnet::workflow::{self, ExportStage};
use wvdnet::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Audio clip classification from pseudo Wigner-Ville images.
///
/// Settings come from the built-in defaults, then `--config`, then each
/// `--set key=value` in order, then `--seed` and `--out`.
#[derive(Parser, Debug)]
#[command(name = "wvdnet", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthesis, splitting, initialization, shuffling and dropout.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (for `synth`, the dataset directory to create).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render every clip of the dataset into the array store.
    Preprocess {
        /// Rebuild even when the store is up to date.
        #[arg(long)]
        force: bool,
    },
    /// Write a synthetic tone/chirp/noise dataset in folder-per-class layout.
    Synth,
    /// Train on the configured split and write a checkpoint and history.
    Train,
    /// Evaluate the checkpoint and write the classification report.
    Evaluate,
    /// Classify overlapping windows of a long recording.
    Stream {
        wav: PathBuf,
        /// Prediction CSV; defaults to `<out>/stream.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the time-frequency image of one clip as PNG or CSV.
    Export {
        clip: PathBuf,
        /// Output file, `.png` or `.csv`.
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Stage::Final)]
        stage: Stage,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Stage {
    Raw,
    Final,
}

fn effective_config(cli: &Cli) -> wvdnet::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.overrides {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let (Some(out), false) = (&cli.out, matches!(cli.command, Command::Synth)) {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> wvdnet::Result<()> {
    let cfg = effective_config(&cli)?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Synth => {
            let dir = cli.out.unwrap_or_else(|| cfg.dataset_root.clone());
            let paths = workflow::run_synth(&cfg, &dir)?;
            let _ = writeln!(stdout, "wrote {} clips to {}", paths.len(), dir.display());
        }
        Command::Preprocess { force } => {
            let s = workflow::run_preprocess(&cfg, force)?;
            if s.report.up_to_date {
                let _ = writeln!(stdout, "store {} is up to date", s.store_dir.display());
            } else {
                let _ = writeln!(
                    stdout,
                    "wrote {} arrays to {}",
                    s.report.written,
                    s.store_dir.display()
                );
            }
            for (name, count) in s.class_names.iter().zip(&s.counts) {
                let _ = writeln!(stdout, "  {name}: {count}");
            }
            if !s.report.skipped.is_empty() {
                let _ = writeln!(
                    stdout,
                    "skipped {} clips (see skipped.txt)",
                    s.report.skipped.len()
                );
            }
        }
        Command::Train => {
            let s = workflow::run_train(&cfg, |e| {
                let eval = e
                    .eval_accuracy
                    .map(|a| format!(" eval_acc {a:.4}"))
                    .unwrap_or_default();
                eprintln!(
                    "epoch {:>3}  loss {:.4}  train_acc {:.4}{eval}",
                    e.epoch, e.train_loss, e.train_accuracy
                );
            })?;
            let _ = writeln!(
                stdout,
                "trained on {} clips ({} held out), checkpoint {}",
                s.train_count,
                s.test_count,
                s.checkpoint.display()
            );
            if let Some(epoch) = s.best_epoch {
                let _ = writeln!(
                    stdout,
                    "best eval accuracy at epoch {epoch}, snapshot {}",
                    workflow::BEST_CHECKPOINT_FILE
                );
            }
        }
        Command::Evaluate => {
            let s = workflow::run_evaluate(&cfg)?;
            let _ = write!(stdout, "{}", s.text);
        }
        Command::Stream { wav, csv } => {
            let csv = csv.unwrap_or_else(|| cfg.out.join("stream.csv"));
            let preds = workflow::run_stream(&cfg, &wav, &csv)?;
            let _ = writeln!(
                stdout,
                "{} windows written to {}",
                preds.len(),
                csv.display()
            );
        }
        Command::Export {
            clip,
            output,
            stage,
        } => {
            let stage = match stage {
                Stage::Raw => ExportStage::Raw,
                Stage::Final => ExportStage::Final,
            };
            let image = workflow::run_export(&cfg, &clip, &output, stage)?;
            let _ = writeln!(
                stdout,
                "{}x{} {} image written to {}",
                image.rows(),
                image.cols(),
                image.kind().as_str(),
                output.display()
            );
        }
        Command::ShowConfig => {
            let _ = write!(stdout, "{}", cfg.to_text());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Shape(_) => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
