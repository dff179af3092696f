use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psp::ablate::{ablate, Axis, DEFAULT_REPLICATES};
use psp::checkpoint::Checkpoint;
use psp::export::export_artifacts;
use psp::manifest::write_dataset;
use psp::run::{evaluate_checkpoint, load_splits, load_videos, run_train};
use psp::runconfig::RunConfig;
use psp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "psp",
    version,
    about = "Audio-visual event localization with positive sample propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as feature files plus a manifest.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for the feature files and manifest.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, then score on the test split.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a checkpoint on the test split of the configured dataset.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Score every video instead of the test split.
        #[arg(long)]
        all: bool,
    },
    /// Train and score each variant over several seeds.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// `psp-mode`, `tau`, `lambda` or `use-weighting-branch`, optionally
        /// followed by `=v1,v2,...`. Repeat for a cartesian product.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_REPLICATES)]
        replicates: usize,
    },
    /// Write similarity grids, segment weights and embeddings per video.
    Export {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Export at most this many test videos.
        #[arg(long)]
        limit: Option<usize>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Plain-text `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    #[arg(long)]
    psp_mode: Option<String>,
    #[arg(long)]
    supervision: Option<String>,
    #[arg(long)]
    no_weighting_branch: bool,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epochs: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        let flags = [
            ("tau", &self.tau),
            ("psp-mode", &self.psp_mode),
            ("supervision", &self.supervision),
            ("lambda", &self.lambda),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.no_weighting_branch {
            cfg.train.model.use_weighting = false;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out } => {
            let cfg = config.resolve()?;
            let videos = load_videos(&cfg)?;
            let manifest = write_dataset(&out, &videos)?;
            println!("wrote {} videos, manifest {}", videos.len(), manifest.display());
        }
        Command::Train { config } => {
            let cfg = config.resolve()?;
            let result = run_train(&cfg)?;
            print!("{}", result.report.to_text());
            println!("wall-clock-seconds: {:.3}", result.report.wall_clock_seconds);
            println!("checkpoint: {}", cfg.output_dir.join("checkpoint.bin").display());
        }
        Command::Eval {
            config,
            checkpoint,
            all,
        } => {
            let cfg = config.resolve()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = if all {
                load_videos(&cfg)?
            } else {
                load_splits(&cfg)?.test
            };
            let report = evaluate_checkpoint(&ckpt, &cfg, &data)?;
            print!("{}", report.to_text());
            println!("wall-clock-seconds: {:.3}", report.wall_clock_seconds);
        }
        Command::Ablate {
            config,
            axes,
            replicates,
        } => {
            let cfg = config.resolve()?;
            let axes = axes
                .iter()
                .map(|a| Axis::parse(a, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let table = ablate(&cfg, &axes, replicates)?;
            print!("{}", table.to_text());
            let dir = &cfg.output_dir;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = dir.join("ablation.csv");
            std::fs::write(&path, table.to_csv()).map_err(|e| Error::Io { path, source: e })?;
        }
        Command::Export {
            config,
            checkpoint,
            out,
            limit,
        } => {
            let cfg = config.resolve()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut test = load_splits(&cfg)?.test;
            if let Some(k) = limit {
                test.truncate(k);
            }
            let files = export_artifacts(&ckpt, &test, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
