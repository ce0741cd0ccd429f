use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use moodbase::pipeline::{run_command, Command, LoadedConfig};
use moodbase::{Error, Exec};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    /// Parse, filter, resolve and bin the input records
    Ingest,
    /// Fit baseline models and the comparison table
    Fit,
    /// Score test bins, rank deviations and merge events
    Detect,
    /// Write the event report and per-city timelines
    Report,
    /// Generate a synthetic corpus from the `synth` config section
    Synth,
    /// Compare detections with a synthetic ground truth
    Eval,
    /// ingest, fit, detect and report (plus eval when a manifest exists)
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Fit => Command::Fit,
            Cmd::Detect => Command::Detect,
            Cmd::Report => Command::Report,
            Cmd::Synth => Command::Synth,
            Cmd::Eval => Command::Eval,
            Cmd::All => Command::All,
        }
    }
}

/// Sentiment baselines and localized deviation detection.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Pipeline config (JSON); relative paths inside it resolve against its directory
    #[arg(long)]
    config: PathBuf,
    /// Input NDJSON file, overriding the config
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory, overriding the config
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Generator seed for `synth`, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Number of top events evaluated, overriding the config
    #[arg(long)]
    top_k: Option<usize>,
    /// Run every stage on one thread
    #[arg(long)]
    sequential: bool,
}

fn absolute(p: PathBuf) -> Result<PathBuf, Error> {
    if p.is_absolute() {
        return Ok(p);
    }
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    Ok(cwd.join(p))
}

fn load(args: &Args) -> Result<LoadedConfig, Error> {
    let loaded = LoadedConfig::load(&args.config)?;
    let mut cfg = loaded.config;
    if let Some(p) = &args.input {
        cfg.input = Some(absolute(p.clone())?);
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = absolute(p.clone())?;
    }
    if let Some(k) = args.top_k {
        cfg.top_k = k;
    }
    if let Some(seed) = args.seed {
        let synth = cfg
            .synth
            .as_mut()
            .ok_or_else(|| Error::Validation("--seed given but the config has no `synth` section".into()))?;
        synth.generator.seed = seed;
    }
    LoadedConfig::from_config(cfg, loaded.base_dir)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let exec = if args.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = load(&args).and_then(|lc| run_command(args.command.into(), &lc, exec));
    match result {
        Ok(outputs) => {
            for o in outputs {
                println!("{o}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 3 })
        }
    }
}
