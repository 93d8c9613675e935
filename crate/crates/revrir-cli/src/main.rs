//! Command pipeline for room-fingerprint experiments: catalog and RIR-bank
//! generation, dataset assembly, contrastive pre-training, head fine-tuning,
//! the RIR-feature baseline, evaluation, and report rendering.
//!
//! Exit codes: 0 success, 2 validation/config, 3 missing or malformed data,
//! 4 numeric failure (NaN/Inf).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use revrir_cli::config::{Preset, RunConfig};
use revrir_cli::pipeline::{self, EvalSet, Paths};
use revrir::error::Error;
use revrir::tasks::finetune::EncoderChoice;

#[derive(Parser)]
#[command(name = "revrir", about = "Room fingerprinting from reverberant audio", version)]
struct Cli {
    /// Configuration file (JSON); defaults come from --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration preset.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: PresetArg,

    /// Random seed (overrides config and environment).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for generation stages (1 = deterministic reference).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Speech,
    Rir,
}

#[derive(Clone, Copy, ValueEnum)]
enum SetArg {
    Speech,
    Rir,
}

#[derive(Clone, Copy, ValueEnum)]
enum CollapseArg {
    Rooms,
    Types,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the room catalog and write it as text.
    Catalog,
    /// Simulate the RIR bank for the catalog.
    GenRirs,
    /// Synthesize sources, split, and write the dataset manifest.
    BuildData {
        /// Write the source pool as WAV files and reference them by path.
        #[arg(long)]
        export_wavs: bool,
    },
    /// Contrastive pre-training of the dual encoder.
    Pretrain,
    /// Train a classification head over a pre-trained encoder.
    Finetune {
        #[arg(long, value_enum, default_value = "speech")]
        encoder: EncoderArg,
        /// Train the head only, leaving the encoder untouched.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        frozen: bool,
        /// Comma-separated seed list; reports mean +/- std over seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Train and evaluate the 30-feature RIR baseline.
    Baseline,
    /// Evaluate a fine-tuned head on the held-out split.
    Evaluate {
        #[arg(long, value_enum, default_value = "speech")]
        encoder: EncoderArg,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        frozen: bool,
        /// Which held-out inputs to score: reverberant speech or RIRs.
        #[arg(long, value_enum, default_value = "speech")]
        set: SetArg,
        /// Score fine room classes only, or also collapse to the 3 types.
        #[arg(long, value_enum, default_value = "types")]
        collapse: CollapseArg,
    },
    /// Render metrics files into a text report with multi-seed summaries.
    Report,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::Geometry(_)
        | Error::Sampling(_)
        | Error::Lookup(_)
        | Error::Config(_)
        | Error::State(_) => 2,
        Error::Data(_) | Error::Format(_) | Error::Io(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn kind_for(err: &Error) -> &'static str {
    match err {
        Error::Numeric(_) => "numeric",
        Error::Data(_) | Error::Format(_) | Error::Io(_) => "data",
        _ => "validation",
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let preset = match cli.preset {
        PresetArg::Paper => Preset::Paper,
        PresetArg::Desk => Preset::Desk,
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => RunConfig::preset(preset),
    };
    let mut overrides = cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        overrides.push(format!("--seed {seed}"));
    }
    let paths = Paths::new(&cli.out);

    match cli.command {
        Command::Catalog => {
            pipeline::write_run_record(&paths, "catalog", &cfg, &overrides)?;
            pipeline::cmd_catalog(&cfg, &paths)
        }
        Command::GenRirs => {
            pipeline::write_run_record(&paths, "gen-rirs", &cfg, &overrides)?;
            pipeline::cmd_gen_rirs(&cfg, &paths, cli.jobs.max(1))
        }
        Command::BuildData { export_wavs } => {
            pipeline::write_run_record(&paths, "build-data", &cfg, &overrides)?;
            pipeline::cmd_build_data(&cfg, &paths, export_wavs)
        }
        Command::Pretrain => {
            pipeline::write_run_record(&paths, "pretrain", &cfg, &overrides)?;
            pipeline::cmd_pretrain(&cfg, &paths).map(|_| ())
        }
        Command::Finetune { encoder, frozen, seeds } => {
            pipeline::write_run_record(&paths, "finetune", &cfg, &overrides)?;
            let encoder = match encoder {
                EncoderArg::Speech => EncoderChoice::Speech,
                EncoderArg::Rir => EncoderChoice::Rir,
            };
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            let summary = pipeline::cmd_finetune(&cfg, &paths, encoder, frozen, &seeds)?;
            if let Some((seed, acc)) = summary
                .per_seed_top1
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            {
                println!("finetune: best seed {seed} with top-1 {acc:.3}");
            }
            Ok(())
        }
        Command::Baseline => {
            pipeline::write_run_record(&paths, "baseline", &cfg, &overrides)?;
            pipeline::cmd_baseline(&cfg, &paths).map(|_| ())
        }
        Command::Evaluate { encoder, frozen, set, collapse } => {
            pipeline::write_run_record(&paths, "evaluate", &cfg, &overrides)?;
            let encoder = match encoder {
                EncoderArg::Speech => EncoderChoice::Speech,
                EncoderArg::Rir => EncoderChoice::Rir,
            };
            let set = match set {
                SetArg::Speech => EvalSet::Speech,
                SetArg::Rir => EvalSet::Rir,
            };
            let collapse = matches!(collapse, CollapseArg::Types);
            pipeline::cmd_evaluate(&cfg, &paths, encoder, frozen, set, collapse, cfg.seed).map(|_| ())
        }
        Command::Report => pipeline::cmd_report(&paths),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error kind={} code={} msg=\"{err}\"", kind_for(&err), exit_code_for(&err));
            ExitCode::from(exit_code_for(&err))
        }
    }
}
