use std::path::{Path, PathBuf};
use std::process::ExitCode;

use accentvc_core::config::{FrontendConfig, FrontendKind};
use accentvc_core::convert::{batch_convert, Converter};
use accentvc_core::fixtures::{write_corpus, ClipSpec};
use accentvc_core::frontend::provider_from_config;
use accentvc_core::train::{checkpoint_path, load_checkpoint, load_manifest, LossLog, Trainer};
use accentvc_core::{AccentId, Config};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "accentvc", version, about = "Voice-preserving accent conversion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Frontend {
    Cached,
    Synthetic,
}

#[derive(clap::Args)]
struct FrontendArgs {
    /// Source of character posteriors; defaults to the checkpoint's setting.
    #[arg(long, value_enum)]
    frontend: Option<Frontend>,
    /// Directory of `<clip>.chars` files for the cached frontend.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert one clip to a target accent.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        accent: AccentId,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Convert every manifest clip to each listed accent.
    ConvertBatch {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated accent codes, e.g. AM,HI,KO.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        accents: Vec<AccentId>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        frontend: FrontendArgs,
    },
    /// Train (or resume) on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// TOML config; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Receives model.ckpt and losses.csv.
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from `<out-dir>/model.ckpt`.
        #[arg(long)]
        resume: bool,
        /// Stop after this many total iterations instead of train.total_steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Write a small synthetic corpus and manifest for smoke runs.
    SynthCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        clips: usize,
        #[arg(long, default_value_t = 1.5)]
        seconds: f64,
    },
    /// Print the default config as TOML.
    DefaultConfig {
        #[arg(long)]
        tiny: bool,
    },
}

enum Failure {
    Usage(String),
    Items(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn frontend_override(base: &FrontendConfig, args: &FrontendArgs) -> Option<FrontendConfig> {
    if args.frontend.is_none() && args.cache_dir.is_none() {
        return None;
    }
    let mut f = base.clone();
    if let Some(k) = args.frontend {
        f.kind = match k {
            Frontend::Cached => FrontendKind::Cached,
            Frontend::Synthetic => FrontendKind::Synthetic,
        };
    }
    if let Some(d) = &args.cache_dir {
        f.cache_dir = Some(d.to_string_lossy().into_owned());
    }
    Some(f)
}

fn load_converter(checkpoint: &Path, args: &FrontendArgs) -> Result<Converter, Failure> {
    let state = load_checkpoint(checkpoint).map_err(usage)?;
    let mut model = state.model;
    if let Some(f) = frontend_override(&model.config.frontend, args) {
        model.config.frontend = f;
    }
    let provider = provider_from_config(&model.config.frontend).map_err(usage)?;
    Ok(Converter::new(model, provider))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Convert {
            input,
            accent,
            checkpoint,
            output,
            frontend,
        } => {
            let conv = load_converter(&checkpoint, &frontend)?;
            conv.convert_file(&input, accent, &output)
                .map_err(|e| Failure::Items(format!("{}: {e}", input.display())))?;
            println!("{}", output.display());
        }
        Command::ConvertBatch {
            manifest,
            accents,
            out_dir,
            checkpoint,
            frontend,
        } => {
            let entries = load_manifest(&manifest).map_err(usage)?;
            let conv = load_converter(&checkpoint, &frontend)?;
            let report = batch_convert(&conv, &entries, &accents, &out_dir).map_err(usage)?;
            println!("{} outputs, {} failures", report.outputs.len(), report.failures.len());
            for f in &report.failures {
                eprintln!("failed: {} -> {}: {}", f.input.display(), f.accent, f.error);
            }
            if !report.is_success() {
                return Err(Failure::Items(format!("{} items failed", report.failures.len())));
            }
        }
        Command::Train {
            manifest,
            config,
            out_dir,
            resume,
            steps,
        } => {
            std::fs::create_dir_all(&out_dir).map_err(usage)?;
            let ckpt = checkpoint_path(&out_dir);
            let entries = load_manifest(&manifest).map_err(usage)?;
            let mut trainer = if resume {
                let state = load_checkpoint(&ckpt).map_err(usage)?;
                let provider = provider_from_config(&state.model.config.frontend).map_err(usage)?;
                let clips =
                    Trainer::load_clips(&entries, provider.as_ref(), &state.model.config).map_err(usage)?;
                Trainer::new(state, clips).map_err(usage)?
            } else {
                let cfg = match config {
                    Some(p) => Config::load(&p).map_err(usage)?,
                    None => Config::desk(),
                };
                let provider = provider_from_config(&cfg.frontend).map_err(usage)?;
                let clips = Trainer::load_clips(&entries, provider.as_ref(), &cfg).map_err(usage)?;
                Trainer::fresh(cfg, clips).map_err(usage)?
            };
            let until = steps.unwrap_or(trainer.model.config.train.total_steps);
            let mut log = LossLog::open(&out_dir.join("losses.csv")).map_err(usage)?;
            let reports = trainer
                .run(until, Some(&mut log), Some(&ckpt))
                .map_err(|e| Failure::Items(e.to_string()))?;
            if reports.is_empty() {
                trainer.save(&ckpt).map_err(usage)?;
            }
            if let Some(last) = reports.last() {
                println!("iteration {} L_mel {:.4}", last.iteration, last.l_mel);
            }
            println!("{}", ckpt.display());
        }
        Command::SynthCorpus { out_dir, clips, seconds } => {
            let subsets = ["LibriTTS", "VCTK", "SAA", "L2-Arctic", "Indic TTS"];
            let specs: Vec<ClipSpec> = (0..clips)
                .map(|i| ClipSpec {
                    stem: format!("clip{i:03}"),
                    accent: AccentId::ALL[i % AccentId::ALL.len()],
                    subset: subsets[i % subsets.len()].to_string(),
                    samples: (seconds * 16_000.0).round() as usize,
                    seed: i as u64,
                })
                .collect();
            write_corpus(&out_dir, &specs).map_err(usage)?;
            println!("{}", out_dir.join("manifest.jsonl").display());
        }
        Command::DefaultConfig { tiny } => {
            let c = if tiny { Config::tiny() } else { Config::desk() };
            print!("{}", c.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Items(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
