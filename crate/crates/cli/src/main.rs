//! `msgldm` — dataset generation, training, synthesis, evaluation, ablation,
//! and self-verification for the multi-modal translation model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msgldm_core::data::Split;
use msgldm_core::Error;

use msgldm_cli::{commands, config::RunConfig, verify};

#[derive(Parser)]
#[command(name = "msgldm", about = "multi-modal MRI-style image translation on phantoms")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every subsystem seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the phantom dataset and its manifest
    Gen,
    /// Pretrain the autoencoder, then train the main model
    Train,
    /// Synthesize one missing modality for a test sample
    Synth {
        /// 4-bit availability code ordered t1,t2,t1ce,flair (e.g. 1110)
        #[arg(long)]
        code: String,
        /// Target modality (name or index); must be 0 in the code
        #[arg(long)]
        target: String,
        /// Sample id; defaults to the first test sample
        #[arg(long)]
        sample_id: Option<String>,
        /// Sampler step count override
        #[arg(long)]
        steps: Option<usize>,
        /// Timesteps at which to store denoising snapshots
        #[arg(long, value_delimiter = ',')]
        snapshots: Vec<usize>,
    },
    /// Synthesize every (sample, target, code) cell and report metrics
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and compare ablated variants
    Ablate {
        /// Variant names; defaults to all six
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![42u64, 43, 44])]
        seeds: Vec<u64>,
    },
    /// Run the built-in property suite
    Verify,
}

fn parse_split(s: &str) -> Result<Split, Error> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::invalid("split", format!("unknown split {other:?}"))),
    }
}

fn is_validation_error(e: &Error) -> bool {
    matches!(e, Error::Invalid { .. } | Error::Config(_) | Error::ShapeMismatch { .. })
}

fn run(cli: Cli) -> Result<(), Error> {
    if matches!(cli.command, Command::Verify) {
        return match verify::cmd_verify()? {
            true => Ok(()),
            false => Err(Error::invalid("verify", "property suite failed")),
        };
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    cfg.resolve()?;
    cfg.persist_resolved(&cli.out)?;
    match cli.command {
        Command::Gen => commands::cmd_gen(&cfg, &cli.out),
        Command::Train => commands::cmd_train(&cfg, &cli.out),
        Command::Synth { code, target, sample_id, steps, snapshots } => commands::cmd_synth(
            &cfg,
            &cli.out,
            &commands::SynthArgs { code, target, sample_id, steps, snapshots },
        ),
        Command::Eval { split } => commands::cmd_eval(&cfg, &cli.out, parse_split(&split)?),
        Command::Ablate { variants, seeds } => {
            let variants = if variants.is_empty() {
                commands::ABLATION_VARIANTS.iter().map(|s| s.to_string()).collect()
            } else {
                variants
            };
            commands::cmd_ablate(&cfg, &cli.out, &variants, &seeds)
        }
        Command::Verify => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verifying = matches!(cli.command, Command::Verify);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if verifying {
                ExitCode::from(3)
            } else if is_validation_error(&e) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
