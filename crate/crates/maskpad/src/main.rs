//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on a usage error (unknown command or flag),
//! 2 on a runtime error (bad config, unsatisfiable patterns, non-finite
//! loss, IO failures).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskpad::commands;
use maskpad::config::Config;

#[derive(Parser)]
#[command(
    name = "maskpad",
    about = "Synthetic mask-PAD experiments: contextual catalogs, contrastive training, \
             evaluation protocols and an rPPG interference simulator",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (key=value with [section] headers).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Override a config key, e.g. --set train.epochs=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog directory.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Generator seed (shorthand for --set synth.seed=N).
        #[arg(long)]
        seed: Option<u64>,
        /// Subject count (shorthand for --set synth.subjects=N).
        #[arg(long)]
        subjects: Option<u32>,
    },
    /// Pair-generation utilities.
    Pairs {
        #[command(subcommand)]
        action: PairsAction,
    },
    /// Train a model on one protocol split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Catalog directory produced by `synth`.
        #[arg(long)]
        catalog: PathBuf,
        /// Protocol id: 1, 2_1, 2_2, 2_3 or 3.
        #[arg(long, default_value = "1")]
        protocol: String,
        /// Training seed (shorthand for --set train.seed=N).
        #[arg(long)]
        seed: Option<u64>,
        /// Record per-step drop decisions in cgd_audit.csv.
        #[arg(long)]
        cgd_audit: bool,
    },
    /// Evaluate a checkpoint under a protocol.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Protocol id: 1, 2 (aggregate), 2_1, 2_2, 2_3 or 3.
        #[arg(long, default_value = "1")]
        protocol: String,
        /// Threshold rule: eer, bpcer@<rate> or fixed@<theta>.
        #[arg(long)]
        threshold_rule: Option<String>,
        /// Seed of the subject partition.
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Train+evaluate one arm per swept value.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, default_value = "1")]
        protocol: String,
        /// Parameter sweep, e.g. lambda_con=0,0.1,0.7,1.0.
        #[arg(long)]
        sweep: Option<String>,
        /// Comma-separated dropout variants, e.g. standard,reverse,bobe,off.
        #[arg(long, alias = "cgd-variant")]
        cgd_variants: Option<String>,
    },
    /// Synthesise one ROI trace and analyse its spectrum.
    Rppg {
        #[command(flatten)]
        common: Common,
        /// live or mask.
        #[arg(long, default_value = "live")]
        mode: String,
        /// Pulse rate in Hz (live traces).
        #[arg(long, default_value_t = 1.2)]
        pulse: f64,
        /// constant or periodic.
        #[arg(long, default_value = "constant")]
        light: String,
        /// Periodic light frequency in Hz (0.7..=4.0).
        #[arg(long, default_value_t = 2.0)]
        light_freq: f64,
        /// Light modulation amplitude relative to the baseline.
        #[arg(long, default_value_t = 0.02)]
        light_amplitude: f64,
        /// Ambient intensity in lux (400..=1600).
        #[arg(long, default_value_t = 800.0)]
        lux: f64,
        /// Trace duration in seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Frame rate in Hz.
        #[arg(long, default_value_t = 30.0)]
        rate: f64,
        /// White-noise level.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PairsAction {
    /// Sample pairs and write them as pattern_id,sample_id_a,sample_id_b,pair_label.
    Dump {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: PathBuf,
        /// Number of pairs to draw.
        #[arg(long, default_value_t = 1024)]
        count: usize,
        /// Sampling seed (shorthand for --set train.seed=N).
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn resolve_config(common: &Common, extra: &[(&str, Option<String>)]) -> anyhow::Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    config.apply_overrides(&common.overrides)?;
    // Dedicated flags win over --set so that the most explicit spelling is
    // authoritative.
    for (key, value) in extra {
        if let Some(v) = value {
            config.set(key, v.clone());
        }
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            common,
            seed,
            subjects,
        } => {
            let config = resolve_config(
                &common,
                &[
                    ("synth.seed", seed.map(|s| s.to_string())),
                    ("synth.subjects", subjects.map(|s| s.to_string())),
                ],
            )?;
            commands::synth(&config, &common.out)
        }
        Command::Pairs {
            action: PairsAction::Dump {
                common,
                catalog,
                count,
                seed,
            },
        } => {
            let config =
                resolve_config(&common, &[("train.seed", seed.map(|s| s.to_string()))])?;
            commands::pairs_dump(&config, &catalog, &common.out, count)
        }
        Command::Train {
            common,
            catalog,
            protocol,
            seed,
            cgd_audit,
        } => {
            let config = resolve_config(
                &common,
                &[
                    ("train.seed", seed.map(|s| s.to_string())),
                    ("train.cgd_audit", cgd_audit.then(|| "true".to_string())),
                ],
            )?;
            commands::train_command(&config, &catalog, &common.out, &protocol).map(|_| ())
        }
        Command::Eval {
            common,
            catalog,
            checkpoint,
            protocol,
            threshold_rule,
            split_seed,
        } => {
            let config = resolve_config(
                &common,
                &[
                    ("eval.threshold_rule", threshold_rule),
                    ("eval.split_seed", split_seed.map(|s| s.to_string())),
                ],
            )?;
            commands::eval_command(&config, &catalog, &checkpoint, &common.out, &protocol)
        }
        Command::Ablate {
            common,
            catalog,
            protocol,
            sweep,
            cgd_variants,
        } => {
            let config = resolve_config(&common, &[])?;
            commands::ablate(
                &config,
                &catalog,
                &common.out,
                &protocol,
                sweep.as_deref(),
                cgd_variants.as_deref(),
            )
        }
        Command::Rppg {
            common,
            mode,
            pulse,
            light,
            light_freq,
            light_amplitude,
            lux,
            duration,
            rate,
            noise,
            seed,
        } => {
            let config = resolve_config(&common, &[])?;
            let live = match mode.as_str() {
                "live" => true,
                "mask" => false,
                other => anyhow::bail!("unknown mode `{other}`; expected live or mask"),
            };
            commands::rppg_command(
                &config,
                &common.out,
                live,
                pulse,
                &light,
                light_freq,
                light_amplitude,
                lux,
                duration,
                rate,
                noise,
                seed,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = err.print();
                return ExitCode::SUCCESS;
            }
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
