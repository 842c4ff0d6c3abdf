//! Command implementations behind the CLI.
//!
//! Every command creates its output directory, echoes the fully resolved
//! configuration into `resolved_config.txt`, and isolates wall-clock timing
//! in `timing.txt` so that all other artifacts are byte-reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use maskpad_core::catalog::{synth_catalog, Catalog};
use maskpad_core::metrics::{run_protocol_with, video_scores, EvalProtocol};
use maskpad_core::model::ModelState;
use maskpad_core::pairs::{BatchBuilder, PairPattern};
use maskpad_core::protocol::{build_protocol_split_with, ProtocolId, Subset};
use maskpad_core::rppg::{self, LightSchedule};
use maskpad_core::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::Config;
use crate::report;
use crate::storage;

fn prepare_out_dir(out: &Path, config: &Config) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("resolved_config.txt"), config.render())?;
    Ok(())
}

fn write_timing(out: &Path, started: Instant) -> Result<()> {
    fs::write(
        out.join("timing.txt"),
        format!("wall_clock_seconds={:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    Ok(())
}

fn load_catalog(path: &Path) -> Result<Catalog> {
    storage::load_catalog(path)
        .with_context(|| format!("loading catalog from {}", path.display()))
}

pub fn synth(config: &Config, out: &Path) -> Result<()> {
    let started = Instant::now();
    let synth_config = config.synth_config()?;
    let seed: u64 = config
        .get("synth.seed")
        .map(str::parse)
        .transpose()?
        .unwrap_or(0);
    prepare_out_dir(out, config)?;
    let catalog = synth_catalog(&synth_config, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    storage::save_catalog(out, &catalog, Some(&synth_config))?;
    write_timing(out, started)?;
    println!(
        "catalog: {} records ({} subjects, dim {}) -> {}",
        catalog.len(),
        synth_config.subjects,
        catalog.feature_dim,
        out.display()
    );
    Ok(())
}

pub fn pairs_dump(config: &Config, catalog_dir: &Path, out: &Path, count: usize) -> Result<()> {
    let started = Instant::now();
    prepare_out_dir(out, config)?;
    let catalog = load_catalog(catalog_dir)?;
    let train_config = config.train_config()?;
    let patterns: Vec<PairPattern> = train_config
        .patterns
        .iter()
        .map(|&id| PairPattern::new(id).context("pattern ids must lie in 1..=6"))
        .collect::<Result<_>>()?;
    let weights = if train_config.pattern_weights.is_empty() {
        vec![1.0; patterns.len()]
    } else {
        train_config.pattern_weights.clone()
    };
    let view = catalog.full_view();
    let builder = BatchBuilder::new(&view, &patterns, &weights, train_config.balance_polarity)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    for skipped in &builder.skipped_patterns {
        eprintln!("warning: pattern {skipped} has no valid pair and was skipped");
    }
    let mut rng = ChaCha12Rng::seed_from_u64(train_config.seed);
    let pairs = builder
        .build_batch(&view, count, &mut rng)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::write(out.join("pairs.csv"), report::render_pairs_csv(&catalog, &pairs))?;
    write_timing(out, started)?;
    println!("wrote {count} pairs -> {}", out.join("pairs.csv").display());
    Ok(())
}

fn parse_protocol(raw: &str) -> Result<EvalProtocol> {
    EvalProtocol::parse(raw)
        .with_context(|| format!("unknown protocol `{raw}`; expected 1, 2, 2_1, 2_2, 2_3 or 3"))
}

fn split_protocol_id(protocol: EvalProtocol) -> Result<ProtocolId> {
    match protocol {
        EvalProtocol::Single(id) => Ok(id),
        EvalProtocol::P2Aggregate => {
            bail!("training needs a concrete split; use protocol 2_1, 2_2 or 2_3")
        }
    }
}

pub struct TrainOutcome {
    pub state: ModelState,
    pub checkpoint: PathBuf,
}

pub fn train_command(
    config: &Config,
    catalog_dir: &Path,
    out: &Path,
    protocol_raw: &str,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    prepare_out_dir(out, config)?;
    let catalog = load_catalog(catalog_dir)?;
    let protocol_id = split_protocol_id(parse_protocol(protocol_raw)?)?;
    let split_seed: u64 = config
        .get("eval.split_seed")
        .map(str::parse)
        .transpose()?
        .unwrap_or(7);
    let split = build_protocol_split_with(protocol_id, &catalog, split_seed, &config.p3_restriction()?)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let train_config = config.train_config()?;
    let (state, log) = train(&catalog, &split, &train_config).map_err(|e| anyhow::anyhow!("{e}"))?;
    for skipped in &log.skipped_patterns {
        eprintln!("warning: pattern {skipped} has no valid pair and was skipped");
    }
    let checkpoint = out.join("checkpoint.bin");
    storage::save_checkpoint(&checkpoint, &state)?;
    fs::write(out.join("train_log.csv"), report::render_train_log_csv(&log))?;
    if let Some(audit) = report::render_cgd_audit_csv(&log) {
        fs::write(out.join("cgd_audit.csv"), audit)?;
    }
    write_timing(out, started)?;
    println!(
        "trained protocol {protocol_id} for {} epochs ({} steps) -> {}",
        train_config.epochs,
        log.steps.len(),
        checkpoint.display()
    );
    Ok(TrainOutcome { state, checkpoint })
}

pub fn eval_command(
    config: &Config,
    catalog_dir: &Path,
    checkpoint: &Path,
    out: &Path,
    protocol_raw: &str,
) -> Result<()> {
    let started = Instant::now();
    prepare_out_dir(out, config)?;
    let catalog = load_catalog(catalog_dir)?;
    let state = storage::load_checkpoint(checkpoint)?;
    let protocol = parse_protocol(protocol_raw)?;
    let split_seed: u64 = config
        .get("eval.split_seed")
        .map(str::parse)
        .transpose()?
        .unwrap_or(7);
    let rule = config.threshold_rule()?;
    let p3 = config.p3_restriction()?;
    let report_data = run_protocol_with(&state, &catalog, protocol, split_seed, rule, &p3)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::write(out.join("report.txt"), report::render_report(&report_data))?;

    // Test-set scores for external ROC plotting; the aggregate protocol
    // exports each subprotocol separately.
    let export = |id: ProtocolId, name: &str| -> Result<()> {
        let split = build_protocol_split_with(id, &catalog, split_seed, &p3)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let scores = video_scores(&state, &split.view(&catalog, Subset::Test))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        fs::write(out.join(name), report::render_scores_csv(&scores))?;
        Ok(())
    };
    match protocol {
        EvalProtocol::Single(id) => export(id, "scores.csv")?,
        EvalProtocol::P2Aggregate => {
            export(ProtocolId::P2_1, "scores_p2_1.csv")?;
            export(ProtocolId::P2_2, "scores_p2_2.csv")?;
            export(ProtocolId::P2_3, "scores_p2_3.csv")?;
        }
    }
    write_timing(out, started)?;
    println!(
        "protocol {}: acer {:.4} auc {:.4} -> {}",
        report_data.protocol,
        report_data.acer,
        report_data.auc,
        out.join("report.txt").display()
    );
    Ok(())
}

/// Train+evaluate one arm per value of the swept parameter.
pub fn ablate(
    config: &Config,
    catalog_dir: &Path,
    out: &Path,
    protocol_raw: &str,
    sweep: Option<&str>,
    cgd_variants: Option<&str>,
) -> Result<()> {
    let started = Instant::now();
    prepare_out_dir(out, config)?;
    let catalog = load_catalog(catalog_dir)?;
    let protocol_id = split_protocol_id(parse_protocol(protocol_raw)?)?;
    let split_seed: u64 = config
        .get("eval.split_seed")
        .map(str::parse)
        .transpose()?
        .unwrap_or(7);
    let rule = config.threshold_rule()?;

    // (arm label, config key, value) triples.
    let mut arms: Vec<(String, String, String)> = Vec::new();
    match (sweep, cgd_variants) {
        (Some(spec), None) => {
            let (key, values) = spec
                .split_once('=')
                .context("--sweep expects key=v1,v2,...")?;
            let key = match key {
                "lambda_con" => "train.lambda_con",
                other => other,
            };
            for value in values.split(',') {
                arms.push((
                    format!("{}={}", key.rsplit('.').next().unwrap(), value.trim()),
                    key.to_string(),
                    value.trim().to_string(),
                ));
            }
        }
        (None, Some(list)) => {
            for variant in list.split(',') {
                arms.push((
                    format!("cgd={}", variant.trim()),
                    "cgd.variant".to_string(),
                    variant.trim().to_string(),
                ));
            }
        }
        _ => bail!("ablate needs exactly one of --sweep or --cgd-variants"),
    }

    let p3 = config.p3_restriction()?;
    let split = build_protocol_split_with(protocol_id, &catalog, split_seed, &p3)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut summary = String::from("arm,apcer,bpcer,acer,auc,threshold\n");
    for (label, key, value) in &arms {
        let mut arm_config = config.clone();
        arm_config.set(key, value.clone());
        let train_config: TrainConfig = arm_config.train_config()?;
        let (state, _) =
            train(&catalog, &split, &train_config).map_err(|e| anyhow::anyhow!("{e}"))?;
        let report_data = run_protocol_with(
            &state,
            &catalog,
            EvalProtocol::Single(protocol_id),
            split_seed,
            rule,
            &p3,
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        let arm_dir = out.join(label.replace('=', "_"));
        fs::create_dir_all(&arm_dir)?;
        fs::write(arm_dir.join("report.txt"), report::render_report(&report_data))?;
        storage::save_checkpoint(&arm_dir.join("checkpoint.bin"), &state)?;
        summary.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            report_data.apcer,
            report_data.bpcer,
            report_data.acer,
            report_data.auc,
            report_data.threshold.unwrap_or(f64::NAN)
        ));
        println!("arm {label}: acer {:.4} auc {:.4}", report_data.acer, report_data.auc);
    }
    fs::write(out.join("summary.csv"), summary)?;
    write_timing(out, started)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn rppg_command(
    config: &Config,
    out: &Path,
    live: bool,
    pulse_hz: f64,
    light: &str,
    light_freq: f64,
    light_amplitude: f64,
    base_lux: f64,
    duration_s: f64,
    frame_rate: f64,
    noise: f64,
    seed: u64,
) -> Result<()> {
    let started = Instant::now();
    prepare_out_dir(out, config)?;
    let schedule = match light {
        "constant" => LightSchedule::constant(base_lux),
        "periodic" => LightSchedule::periodic(light_freq, light_amplitude, base_lux),
        other => bail!("unknown light mode `{other}`; expected constant or periodic"),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let trace = rppg::synth_trace(
        live, pulse_hz, &schedule, duration_s, frame_rate, noise, &mut rng,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let signal = rppg::extract_rppg(&trace);
    let (freqs, power) = rppg::psd(&signal, frame_rate).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (peak_freq, score) =
        rppg::periodicity_score(&freqs, &power, rppg::PERIODIC_LIGHT_BAND)
            .map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut trace_csv = String::from("t,r,g,b,rppg\n");
    for i in 0..trace.len() {
        trace_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i as f64 / frame_rate,
            trace.channels[0][i],
            trace.channels[1][i],
            trace.channels[2][i],
            signal[i]
        ));
    }
    fs::write(out.join("trace.csv"), trace_csv)?;
    let mut spectrum_csv = String::from("frequency_hz,power\n");
    for (f, p) in freqs.iter().zip(&power) {
        spectrum_csv.push_str(&format!("{f},{p}\n"));
    }
    fs::write(out.join("spectrum.csv"), spectrum_csv)?;
    fs::write(
        out.join("report.txt"),
        format!(
            "is_live={live}\npulse_hz={pulse_hz}\nlight={light}\nlight_freq_hz={light_freq}\n\
             peak_freq_hz={peak_freq}\nperiodicity_score={score}\n"
        ),
    )?;
    write_timing(out, started)?;
    println!("peak {peak_freq} Hz, periodicity score {score:.2} -> {}", out.display());
    Ok(())
}
