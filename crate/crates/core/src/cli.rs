//! `dara` command line: `synth | pretrain | finetune | eval | hist | inspect`.
//!
//! Every command reads a flat `key = value` config (`-c FILE`) with
//! `-s key=value` overrides applied on top. Exit status is 0 on success, 2
//! on a config error (the message names the key) and 1 on any other failure.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
use crate::data::{gen_synthetic, load_bank, parse_header, save_bank, FeatureBank, KvConfig, SynthConfig, SYNTH_KEYS};
use crate::error::{DaraError, Result};
use crate::pipeline::{adapt, distance_histogram, draw_episode, evaluate, pretrain_source, write_histogram_csv, Model, TrainConfig, TRAIN_KEYS};
use crate::rng;

/// Keys naming files read or written by commands.
pub const PATH_KEYS: &[&str] = &[
    "source_bank",
    "target_bank",
    "checkpoint",
    "finetuned",
    "report",
    "report_csv",
    "histogram",
];

pub const WORKERS_ENV: &str = "DARA_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "dara", version, about = "Cross-domain few-shot engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic source and target banks.
    Synth(ConfigArgs),
    /// Train the backbone on the source bank.
    Pretrain(ConfigArgs),
    /// Adapt a pretrained checkpoint to one target episode.
    Finetune(ConfigArgs),
    /// Evaluate on independent target episodes.
    Eval(ConfigArgs),
    /// Export true-class distances with and without alignment.
    Hist(ConfigArgs),
    /// Print the header of a bank or checkpoint file.
    Inspect {
        path: PathBuf,
    },
}

/// Every key accepted in a config, sorted.
pub fn known_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = TRAIN_KEYS.iter().chain(SYNTH_KEYS).chain(PATH_KEYS).copied().collect();
    keys.push("workers");
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Merges the config file and overrides, rejecting unknown keys.
pub fn effective_config(args: &ConfigArgs) -> Result<KvConfig> {
    let mut kv = match &args.config {
        Some(p) => KvConfig::from_file(p)?,
        None => KvConfig::new(),
    };
    for pair in &args.set {
        kv.set_pair(pair)?;
    }
    kv.check_known(&known_keys())?;
    Ok(kv)
}

/// `workers` key, then `DARA_WORKERS`, then 1.
pub fn workers(kv: &KvConfig) -> Result<usize> {
    let n = match kv.get::<usize>("workers")? {
        Some(n) => n,
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| DaraError::config("workers", format!("{WORKERS_ENV}=`{v}` is not a count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(DaraError::config("workers", "must be >= 1"));
    }
    Ok(n)
}

fn input_path(kv: &KvConfig, key: &str) -> Result<PathBuf> {
    let p: PathBuf = kv.require::<String>(key)?.into();
    if !p.is_file() {
        return Err(DaraError::config(key, format!("file not found: {}", p.display())));
    }
    Ok(p)
}

fn output_path(kv: &KvConfig, key: &str) -> Result<PathBuf> {
    Ok(kv.require::<String>(key)?.into())
}

fn load_target(kv: &KvConfig, model: &Model) -> Result<FeatureBank> {
    let bank = load_bank(input_path(kv, "target_bank")?)?;
    if bank.channels() != model.backbone.in_channels() {
        return Err(DaraError::ChannelMismatch {
            expected: model.backbone.in_channels(),
            found: bank.channels(),
        });
    }
    Ok(bank)
}

fn synth(kv: &KvConfig) -> Result<()> {
    let cfg = SynthConfig::from_kv(kv)?;
    let source_path = output_path(kv, "source_bank")?;
    let target_path = output_path(kv, "target_bank")?;
    let (source, target, shift) = gen_synthetic(&cfg)?;
    save_bank(&source, &source_path)?;
    save_bank(&target, &target_path)?;
    println!(
        "wrote {} ({} items) and {} ({} items); query_offset = {}",
        source_path.display(),
        source.len(),
        target_path.display(),
        target.len(),
        shift.offset
    );
    Ok(())
}

fn pretrain(kv: &KvConfig) -> Result<()> {
    let cfg = TrainConfig::from_kv(kv)?;
    let source = load_bank(input_path(kv, "source_bank")?)?;
    let out = output_path(kv, "checkpoint")?;
    let (model, log) = pretrain_source(&source, &cfg)?;
    Checkpoint {
        model,
        z: None,
        config_digest: cfg.digest(),
    }
    .save(&out)?;
    println!(
        "pretrained {} epochs: loss {:.6} -> {:.6}, train accuracy {:.4}; wrote {}",
        log.loss.len(),
        log.loss.first().copied().unwrap_or(f64::NAN),
        log.loss.last().copied().unwrap_or(f64::NAN),
        log.accuracy.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn finetune(kv: &KvConfig) -> Result<()> {
    let cfg = TrainConfig {
        use_reprojection_finetune: true,
        ..TrainConfig::from_kv(kv)?
    };
    let ckpt = Checkpoint::load(input_path(kv, "checkpoint")?)?;
    let target = load_target(kv, &ckpt.model)?;
    let out = output_path(kv, "finetuned")?;
    let episode = draw_episode(&target, &cfg, 0)?;
    let mut r = rng::stream(cfg.seed, 0, rng::FINETUNE);
    let adapted = adapt(&ckpt.model, &episode.support, &cfg, &mut r)?;
    Checkpoint {
        model: Model {
            backbone: adapted.backbone,
            measure: adapted.measure,
            gate: adapted.gate,
            base: ckpt.model.base,
        },
        z: adapted.z,
        config_digest: cfg.digest(),
    }
    .save(&out)?;
    println!("finetuned on target classes {:?}; wrote {}", episode.classes, out.display());
    Ok(())
}

fn eval(kv: &KvConfig) -> Result<()> {
    let cfg = TrainConfig::from_kv(kv)?;
    let workers = workers(kv)?;
    let ckpt = Checkpoint::load(input_path(kv, "checkpoint")?)?;
    let target = load_target(kv, &ckpt.model)?;
    let out = output_path(kv, "report")?;
    let report = evaluate(&target, &ckpt.model, &cfg, workers)?;
    fs::write(&out, report.to_json())?;
    if let Some(csv) = kv.get::<String>("report_csv")? {
        report.write_csv(BufWriter::new(fs::File::create(csv)?))?;
    }
    println!(
        "accuracy {:.4} +- {:.4} over {} episodes; wrote {}",
        report.mean,
        report.ci95,
        report.episodes,
        out.display()
    );
    Ok(())
}

fn hist(kv: &KvConfig) -> Result<()> {
    let cfg = TrainConfig::from_kv(kv)?;
    let workers = workers(kv)?;
    let ckpt = Checkpoint::load(input_path(kv, "checkpoint")?)?;
    let target = load_target(kv, &ckpt.model)?;
    let out = output_path(kv, "histogram")?;
    let rows = distance_histogram(&target, &ckpt.model, &cfg, workers)?;
    write_histogram_csv(&rows, BufWriter::new(fs::File::create(&out)?))?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

/// Header dump of a bank or checkpoint file.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        return Ok(Checkpoint::from_bytes(&bytes)?.describe());
    }
    let h = parse_header(&bytes)?;
    FeatureBank::from_bytes(&bytes)?;
    Ok(format!(
        "magic: DARAFB01\nnum_items: {}\nwidth: {}\nheight: {}\nchannels: {}\nclass_count: {}\n",
        h.num_items, h.width, h.height, h.channels, h.class_count
    ))
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&effective_config(a)?),
        Command::Pretrain(a) => pretrain(&effective_config(a)?),
        Command::Finetune(a) => finetune(&effective_config(a)?),
        Command::Eval(a) => eval(&effective_config(a)?),
        Command::Hist(a) => hist(&effective_config(a)?),
        Command::Inspect { path } => {
            print!("{}", inspect(path)?);
            Ok(())
        }
    }
}

/// Runs one command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e @ DaraError::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
