//! Ridge / +PFA / +PFA+NDA on the synthetic shifted benchmark.
//!
//! `cargo run --release --example ablation -- [episodes] [seeds] [key=value ...]`

use std::time::Instant;

use dara::data::{gen_synthetic, KvConfig, SynthConfig};
use dara::pipeline::{evaluate, pretrain_source, TrainConfig};

fn main() -> dara::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let episodes: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(50);
    let seeds: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let mut kv = KvConfig::new();
    for pair in args.iter().skip(2) {
        kv.set_pair(pair)?;
    }
    let synth_base = SynthConfig::from_kv(&kv)?;
    let mut train_kv = kv.clone();
    for k in dara::data::SYNTH_KEYS {
        if *k != "seed" && *k != "query_offset" {
            train_kv = without(&train_kv, k);
        }
    }
    let base = TrainConfig::from_kv(&train_kv)?;
    let configs = [
        ("ridge", false, false, false),
        ("+pfa", true, true, false),
        ("+pfa+nda", true, true, true),
    ];
    for seed in 0..seeds {
        let start = Instant::now();
        let synth = SynthConfig { seed, ..synth_base.clone() };
        let (source, target, shift) = gen_synthetic(&synth)?;
        let cfg = TrainConfig {
            seed,
            episodes,
            query_offset: shift.offset,
            ..base.clone()
        };
        let (model, log) = pretrain_source(&source, &cfg)?;
        println!(
            "seed {seed}: pretrain loss {:.4} -> {:.4}, acc {:.3} ({:.1}s)",
            log.loss[0],
            log.loss.last().unwrap(),
            log.accuracy.last().unwrap(),
            start.elapsed().as_secs_f64()
        );
        for (name, recal, ft, nda) in configs {
            let t = Instant::now();
            let run = TrainConfig {
                use_recalibration: recal,
                use_reprojection_finetune: ft,
                use_nda: nda,
                ..cfg.clone()
            };
            let r = evaluate(&target, &model, &run, 1)?;
            println!(
                "  {name:<10} {:.4} +- {:.4} ({:.1}s)",
                r.mean,
                r.ci95,
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

fn without(kv: &KvConfig, key: &str) -> KvConfig {
    let mut out = KvConfig::new();
    for (k, v) in kv.iter().filter(|(k, _)| *k != key) {
        out.set(k, v);
    }
    out
}
