use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{sample_episode, Episode, FeatureBank, QueryShift};
use crate::error::{DaraError, Result};
use crate::pipeline::query::{accuracy, run_episode};
use crate::pipeline::{Model, TrainConfig};
use crate::rng;

/// Accuracy summary over independent episodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean: f64,
    /// `1.96 * sd / sqrt(E)` with the population standard deviation.
    pub ci95: f64,
    pub episodes: usize,
    pub per_episode: Vec<f64>,
    pub config_digest: String,
}

impl EvalReport {
    pub fn from_accuracies(per_episode: Vec<f64>, config_digest: String) -> Self {
        let (mean, ci95) = mean_ci95(&per_episode);
        EvalReport {
            mean,
            ci95,
            episodes: per_episode.len(),
            per_episode,
            config_digest,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// `episode,accuracy` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "episode,accuracy")?;
        for (i, a) in self.per_episode.iter().enumerate() {
            writeln!(w, "{i},{a}")?;
        }
        Ok(())
    }
}

/// Mean and 95% half-width of `values`; both 0 when empty.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// Runs `f(0..n)` on `workers` threads; results come back in index order.
pub fn par_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DaraError::Io(std::io::Error::other(e)))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Episode `index` of a run: a pure function of (bank, config, index).
pub fn draw_episode(target: &FeatureBank, cfg: &TrainConfig, index: usize) -> Result<Episode> {
    let mut r = rng::stream(cfg.seed, index as u64, rng::EPISODE);
    let mut episode = sample_episode(target, &cfg.episode_spec(), &mut r)?;
    QueryShift {
        offset: cfg.query_offset,
    }
    .apply(&mut episode);
    Ok(episode)
}

/// Evaluates `cfg.episodes` episodes, re-adapting from `model` in each.
pub fn evaluate(target: &FeatureBank, model: &Model, cfg: &TrainConfig, workers: usize) -> Result<EvalReport> {
    let per_episode = par_map(cfg.episodes, workers, |e| {
        let episode = draw_episode(target, cfg, e)?;
        let mut r = rng::stream(cfg.seed, e as u64, rng::FINETUNE);
        let out = run_episode(model, &episode, cfg, &mut r)?;
        Ok(accuracy(&out, &episode.query_labels()))
    })?;
    Ok(EvalReport::from_accuracies(per_episode, cfg.digest()))
}

/// One query's true-class reconstruction distance.
#[derive(Debug, Clone, PartialEq)]
pub struct HistRow {
    pub episode: usize,
    pub query_index: usize,
    pub true_class: usize,
    pub distance: f64,
    pub aligned: bool,
}

pub const HIST_HEADER: &str = "episode,query_index,true_class,distance,aligned";

/// True-class distances of every query with alignment on and off.
///
/// Both passes share episodes and finetuning streams; only `use_nda`
/// differs. Rows are ordered by episode, then aligned before unaligned.
pub fn distance_histogram(
    target: &FeatureBank,
    model: &Model,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<Vec<HistRow>> {
    let per_episode = par_map(cfg.episodes, workers, |e| {
        let episode = draw_episode(target, cfg, e)?;
        let labels = episode.query_labels();
        let mut rows = Vec::with_capacity(2 * labels.len());
        for aligned in [true, false] {
            let run_cfg = TrainConfig {
                use_nda: aligned,
                ..cfg.clone()
            };
            let mut r = rng::stream(cfg.seed, e as u64, rng::FINETUNE);
            let out = run_episode(model, &episode, &run_cfg, &mut r)?;
            for (q, &y) in labels.iter().enumerate() {
                rows.push(HistRow {
                    episode: e,
                    query_index: q,
                    true_class: y,
                    distance: out.distances[q][y],
                    aligned,
                });
            }
        }
        Ok(rows)
    })?;
    Ok(per_episode.into_iter().flatten().collect())
}

pub fn write_histogram_csv(rows: &[HistRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{HIST_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.episode,
            r.query_index,
            r.true_class,
            r.distance,
            u8::from(r.aligned)
        )?;
    }
    Ok(())
}

/// Median of `values` (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}
