//! Synthetic source/target banks with a controllable domain shift and a
//! support/query covariate offset.
//!
//! Every class owns a random `(W*H) x C` mean pattern scaled by
//! `separation`; items add isotropic Gaussian noise. Target classes are drawn
//! fresh and then pushed through a per-channel affine map
//! `x_c -> exp(domain_scale * u_c) * x_c + domain_offset * v_c` with
//! `u, v ~ N(0, 1)` fixed per seed. The covariate offset is not baked into
//! the target bank: it is returned as a [`QueryShift`] and applied to query
//! items when episodes are drawn.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{Episode, FeatureBank, KvConfig};
use crate::error::{DaraError, Result};
use crate::numerics::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub source_classes: usize,
    pub target_classes: usize,
    pub items_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub separation: f64,
    pub domain_scale: f64,
    pub domain_offset: f64,
    pub query_offset: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            source_classes: 16,
            target_classes: 10,
            items_per_class: 40,
            width: 5,
            height: 5,
            channels: 8,
            separation: 1.0,
            domain_scale: 0.5,
            domain_offset: 0.5,
            query_offset: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

pub const SYNTH_KEYS: &[&str] = &[
    "source_classes",
    "target_classes",
    "items_per_class",
    "width",
    "height",
    "channels",
    "separation",
    "domain_scale",
    "domain_offset",
    "query_offset",
    "noise",
    "seed",
];

impl SynthConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = SynthConfig::default();
        let cfg = SynthConfig {
            source_classes: kv.get_or("source_classes", d.source_classes)?,
            target_classes: kv.get_or("target_classes", d.target_classes)?,
            items_per_class: kv.get_or("items_per_class", d.items_per_class)?,
            width: kv.get_or("width", d.width)?,
            height: kv.get_or("height", d.height)?,
            channels: kv.get_or("channels", d.channels)?,
            separation: kv.get_or("separation", d.separation)?,
            domain_scale: kv.get_or("domain_scale", d.domain_scale)?,
            domain_offset: kv.get_or("domain_offset", d.domain_offset)?,
            query_offset: kv.get_or("query_offset", d.query_offset)?,
            noise: kv.get_or("noise", d.noise)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("source_classes", self.source_classes),
            ("target_classes", self.target_classes),
            ("items_per_class", self.items_per_class),
            ("width", self.width),
            ("height", self.height),
            ("channels", self.channels),
        ] {
            if v == 0 {
                return Err(DaraError::config(key, "must be >= 1"));
            }
        }
        if !(self.noise > 0.0) {
            return Err(DaraError::config("noise", "must be > 0"));
        }
        Ok(())
    }
}

/// Covariate offset added to every entry of target query items.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryShift {
    pub offset: f64,
}

impl QueryShift {
    pub fn none() -> Self {
        QueryShift { offset: 0.0 }
    }

    pub fn apply(&self, episode: &mut Episode) {
        if self.offset == 0.0 {
            return;
        }
        for (item, _) in &mut episode.query {
            *item = item.map(|v| v + self.offset);
        }
    }
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

// Values are rounded through f32 so banks survive a save/load round trip.
fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn gen_bank(
    cfg: &SynthConfig,
    classes: usize,
    affine: Option<(&[f64], &[f64])>,
    rng: &mut rng::Rng,
) -> Result<FeatureBank> {
    let r = cfg.width * cfg.height;
    let c = cfg.channels;
    let means: Vec<Matrix> = (0..classes)
        .map(|_| Matrix::from_fn(r, c, |_, _| cfg.separation * normal(rng)))
        .collect();
    let mut items = Vec::with_capacity(classes * cfg.items_per_class);
    let mut labels = Vec::with_capacity(classes * cfg.items_per_class);
    for (label, mean) in means.iter().enumerate() {
        for _ in 0..cfg.items_per_class {
            let item = Matrix::from_fn(r, c, |i, j| {
                let x = mean[(i, j)] + cfg.noise * normal(rng);
                let x = match affine {
                    Some((scale, offset)) => scale[j] * x + offset[j],
                    None => x,
                };
                round32(x)
            });
            items.push(item);
            labels.push(label as u32);
        }
    }
    FeatureBank::new(cfg.width, cfg.height, c, classes, items, labels)
}

/// Generates `(source, target, query shift)`; a pure function of `cfg`.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<(FeatureBank, FeatureBank, QueryShift)> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, 0, rng::SYNTH);
    let source = gen_bank(cfg, cfg.source_classes, None, &mut rng)?;
    let scale: Vec<f64> = (0..cfg.channels)
        .map(|_| (cfg.domain_scale * normal(&mut rng)).exp())
        .collect();
    let offset: Vec<f64> = (0..cfg.channels)
        .map(|_| cfg.domain_offset * normal(&mut rng))
        .collect();
    let target = gen_bank(cfg, cfg.target_classes, Some((&scale, &offset)), &mut rng)?;
    Ok((
        source,
        target,
        QueryShift {
            offset: cfg.query_offset,
        },
    ))
}
