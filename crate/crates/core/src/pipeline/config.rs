use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{EpisodeSpec, KvConfig};
use crate::error::{DaraError, Result};
use crate::nda::{AlignmentConfig, FusionVariant, GateParams, StatSource, DEFAULT_EPS};
use crate::pfa::{PoolMode, RecalibrationOptions, ReprojectionConfig};

/// How support and query maps are fused after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NdaVariant {
    /// Learnable sigmoid gate.
    #[default]
    Gated,
    /// Fixed 0.5 / 0.5.
    Mean,
    BnOnly,
    InOnly,
    /// Ungated sum of both branches.
    Sum,
}

impl NdaVariant {
    pub fn initial_gate(self, channels: usize) -> GateParams {
        match self {
            NdaVariant::Gated | NdaVariant::Sum => GateParams::learnable(channels),
            NdaVariant::Mean => GateParams::fixed(channels, 0.5).expect("in range"),
            NdaVariant::BnOnly => GateParams::fixed(channels, 0.0).expect("in range"),
            NdaVariant::InOnly => GateParams::fixed(channels, 1.0).expect("in range"),
        }
    }

    pub fn fusion(self) -> FusionVariant {
        match self {
            NdaVariant::Sum => FusionVariant::Sum,
            _ => FusionVariant::Gated,
        }
    }
}

impl FromStr for NdaVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "gated" => NdaVariant::Gated,
            "mean" => NdaVariant::Mean,
            "bn" => NdaVariant::BnOnly,
            "in" => NdaVariant::InOnly,
            "sum" => NdaVariant::Sum,
            _ => return Err(format!("expected gated|mean|bn|in|sum, got `{s}`")),
        })
    }
}

impl fmt::Display for NdaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NdaVariant::Gated => "gated",
            NdaVariant::Mean => "mean",
            NdaVariant::BnOnly => "bn",
            NdaVariant::InOnly => "in",
            NdaVariant::Sum => "sum",
        })
    }
}

fn parse_source(s: &str) -> std::result::Result<StatSource, String> {
    match s {
        "query_all" => Ok(StatSource::QueryAll),
        "support" => Ok(StatSource::Support),
        _ => s
            .strip_prefix("support_plus:")
            .and_then(|n| n.parse().ok())
            .map(StatSource::SupportPlusQueries)
            .ok_or_else(|| format!("expected query_all|support|support_plus:N, got `{s}`")),
    }
}

fn source_text(s: StatSource) -> String {
    match s {
        StatSource::QueryAll => "query_all".into(),
        StatSource::Support => "support".into(),
        StatSource::SupportPlusQueries(n) => format!("support_plus:{n}"),
    }
}

fn parse_pool(s: &str) -> std::result::Result<PoolMode, String> {
    match s {
        "stacked" => Ok(PoolMode::Stacked),
        "pooled" => Ok(PoolMode::Pooled),
        _ => Err(format!("expected stacked|pooled, got `{s}`")),
    }
}

fn pool_text(p: PoolMode) -> &'static str {
    match p {
        PoolMode::Stacked => "stacked",
        PoolMode::Pooled => "pooled",
    }
}

/// Everything that shapes training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub feature_channels: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub batch_size: usize,
    /// Split evenly across the two finetuning stages.
    pub finetune_epochs: usize,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub beta: f64,
    pub seed: u64,
    pub ways: usize,
    pub shots: usize,
    pub queries_per_class: usize,
    pub pseudo_query_shots: usize,
    pub episodes: usize,
    pub use_recalibration: bool,
    pub use_reprojection_finetune: bool,
    pub use_nda: bool,
    pub nda_variant: NdaVariant,
    pub statistic_source: StatSource,
    pub pool_mode: PoolMode,
    pub clamp_negative: bool,
    /// Stage 1 is skipped per episode; the loaded backbone is used as is.
    pub shared_finetune: bool,
    /// Covariate offset added to query items of every sampled episode.
    pub query_offset: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            feature_channels: 8,
            pretrain_epochs: 100,
            pretrain_lr: 0.05,
            batch_size: 32,
            finetune_epochs: 100,
            stage1_lr: 0.01,
            stage2_lr: 0.01,
            beta: 1.0,
            seed: 0,
            ways: 5,
            shots: 5,
            queries_per_class: 15,
            pseudo_query_shots: 1,
            episodes: 600,
            use_recalibration: true,
            use_reprojection_finetune: true,
            use_nda: true,
            nda_variant: NdaVariant::Gated,
            statistic_source: StatSource::QueryAll,
            pool_mode: PoolMode::Stacked,
            clamp_negative: false,
            shared_finetune: false,
            query_offset: 0.0,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "hidden",
    "feature_channels",
    "pretrain_epochs",
    "pretrain_lr",
    "batch_size",
    "finetune_epochs",
    "stage1_lr",
    "stage2_lr",
    "beta",
    "seed",
    "ways",
    "shots",
    "queries_per_class",
    "pseudo_query_shots",
    "episodes",
    "use_recalibration",
    "use_reprojection_finetune",
    "use_nda",
    "nda_variant",
    "statistic_source",
    "pool_mode",
    "clamp_negative",
    "shared_finetune",
    "query_offset",
];

fn get_with<T>(
    kv: &KvConfig,
    key: &str,
    default: T,
    parse: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<T> {
    match kv.raw(key) {
        None => Ok(default),
        Some(v) => parse(v).map_err(|m| DaraError::config(key, m)),
    }
}

impl TrainConfig {
    /// Reads the training keys of `kv`; other keys are ignored here.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            hidden: kv.get_or("hidden", d.hidden)?,
            feature_channels: kv.get_or("feature_channels", d.feature_channels)?,
            pretrain_epochs: kv.get_or("pretrain_epochs", d.pretrain_epochs)?,
            pretrain_lr: kv.get_or("pretrain_lr", d.pretrain_lr)?,
            batch_size: kv.get_or("batch_size", d.batch_size)?,
            finetune_epochs: kv.get_or("finetune_epochs", d.finetune_epochs)?,
            stage1_lr: kv.get_or("stage1_lr", d.stage1_lr)?,
            stage2_lr: kv.get_or("stage2_lr", d.stage2_lr)?,
            beta: kv.get_or("beta", d.beta)?,
            seed: kv.get_or("seed", d.seed)?,
            ways: kv.get_or("ways", d.ways)?,
            shots: kv.get_or("shots", d.shots)?,
            queries_per_class: kv.get_or("queries_per_class", d.queries_per_class)?,
            pseudo_query_shots: kv.get_or("pseudo_query_shots", d.pseudo_query_shots)?,
            episodes: kv.get_or("episodes", d.episodes)?,
            use_recalibration: kv.get_or("use_recalibration", d.use_recalibration)?,
            use_reprojection_finetune: kv
                .get_or("use_reprojection_finetune", d.use_reprojection_finetune)?,
            use_nda: kv.get_or("use_nda", d.use_nda)?,
            nda_variant: get_with(kv, "nda_variant", d.nda_variant, |s| s.parse())?,
            statistic_source: get_with(kv, "statistic_source", d.statistic_source, parse_source)?,
            pool_mode: get_with(kv, "pool_mode", d.pool_mode, parse_pool)?,
            clamp_negative: kv.get_or("clamp_negative", d.clamp_negative)?,
            shared_finetune: kv.get_or("shared_finetune", d.shared_finetune)?,
            query_offset: kv.get_or("query_offset", d.query_offset)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hidden", self.hidden),
            ("feature_channels", self.feature_channels),
            ("pretrain_epochs", self.pretrain_epochs),
            ("batch_size", self.batch_size),
            ("finetune_epochs", self.finetune_epochs),
            ("episodes", self.episodes),
        ] {
            if v == 0 {
                return Err(DaraError::config(key, "must be >= 1"));
            }
        }
        for (key, v) in [
            ("pretrain_lr", self.pretrain_lr),
            ("stage1_lr", self.stage1_lr),
            ("stage2_lr", self.stage2_lr),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DaraError::config(key, "must be a finite value > 0"));
            }
        }
        if !self.query_offset.is_finite() {
            return Err(DaraError::config("query_offset", "must be finite"));
        }
        self.episode_spec()
            .validate()
            .map_err(|e| DaraError::config("shots", e.to_string()))
    }

    /// Effective configuration as canonical key/value text.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("hidden", self.hidden.to_string());
        kv.set("feature_channels", self.feature_channels.to_string());
        kv.set("pretrain_epochs", self.pretrain_epochs.to_string());
        kv.set("pretrain_lr", self.pretrain_lr.to_string());
        kv.set("batch_size", self.batch_size.to_string());
        kv.set("finetune_epochs", self.finetune_epochs.to_string());
        kv.set("stage1_lr", self.stage1_lr.to_string());
        kv.set("stage2_lr", self.stage2_lr.to_string());
        kv.set("beta", self.beta.to_string());
        kv.set("seed", self.seed.to_string());
        kv.set("ways", self.ways.to_string());
        kv.set("shots", self.shots.to_string());
        kv.set("queries_per_class", self.queries_per_class.to_string());
        kv.set("pseudo_query_shots", self.pseudo_query_shots.to_string());
        kv.set("episodes", self.episodes.to_string());
        kv.set("use_recalibration", self.use_recalibration.to_string());
        kv.set("use_reprojection_finetune", self.use_reprojection_finetune.to_string());
        kv.set("use_nda", self.use_nda.to_string());
        kv.set("nda_variant", self.nda_variant.to_string());
        kv.set("statistic_source", source_text(self.statistic_source));
        kv.set("pool_mode", pool_text(self.pool_mode));
        kv.set("clamp_negative", self.clamp_negative.to_string());
        kv.set("shared_finetune", self.shared_finetune.to_string());
        kv.set("query_offset", self.query_offset.to_string());
        kv
    }

    /// SHA-256 of [`TrainConfig::to_kv`] text, lowercase hex.
    pub fn digest(&self) -> String {
        digest_text(&self.to_kv().to_text())
    }

    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            ways: self.ways,
            shots: self.shots,
            queries_per_class: self.queries_per_class,
            pseudo_query_shots: self.pseudo_query_shots,
            seed: self.seed,
        }
    }

    pub fn stage1_epochs(&self) -> usize {
        self.finetune_epochs / 2
    }

    pub fn stage2_epochs(&self) -> usize {
        self.finetune_epochs - self.finetune_epochs / 2
    }

    pub fn reprojection(&self) -> ReprojectionConfig {
        ReprojectionConfig { beta: self.beta }
    }

    pub fn recalibration(&self) -> RecalibrationOptions {
        RecalibrationOptions {
            disabled: !self.use_recalibration,
            clamp_negative: self.clamp_negative,
        }
    }

    pub fn alignment(&self) -> AlignmentConfig {
        AlignmentConfig {
            source: self.statistic_source,
            fusion: self.nda_variant.fusion(),
            eps: DEFAULT_EPS,
        }
    }

    /// Maps stacked into one class pool.
    pub fn pool_shots(&self, maps: usize) -> usize {
        match self.pool_mode {
            PoolMode::Stacked => maps,
            PoolMode::Pooled => 1,
        }
    }
}

pub fn digest_text(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.nda_variant = NdaVariant::InOnly;
        cfg.statistic_source = StatSource::SupportPlusQueries(5);
        cfg.pool_mode = PoolMode::Pooled;
        cfg.query_offset = 0.25;
        assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn digest_tracks_values() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.beta = 2.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn bad_values_name_their_key() {
        let kv = KvConfig::parse("stage2_lr = 0").unwrap();
        assert!(matches!(TrainConfig::from_kv(&kv), Err(DaraError::Config { key, .. }) if key == "stage2_lr"));
        let kv = KvConfig::parse("nda_variant = both").unwrap();
        assert!(matches!(TrainConfig::from_kv(&kv), Err(DaraError::Config { key, .. }) if key == "nda_variant"));
    }

    #[test]
    fn epochs_split_evenly() {
        let cfg = TrainConfig {
            finetune_epochs: 7,
            ..TrainConfig::default()
        };
        assert_eq!((cfg.stage1_epochs(), cfg.stage2_epochs()), (3, 4));
    }
}
