//! Feature banks, episode sampling, config text, and synthetic data.

mod bank;
mod episode;
mod kv;
mod synth;

pub use bank::{load_bank, parse_header, save_bank, BankHeader, FeatureBank, BANK_MAGIC};
pub use episode::{pseudo_split, sample_episode, Episode, EpisodeSpec, PseudoSplit};
pub use kv::KvConfig;
pub use synth::{gen_synthetic, QueryShift, SynthConfig, SYNTH_KEYS};
