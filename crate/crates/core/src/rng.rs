//! Seeded random streams.
//!
//! Every random draw in the engine comes from ChaCha8 seeded with the single
//! `seed` value. Independent consumers get disjoint ChaCha streams:
//! `stream = index * 16 + purpose`, where `index` is usually an episode
//! index and `purpose` one of the constants below. The mapping is fixed so
//! runs are bit-reproducible across platforms and worker counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SYNTH: u64 = 0;
pub const INIT: u64 = 1;
pub const PRETRAIN: u64 = 2;
pub const EPISODE: u64 = 3;
pub const FINETUNE: u64 = 4;

pub fn stream(seed: u64, index: u64, purpose: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(16).wrapping_add(purpose));
    rng
}
