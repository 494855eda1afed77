//! Random stream splitting.
//!
//! Every path owns one ChaCha8 stream per noise channel. The stream for
//! `(master_seed, path_id, channel)` is `ChaCha8Rng::seed_from_u64(master_seed)`
//! with its 64-bit stream selector set to `path_id << 16 | channel`. Streams
//! are therefore disjoint, independent of scheduling, and their position can
//! be saved and restored exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8 (rand_chacha 0.3); stream = path_id << 16 | channel; normals via rand_distr::StandardNormal";

/// Channels per path addressable by the splitting scheme.
pub const MAX_CHANNELS: usize = 1 << 16;

pub fn channel_stream(master_seed: u64, path_id: u64, channel: usize) -> ChaCha8Rng {
    assert!(channel < MAX_CHANNELS, "channel index {channel} exceeds the splitting scheme");
    assert!(path_id < 1 << 48, "path id {path_id} exceeds the splitting scheme");
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id << 16 | channel as u64);
    rng
}

pub fn path_streams(master_seed: u64, path_id: u64, channels: usize) -> Vec<ChaCha8Rng> {
    (0..channels).map(|k| channel_stream(master_seed, path_id, k)).collect()
}
