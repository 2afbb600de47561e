//! Seed derivation for the independent random streams of one replica.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random streams owned by the simulation components. Each gets its own
/// ChaCha stream so that changing one component (say the flip
/// probabilities) leaves the others' sample paths untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    PlantNoise = 1,
    Channel = 2,
    Input = 3,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replica_seed(base_seed: u64, replica: u64) -> u64 {
    mix(base_seed ^ mix(replica.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
