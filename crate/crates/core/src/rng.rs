//! Counter-based stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(master seed, purpose)` and selected by a stream id built from the
//! replication index. A replication therefore sees the same numbers no matter
//! which worker runs it or in what order replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type RandomSource = ChaCha12Rng;

/// Independent sub-streams consumed by one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Continuous,
    Jumps,
    Pricing,
    Auxiliary,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Continuous => 0x636f_6e74,
            Purpose::Jumps => 0x6a75_6d70,
            Purpose::Pricing => 0x7072_6963,
            Purpose::Auxiliary => 0x6175_7869,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the generator for `(master, replication, purpose)`.
pub fn derive(master: u64, replication: u64, purpose: Purpose) -> RandomSource {
    let mut key = [0u8; 32];
    let words = [
        splitmix64(master),
        splitmix64(master ^ purpose.tag()),
        splitmix64(purpose.tag().rotate_left(17) ^ master.rotate_left(31)),
        purpose.tag(),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}

/// Combine a two-level index (e.g. parameter pair, replication) into a stream id.
pub fn stream_id(outer: u64, inner: u64) -> u64 {
    (outer << 40) ^ inner
}
