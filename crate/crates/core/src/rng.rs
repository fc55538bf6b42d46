//! Deterministic seeded randomness split into per-role substreams.
//!
//! Each role draws from its own ChaCha stream so that, for example, an agent
//! variant that samples more actions never shifts the environment noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RngRole {
    Action,
    Proposal,
    Resample,
    Environment,
    Replay,
    Init,
    Schedule,
    Probe,
    Dropout,
}

impl RngRole {
    fn tag(self) -> u64 {
        match self {
            RngRole::Action => 1,
            RngRole::Proposal => 2,
            RngRole::Resample => 3,
            RngRole::Environment => 4,
            RngRole::Replay => 5,
            RngRole::Init => 6,
            RngRole::Schedule => 7,
            RngRole::Probe => 8,
            RngRole::Dropout => 9,
        }
    }
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words; stable across platforms.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, w| mix64(acc ^ mix64(*w)))
}

/// FNV-1a over bytes, used to fold labels into seeds.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(seed: u64, role: RngRole) -> Rng {
    Rng::seed_from_u64(hash_words(&[seed, role.tag()]))
}
