use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent deterministic stream `stream` under `seed`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const SPLIT_INSTANCE: u64 = 1;
    pub const SPLIT_ONTOLOGY: u64 = 2;
    pub const SPLIT_LINKS: u64 = 3;
    pub const SYNTH: u64 = 10;
    pub const INIT: u64 = 20;
    pub const SHUFFLE: u64 = 30;
    pub const NEGATIVES: u64 = 40;
}

/// Stable 64-bit mix used to derive sub-seeds.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
