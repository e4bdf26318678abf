use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible stream `stream` derived from `seed`.
pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const HEAD_INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const ENCODER: u64 = 3;
    pub const SYNTH_MEANS: u64 = 4;
    pub const SYNTH_NOISE: u64 = 5;
    pub const FOLDS: u64 = 6;
    pub const GAUSSIAN_ATTACK: u64 = 7;
}
