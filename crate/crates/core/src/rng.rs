//! Seed discipline: every shot and trajectory draws from its own ChaCha8 stream
//! derived from the run seed, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes get independent key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Measure,
    Noise,
    Readout,
    Twirl,
    Trajectory,
}

impl Channel {
    fn salt(self) -> u64 {
        match self {
            Channel::Measure => 0x6d65_6173_7572_6531,
            Channel::Noise => 0x6e6f_6973_6531_3233,
            Channel::Readout => 0x7265_6164_6f75_7431,
            Channel::Twirl => 0x7477_6972_6c31_3233,
            Channel::Trajectory => 0x7472_616a_6563_7431,
        }
    }
}

pub fn stream(seed: u64, index: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ channel.salt());
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per time point of a series.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
