//! Seed derivation. Every random quantity in an experiment is drawn from its
//! own ChaCha stream keyed by `(seed, purpose, index)`, so results do not
//! depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Placement,
    Shadowing,
    Trial,
    Mismatch,
}

impl Purpose {
    fn salt(self) -> u64 {
        match self {
            Purpose::Placement => 0x6a09_e667_f3bc_c908,
            Purpose::Shadowing => 0xbb67_ae85_84ca_a73b,
            Purpose::Trial => 0x3c6e_f372_fe94_f82b,
            Purpose::Mismatch => 0xa54f_f53a_5f1d_36f1,
        }
    }
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.salt());
    rng.set_stream(index);
    rng
}
