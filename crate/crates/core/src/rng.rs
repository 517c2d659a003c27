//! Per-trial random streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha stream, keyed by the
//! run seed, a lane (one per grid point or experiment) and the trial index.
//! Results therefore do not depend on how trials are spread over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn lane_seed(seed: u64, lane: u64) -> u64 {
    mix64(seed ^ mix64(lane.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn trial_rng(seed: u64, lane: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(lane_seed(seed, lane));
    rng.set_stream(trial);
    rng
}
