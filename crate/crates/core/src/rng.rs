//! Deterministic random-stream splitting.
//!
//! Every random draw in a run comes from a ChaCha8 stream seeded by
//! `child_seed(master, tag, index, round)`, a splitmix64 chain over the four
//! inputs. Streams for different purposes (agent initialization, trajectory
//! sampling, reward noise, utility noise) never share state, so changing the
//! population size does not perturb the mediator-side streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ModelGeneration = 1,
    AgentInit = 2,
    AgentChoice = 3,
    Trajectory = 4,
    UtilityNoise = 5,
    UtilityGeneration = 6,
}

/// One step of the splitmix64 generator.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(master: u64, tag: Stream, index: u64, round: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(tag as u64));
    let b = splitmix64(a ^ index);
    splitmix64(b ^ round.rotate_left(32))
}

pub fn child_rng(master: u64, tag: Stream, index: u64, round: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, tag, index, round))
}
