//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic decision in a run draws from a generator keyed by the
//! experiment seed plus a stream tag and the indices of the decision
//! (round, client, group, ...). Scheduling order therefore never changes
//! which numbers a decision sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Synthetic = 2,
    SectorGroups = 3,
    Dirichlet = 4,
    Participation = 5,
    Dropout = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `stream` under `seed`, further keyed by `path`.
pub fn derive(seed: u64, stream: Stream, path: &[u64]) -> SimRng {
    let mut h = splitmix(seed ^ splitmix(stream as u64));
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    SimRng::seed_from_u64(h)
}
