//! Counter-based random streams and the Mammen two-point multiplier.
//!
//! Every stream is keyed by `(seed, domain, index)` so that work units can be
//! scheduled in any order, on any number of threads, with identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Stream domains; distinct domains never share a stream for the same seed.
pub mod domain {
    pub const BOOTSTRAP: u64 = 1;
    pub const SIM_DATA: u64 = 2;
    pub const SIM_BOOTSTRAP: u64 = 3;
    pub const AGENTS: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. one per Monte Carlo repetition.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(domain)) ^ index)
}

/// Independent stream for work unit `index` in `domain`.
pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

const SQRT5: f64 = 2.236_067_977_499_79;

/// A draw from Mammen's two-point distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MammenDraw {
    pub value: f64,
}

impl MammenDraw {
    pub const LOW: f64 = (1.0 - SQRT5) / 2.0;
    pub const HIGH: f64 = (1.0 + SQRT5) / 2.0;
    /// Probability of the low value.
    pub const P_LOW: f64 = (1.0 + SQRT5) / (2.0 * SQRT5);

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u: f64 = rng.random();
        Self { value: if u < Self::P_LOW { Self::LOW } else { Self::HIGH } }
    }
}

/// `n` Mammen multipliers for bootstrap replication `m`; entry `i` belongs to
/// observation `i` of the data set.
pub fn mammen_vector(seed: u64, domain: u64, m: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, domain, m);
    (0..n).map(|_| MammenDraw::sample(&mut rng).value).collect()
}
