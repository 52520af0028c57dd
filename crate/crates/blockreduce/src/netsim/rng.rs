//! Deterministic, purpose-separated random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! scenario seed, a domain tag and an index. Mining streams in particular
//! stay identical across runs that differ only in demand, which keeps
//! block schedules comparable between sweep points.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::hash::sha256d;

pub fn stream(seed: u64, domain: &str, index: u64) -> ChaCha12Rng {
    let mut buf = Vec::with_capacity(8 + domain.len() + 8);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(domain.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    ChaCha12Rng::from_seed(sha256d(&buf).0)
}
