//! Difficulty encoding, merge-mined block classification, and both real
//! hash-grinding and statistically sampled mining for the simulator.
//!
//! One hash evaluation serves all three levels: the achieved target decides
//! whether a candidate is a zone, region or PRIME block.

mod u256;

pub use u256::U256;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Hash256;
use crate::primitives::{BlockHeader, BlockLevel};

/// Maximum target: difficulty 1 means every hash qualifies.
pub const MAX_TARGET: U256 = U256::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PowError {
    #[error("compact value has the negative-mantissa flag set")]
    NegativeMantissa,
    #[error("compact value expands beyond 256 bits")]
    Overflow,
    #[error("header targets must satisfy zone > region > prime")]
    InvalidTargetOrdering,
    #[error("no qualifying nonce within {attempts} attempts")]
    Exhausted { attempts: u64 },
}

/// Expands a compact nBits value: target = mantissa * 256^(exponent-3).
pub fn compact_to_target(bits: u32) -> Result<U256, PowError> {
    if bits & 0x0080_0000 != 0 {
        return Err(PowError::NegativeMantissa);
    }
    let exponent = bits >> 24;
    let mantissa = bits & 0x007f_ffff;
    if exponent <= 3 {
        let shifted = mantissa >> (8 * (3 - exponent));
        return Ok(U256::from_u64(shifted as u64));
    }
    U256::from_u64(mantissa as u64)
        .checked_shl_bytes(exponent - 3)
        .ok_or(PowError::Overflow)
}

/// Compresses a target into compact form. Lossy beyond three mantissa bytes;
/// normalized values round-trip exactly.
pub fn target_to_compact(target: U256) -> u32 {
    if target.is_zero() {
        return 0;
    }
    let mut size = (target.bits() + 7) / 8;
    let mut compact = if size <= 3 {
        (target.low_u64() << (8 * (3 - size))) as u32
    } else {
        target.shr_bytes(size - 3).low_u64() as u32
    };
    if compact & 0x0080_0000 != 0 {
        compact >>= 8;
        size += 1;
    }
    compact | (size << 24)
}

/// Dimensionless difficulty relative to [`MAX_TARGET`].
pub fn target_for_difficulty(difficulty: u64) -> U256 {
    assert!(difficulty > 0, "difficulty must be positive");
    MAX_TARGET.div_u64(difficulty)
}

/// The per-level difficulties. PRIME is hardest; the ratios between levels
/// set how many lower-level blocks are expected per higher-level block.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct DifficultyTriple {
    pub prime: u64,
    pub region: u64,
    pub zone: u64,
}

impl DifficultyTriple {
    pub fn new(prime: u64, region: u64, zone: u64) -> Result<DifficultyTriple, PowError> {
        let triple = DifficultyTriple { prime, region, zone };
        triple.validate()?;
        Ok(triple)
    }

    pub fn validate(&self) -> Result<(), PowError> {
        if self.zone == 0 || self.zone >= self.region || self.region >= self.prime {
            return Err(PowError::InvalidTargetOrdering);
        }
        Ok(())
    }

    pub fn targets(&self) -> TargetTriple {
        TargetTriple {
            prime: target_for_difficulty(self.prime),
            region: target_for_difficulty(self.region),
            zone: target_for_difficulty(self.zone),
        }
    }

    /// Compact-form header fields for these difficulties.
    pub fn compact_bits(&self) -> (u32, u32, u32) {
        let t = self.targets();
        (
            target_to_compact(t.prime),
            target_to_compact(t.region),
            target_to_compact(t.zone),
        )
    }

    /// Expected zone-or-better blocks per PRIME block.
    pub fn zone_blocks_per_prime(&self) -> f64 {
        self.prime as f64 / self.zone as f64
    }

    /// Expected region-or-better blocks per PRIME block.
    pub fn region_blocks_per_prime(&self) -> f64 {
        self.prime as f64 / self.region as f64
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TargetTriple {
    pub prime: U256,
    pub region: U256,
    pub zone: U256,
}

impl TargetTriple {
    pub fn validate(&self) -> Result<(), PowError> {
        if self.zone > self.region && self.region > self.prime {
            Ok(())
        } else {
            Err(PowError::InvalidTargetOrdering)
        }
    }

    /// Level achieved by a hash, interpreted as a 256-bit big-endian
    /// integer; boundaries are inclusive.
    pub fn classify(&self, hash: &Hash256) -> BlockLevel {
        let value = U256::from_be_bytes(hash.as_bytes());
        if value <= self.prime {
            BlockLevel::Prime
        } else if value <= self.region {
            BlockLevel::Region
        } else if value <= self.zone {
            BlockLevel::Zone
        } else {
            BlockLevel::None
        }
    }
}

/// Classifies a mined header hash against the targets carried in the header.
pub fn classify_block(header_hash: &Hash256, header: &BlockHeader) -> Result<BlockLevel, PowError> {
    let targets = TargetTriple {
        prime: compact_to_target(header.bits_prime)?,
        region: compact_to_target(header.bits_region)?,
        zone: compact_to_target(header.bits_zone)?,
    };
    targets.validate()?;
    Ok(targets.classify(header_hash))
}

/// Increments the nonce until the header hash clears at least the zone
/// target. Every hash evaluation is simultaneously a trial at all three
/// levels.
pub fn grind(header: &BlockHeader, max_attempts: u64) -> Result<(u64, BlockLevel), PowError> {
    let mut candidate = *header;
    for attempt in 0..max_attempts {
        candidate.nonce = header.nonce.wrapping_add(attempt);
        let level = classify_block(&candidate.hash(), &candidate)?;
        if level >= BlockLevel::Zone {
            return Ok((candidate.nonce, level));
        }
    }
    Err(PowError::Exhausted { attempts: max_attempts })
}

/// Statistical stand-in for grinding: draws the waiting time until this
/// miner's next zone-or-better block and the level it achieves.
///
/// The waiting time is exponential with rate `hash_power / (zone difficulty
/// x normalization)`; the level distribution matches classification of
/// uniform hashes: PRIME with probability d_zone/d_prime, region-or-better
/// with probability d_zone/d_region.
pub fn sample_block_event<R: Rng>(
    hash_power: f64,
    difficulty: &DifficultyTriple,
    normalization: f64,
    rng: &mut R,
) -> (f64, BlockLevel) {
    debug_assert!(hash_power > 0.0 && normalization > 0.0);
    let rate = hash_power / (difficulty.zone as f64 * normalization);
    let u: f64 = 1.0 - rng.gen::<f64>();
    let dt = -u.ln() / rate;
    let level_draw: f64 = rng.gen();
    let p_prime = difficulty.zone as f64 / difficulty.prime as f64;
    let p_region_or_better = difficulty.zone as f64 / difficulty.region as f64;
    let level = if level_draw < p_prime {
        BlockLevel::Prime
    } else if level_draw < p_region_or_better {
        BlockLevel::Region
    } else {
        BlockLevel::Zone
    };
    (dt, level)
}

/// One Bitcoin-style retarget step: scales difficulty by observed vs
/// expected span, clamped to a factor of four per adjustment.
pub fn retarget(difficulty: u64, observed_span: f64, expected_span: f64) -> u64 {
    debug_assert!(expected_span > 0.0);
    let observed = observed_span.max(1e-9);
    let factor = (expected_span / observed).clamp(0.25, 4.0);
    ((difficulty as f64 * factor).round() as u64).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn bitcoin_genesis_compact_expands_to_known_target() {
        let target = compact_to_target(0x1d00ffff).unwrap();
        let mut expected = [0u8; 32];
        expected[4] = 0xff;
        expected[5] = 0xff;
        assert_eq!(target.to_be_bytes(), expected);
    }

    #[test]
    fn tiny_compact_values() {
        assert_eq!(compact_to_target(0x03000001).unwrap(), U256::from_u64(1));
        assert_eq!(compact_to_target(0x01000012).unwrap(), U256::from_u64(0));
        assert_eq!(compact_to_target(0x02008000).unwrap(), U256::from_u64(0x80));
    }

    #[test]
    fn compact_round_trips_for_normalized_values() {
        for bits in [0x1d00ffffu32, 0x1b0404cb, 0x01010000, 0x1f7fff00] {
            let target = compact_to_target(bits).unwrap();
            assert_eq!(target_to_compact(target), bits, "bits={bits:#010x}");
        }
        // Non-normalized encodings of the same value collapse to one form.
        let one = compact_to_target(0x03000001).unwrap();
        assert_eq!(one, U256::from_u64(1));
        assert_eq!(target_to_compact(one), 0x01010000);
    }

    #[test]
    fn negative_mantissa_rejected() {
        assert_eq!(compact_to_target(0x04800001), Err(PowError::NegativeMantissa));
    }

    #[test]
    fn oversized_exponent_rejected() {
        assert_eq!(compact_to_target(0x23000001), Err(PowError::Overflow));
    }

    #[test]
    fn zero_hash_classifies_prime() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        assert_eq!(d.targets().classify(&Hash256::ZERO), BlockLevel::Prime);
    }

    #[test]
    fn boundary_is_inclusive() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let t = d.targets();
        let at_region = Hash256(t.region.to_be_bytes());
        assert_eq!(t.classify(&at_region), BlockLevel::Region);
        let at_zone = Hash256(t.zone.to_be_bytes());
        assert_eq!(t.classify(&at_zone), BlockLevel::Zone);
    }

    #[test]
    fn difficulty_ordering_enforced() {
        assert!(DifficultyTriple::new(10, 100, 1000).is_err());
        assert!(DifficultyTriple::new(1000, 1000, 10).is_err());
        assert!(DifficultyTriple::new(1000, 100, 0).is_err());
    }

    #[test]
    fn classification_monte_carlo_matches_difficulty_ratios() {
        // 1e5 uniform hashes at 1000/100/10: cumulative level counts follow
        // 100:10:1 within 3-sigma Poisson bounds.
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let targets = d.targets();
        let mut rng = ChaCha12Rng::seed_from_u64(2021);
        let n = 100_000usize;
        let (mut zone_up, mut region_up, mut prime) = (0u64, 0u64, 0u64);
        for _ in 0..n {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            match targets.classify(&Hash256(bytes)) {
                BlockLevel::Prime => {
                    prime += 1;
                    region_up += 1;
                    zone_up += 1;
                }
                BlockLevel::Region => {
                    region_up += 1;
                    zone_up += 1;
                }
                BlockLevel::Zone => zone_up += 1,
                BlockLevel::None => {}
            }
        }
        let check = |count: u64, expected: f64| {
            let sigma = expected.sqrt();
            assert!(
                (count as f64 - expected).abs() <= 3.0 * sigma,
                "count {count} vs expected {expected}"
            );
        };
        check(zone_up, n as f64 / 10.0);
        check(region_up, n as f64 / 100.0);
        check(prime, n as f64 / 1000.0);
    }

    #[test]
    fn classification_level_monotonicity() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let t = d.targets();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let mut bytes = [0u8; 32];
            rng.fill(&mut bytes);
            let hash = Hash256(bytes);
            let value = U256::from_be_bytes(hash.as_bytes());
            match t.classify(&hash) {
                BlockLevel::Prime => {
                    assert!(value <= t.region && value <= t.zone);
                }
                BlockLevel::Region => assert!(value <= t.zone),
                _ => {}
            }
        }
    }

    fn toy_header(d: &DifficultyTriple) -> BlockHeader {
        let (bits_prime, bits_region, bits_zone) = d.compact_bits();
        BlockHeader {
            bits_prime,
            bits_region,
            bits_zone,
            ..BlockHeader::zeroed()
        }
    }

    #[test]
    fn grind_with_unit_zone_difficulty_wins_immediately() {
        let d = DifficultyTriple::new(1000, 100, 1).unwrap();
        let header = toy_header(&d);
        let (nonce, level) = grind(&header, 10).unwrap();
        assert_eq!(nonce, header.nonce);
        assert!(level >= BlockLevel::Zone);
    }

    #[test]
    fn grind_result_revalidates() {
        let d = DifficultyTriple::new(4096, 64, 4).unwrap();
        let mut header = toy_header(&d);
        header.unix_time = 99;
        let (nonce, level) = grind(&header, 10_000).unwrap();
        let mut mined = header;
        mined.nonce = nonce;
        assert_eq!(classify_block(&mined.hash(), &mined).unwrap(), level);
    }

    #[test]
    fn grind_attempt_count_follows_geometric_expectation() {
        // At zone difficulty 16 the expected attempt count is 16; over 200
        // independent headers the mean lands within [8, 32].
        let d = DifficultyTriple::new(16_384, 256, 16).unwrap();
        let mut total_attempts = 0u64;
        for i in 0..200u32 {
            let mut header = toy_header(&d);
            header.unix_time = i;
            let (nonce, _) = grind(&header, 2_000).unwrap();
            total_attempts += nonce - header.nonce + 1;
        }
        let mean = total_attempts as f64 / 200.0;
        assert!((8.0..=32.0).contains(&mean), "mean attempts {mean}");
    }

    #[test]
    fn grind_exhausts_on_impossible_target() {
        let d = DifficultyTriple::new(u64::MAX, 1 << 62, 1 << 61).unwrap();
        let header = toy_header(&d);
        assert_eq!(grind(&header, 50), Err(PowError::Exhausted { attempts: 50 }));
    }

    #[test]
    fn sampled_level_probabilities() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100_000usize;
        let (mut prime, mut region_up) = (0u64, 0u64);
        for _ in 0..n {
            let (_, level) = sample_block_event(1.0, &d, 1.0, &mut rng);
            if level == BlockLevel::Prime {
                prime += 1;
            }
            if level >= BlockLevel::Region {
                region_up += 1;
            }
        }
        // P(prime) = 0.01, P(region or prime) = 0.1.
        let p_prime = prime as f64 / n as f64;
        let p_region = region_up as f64 / n as f64;
        assert!((p_prime - 0.01).abs() < 3.0 * (0.01f64 / n as f64).sqrt());
        assert!((p_region - 0.1).abs() < 3.0 * (0.1f64 / n as f64).sqrt());
    }

    #[test]
    fn sampled_sequence_is_seed_deterministic() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let draw = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| sample_block_event(2.5, &d, 1.0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sampled_mean_interval_matches_rate() {
        // hash power 1, zone difficulty 10, normalization 1: mean 10 s, the
        // per-zone cadence of the reference deployment.
        let d = DifficultyTriple::new(1_000_000, 1000, 10).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 10_000usize;
        let total: f64 = (0..n)
            .map(|_| sample_block_event(1.0, &d, 1.0, &mut rng).0)
            .sum();
        let mean = total / n as f64;
        assert!((mean - 10.0).abs() / 10.0 < 0.05, "mean interval {mean}");
    }

    #[test]
    fn retarget_clamps_and_holds() {
        assert_eq!(retarget(1000, 50.0, 100.0), 2000);
        assert_eq!(retarget(1000, 100.0, 100.0), 1000);
        assert_eq!(retarget(1000, 1.0, 100.0), 4000);
        assert_eq!(retarget(1000, 10_000.0, 100.0), 250);
        assert_eq!(retarget(1, 10_000.0, 100.0), 1);
    }
}
