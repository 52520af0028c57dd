//! Block incentives: the PRIME-epoch reward computation, its distribution
//! across PRIME, region and zone block finders, and the escrow account that
//! absorbs the stochastic gap between available funds and the computed
//! reward so net inflation stays on schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hash::Hash256;
use crate::pow::DifficultyTriple;

/// chi is stored in parts per million so reward arithmetic stays exact.
pub const CHI_DENOM: u64 = 1_000_000;

/// How the latency bracket is scaled.
///
/// In literal form each bracket term has expectation one at nominal block
/// counts, so the expected reward is twice the target. Normalized mode
/// halves the bracket so the expectation equals the target; it is the
/// operating default, literal mode is kept for fidelity checks.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Literal,
    Normalized,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RewardParams {
    /// Target reward for the epoch: scheduled emission plus collected fees.
    pub p_reward: u64,
    /// Weight between pure PoW reward and latency/aggregation reward,
    /// in parts per million of one.
    pub chi_ppm: u32,
    pub difficulty: DifficultyTriple,
    pub mode: RewardMode,
}

impl RewardParams {
    pub fn chi_from_fraction(chi: f64) -> u32 {
        ((chi.clamp(0.0, 1.0) * CHI_DENOM as f64).round()) as u32
    }
}

/// Total reward for a PRIME epoch that contained `region_blocks` blocks of
/// region level or above and `zone_blocks` blocks of zone level or above
/// (both counts include the terminating PRIME block itself).
///
/// Exact integer arithmetic over rational intermediates, floored once.
pub fn compute_reward(params: &RewardParams, region_blocks: u64, zone_blocks: u64) -> u64 {
    let p = params.p_reward as u128;
    let chi = params.chi_ppm as u128;
    let m = CHI_DENOM as u128;
    let d_prime = params.difficulty.prime as u128;
    let bracket = region_blocks as u128 * params.difficulty.region as u128
        + zone_blocks as u128 * params.difficulty.zone as u128;
    let scale = match params.mode {
        RewardMode::Literal => 1u128,
        RewardMode::Normalized => 2u128,
    };
    let numerator = scale * p * (m - chi) * d_prime + p * chi * bracket;
    let denominator = scale * m * d_prime;
    (numerator / denominator) as u64
}

/// Integer share each linked region block earns; the same value for every
/// region finder, remainders accrue to the PRIME miner.
fn per_region_share(params: &RewardParams) -> u64 {
    let scale = match params.mode {
        RewardMode::Literal => 1u128,
        RewardMode::Normalized => 2u128,
    };
    let num = params.p_reward as u128 * params.chi_ppm as u128 * params.difficulty.region as u128;
    let den = scale * CHI_DENOM as u128 * params.difficulty.prime as u128;
    (num / den) as u64
}

fn per_zone_share(params: &RewardParams) -> u64 {
    let scale = match params.mode {
        RewardMode::Literal => 1u128,
        RewardMode::Normalized => 2u128,
    };
    let num = params.p_reward as u128 * params.chi_ppm as u128 * params.difficulty.zone as u128;
    let den = scale * CHI_DENOM as u128 * params.difficulty.prime as u128;
    (num / den) as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payouts {
    pub by_owner: BTreeMap<Hash256, u64>,
    pub total: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("epoch has no finder identity for a linked block")]
    MissingFinder,
}

/// Splits the epoch reward: the PoW share goes to the PRIME miner, the
/// latency share is split equally per linked region block and per linked
/// zone block to their finders. Integer remainders go to the PRIME miner,
/// so the payout total equals `compute_reward` exactly.
///
/// The finder slices include the PRIME block itself: a PRIME block is also
/// a region and a zone block, so its miner appears in both lists.
pub fn distribute(
    params: &RewardParams,
    prime_miner: Hash256,
    region_finders: &[Hash256],
    zone_finders: &[Hash256],
) -> Result<Payouts, RewardError> {
    if region_finders.is_empty() || zone_finders.is_empty() {
        return Err(RewardError::MissingFinder);
    }
    let total = compute_reward(params, region_finders.len() as u64, zone_finders.len() as u64);
    let per_region = per_region_share(params);
    let per_zone = per_zone_share(params);
    let mut by_owner: BTreeMap<Hash256, u64> = BTreeMap::new();
    for finder in region_finders {
        *by_owner.entry(*finder).or_default() += per_region;
    }
    for finder in zone_finders {
        *by_owner.entry(*finder).or_default() += per_zone;
    }
    let latency_total =
        per_region * region_finders.len() as u64 + per_zone * zone_finders.len() as u64;
    debug_assert!(latency_total <= total);
    *by_owner.entry(prime_miner).or_default() += total - latency_total;
    Ok(Payouts { by_owner, total })
}

/// The fee buffer holding the inflation rate to schedule: excess funds are
/// sequestered, shortfalls are drawn down before any new coins are minted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowState {
    pub balance: u64,
    pub cumulative_minted: u64,
    pub cumulative_sequestered: u64,
}

/// What one adjustment did. `payout` always equals the intended reward;
/// `minted` is the part covered by new coins beyond the funds available.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowOutcome {
    pub payout: u64,
    pub sequestered: u64,
    pub drawn: u64,
    pub minted: u64,
}

impl EscrowState {
    /// Reconciles the intended payout (`target`) against the funds actually
    /// available (`actual`).
    pub fn adjust(&mut self, target: u64, actual: u64) -> EscrowOutcome {
        let mut outcome = EscrowOutcome { payout: target, ..EscrowOutcome::default() };
        if actual >= target {
            outcome.sequestered = actual - target;
            self.balance += outcome.sequestered;
            self.cumulative_sequestered += outcome.sequestered;
        } else {
            let shortfall = target - actual;
            outcome.drawn = shortfall.min(self.balance);
            self.balance -= outcome.drawn;
            outcome.minted = shortfall - outcome.drawn;
            self.cumulative_minted += outcome.minted;
        }
        outcome
    }
}

/// Scheduled emission per PRIME block: constant until a final height, zero
/// afterwards.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EmissionSchedule {
    pub per_prime_block: u64,
    pub final_height: u64,
}

impl EmissionSchedule {
    pub fn at_height(&self, prime_height: u64) -> u64 {
        if prime_height <= self.final_height {
            self.per_prime_block
        } else {
            0
        }
    }
}

/// One line of the reward audit log, emitted per PRIME block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RewardAudit {
    pub prime_height: u64,
    pub prime_hash: Hash256,
    pub emission: u64,
    pub fees: u64,
    /// Funds available this epoch: emission plus fees.
    pub available: u64,
    /// Computed epoch reward (the payout target).
    pub reward: u64,
    pub region_blocks: u64,
    pub zone_blocks: u64,
    pub payout_recipients: u64,
    pub sequestered: u64,
    pub drawn: u64,
    pub minted: u64,
    pub escrow_balance: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256d;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn params(chi: f64, mode: RewardMode) -> RewardParams {
        RewardParams {
            p_reward: 1000,
            chi_ppm: RewardParams::chi_from_fraction(chi),
            difficulty: DifficultyTriple::new(1000, 100, 10).unwrap(),
            mode,
        }
    }

    #[test]
    fn chi_zero_returns_target_exactly() {
        for mode in [RewardMode::Literal, RewardMode::Normalized] {
            let p = params(0.0, mode);
            for (b_r, b_z) in [(0, 0), (10, 100), (37, 411)] {
                assert_eq!(compute_reward(&p, b_r, b_z), 1000);
            }
        }
    }

    #[test]
    fn chi_one_at_nominal_counts() {
        // Nominal counts are d_prime/d_region region blocks and
        // d_prime/d_zone zone blocks.
        let literal = params(1.0, RewardMode::Literal);
        assert_eq!(compute_reward(&literal, 10, 100), 2000);
        let normalized = params(1.0, RewardMode::Normalized);
        assert_eq!(compute_reward(&normalized, 10, 100), 1000);
    }

    #[test]
    fn half_chi_hand_computed_value() {
        // 500 + 500 * (0.5 + 1.0) / 2 = 875, cross-checked by hand.
        let p = params(0.5, RewardMode::Normalized);
        assert_eq!(compute_reward(&p, 5, 100), 875);
    }

    #[test]
    fn grid_matches_exact_rational_oracle() {
        // Independent oracle: a tiny exact-fraction calculator. Terms are
        // built and added as reduced fractions, floored at the end.
        #[derive(Clone, Copy)]
        struct Frac {
            num: u128,
            den: u128,
        }
        fn gcd(a: u128, b: u128) -> u128 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        impl Frac {
            fn new(num: u128, den: u128) -> Frac {
                let g = gcd(num.max(1), den);
                Frac { num: num / g, den: den / g }
            }
            fn add(self, other: Frac) -> Frac {
                Frac::new(self.num * other.den + other.num * self.den, self.den * other.den)
            }
            fn mul(self, other: Frac) -> Frac {
                Frac::new(self.num * other.num, self.den * other.den)
            }
            fn floor(self) -> u64 {
                (self.num / self.den) as u64
            }
        }
        fn oracle(p: u64, chi_ppm: u32, d: DifficultyTriple, b_r: u64, b_z: u64, halve: bool) -> u64 {
            let chi = Frac::new(chi_ppm as u128, CHI_DENOM as u128);
            let one_minus_chi = Frac::new(CHI_DENOM as u128 - chi_ppm as u128, CHI_DENOM as u128);
            let k = if halve { 2 } else { 1 };
            let region_term = Frac::new(b_r as u128 * d.region as u128, k * d.prime as u128);
            let zone_term = Frac::new(b_z as u128 * d.zone as u128, k * d.prime as u128);
            let p_frac = Frac::new(p as u128, 1);
            let pow_part = p_frac.mul(one_minus_chi);
            let latency_part = p_frac.mul(chi).mul(region_term.add(zone_term));
            pow_part.add(latency_part).floor()
        }
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let chis = [0.0, 0.25, 0.5, 0.75, 1.0];
        let regions = [0u64, 5, 10, 15, 20];
        let zones = [0u64, 50, 100, 150, 200];
        for &chi in &chis {
            for &b_r in &regions {
                for &b_z in &zones {
                    for mode in [RewardMode::Literal, RewardMode::Normalized] {
                        let p = RewardParams {
                            p_reward: 1_000_000,
                            chi_ppm: RewardParams::chi_from_fraction(chi),
                            difficulty: d,
                            mode,
                        };
                        let halve = mode == RewardMode::Normalized;
                        assert_eq!(
                            compute_reward(&p, b_r, b_z),
                            oracle(1_000_000, p.chi_ppm, d, b_r, b_z, halve),
                            "chi={chi} b_r={b_r} b_z={b_z} mode={mode:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn normalized_expectation_tracks_target_within_two_percent() {
        // Counts drawn from the mining level distribution: blocks arrive
        // until one achieves PRIME; each block is region-or-better with
        // probability d_z/d_r and PRIME with probability d_z/d_p.
        let p = params(1.0, RewardMode::Normalized);
        let d = p.difficulty;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let p_prime = d.zone as f64 / d.prime as f64;
        let p_region = d.zone as f64 / d.region as f64;
        let epochs = 10_000;
        let mut total: u128 = 0;
        for _ in 0..epochs {
            let mut b_z = 0u64;
            let mut b_r = 0u64;
            loop {
                b_z += 1;
                let u: f64 = rng.gen();
                if u < p_prime {
                    b_r += 1;
                    break;
                } else if u < p_region {
                    b_r += 1;
                }
            }
            total += compute_reward(&p, b_r, b_z) as u128;
        }
        let mean = total as f64 / epochs as f64;
        let target = p.p_reward as f64;
        assert!(
            (mean - target).abs() / target < 0.02,
            "mean reward {mean} vs target {target}"
        );
    }

    #[test]
    fn chi_monotonicity() {
        let d = DifficultyTriple::new(1000, 100, 10).unwrap();
        let chis: Vec<u32> = (0..=10).map(|i| i * 100_000).collect();
        // Above-nominal counts: reward non-decreasing in chi.
        for counts in [(20u64, 200u64), (10, 300), (40, 100)] {
            let rewards: Vec<u64> = chis
                .iter()
                .map(|&chi_ppm| {
                    let p = RewardParams { p_reward: 10_000, chi_ppm, difficulty: d, mode: RewardMode::Normalized };
                    compute_reward(&p, counts.0, counts.1)
                })
                .collect();
            assert!(rewards.windows(2).all(|w| w[1] >= w[0]), "{rewards:?}");
        }
        // Below-nominal counts: non-increasing.
        for counts in [(5u64, 50u64), (0, 0), (10, 50)] {
            let rewards: Vec<u64> = chis
                .iter()
                .map(|&chi_ppm| {
                    let p = RewardParams { p_reward: 10_000, chi_ppm, difficulty: d, mode: RewardMode::Normalized };
                    compute_reward(&p, counts.0, counts.1)
                })
                .collect();
            assert!(rewards.windows(2).all(|w| w[1] <= w[0]), "{rewards:?}");
        }
    }

    #[test]
    fn chi_zero_distribution_pays_prime_miner_only() {
        let p = params(0.0, RewardMode::Normalized);
        let miner = sha256d(b"prime");
        let others: Vec<Hash256> = (0..5u8).map(|i| sha256d(&[i])).collect();
        let payouts = distribute(&p, miner, &others, &others).unwrap();
        assert_eq!(payouts.total, 1000);
        assert_eq!(payouts.by_owner.get(&miner), Some(&1000));
        for other in &others {
            assert_eq!(payouts.by_owner.get(other).copied().unwrap_or(0), 0);
        }
    }

    #[test]
    fn single_miner_receives_everything() {
        let p = params(1.0, RewardMode::Normalized);
        let miner = sha256d(b"solo");
        let regions = vec![miner; 10];
        let zones = vec![miner; 100];
        let payouts = distribute(&p, miner, &regions, &zones).unwrap();
        assert_eq!(payouts.by_owner.get(&miner), Some(&payouts.total));
        assert_eq!(payouts.total, 1000);
    }

    #[test]
    fn payout_sums_equal_reward_exactly_over_random_epochs() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        for _ in 0..1000 {
            let chi_ppm = rng.gen_range(0..=CHI_DENOM as u32);
            let p = RewardParams {
                p_reward: rng.gen_range(1..=1_000_000_000),
                chi_ppm,
                difficulty: DifficultyTriple::new(1000, 100, 10).unwrap(),
                mode: if rng.gen() { RewardMode::Literal } else { RewardMode::Normalized },
            };
            let n_regions = rng.gen_range(1..=40);
            let n_zones = rng.gen_range(n_regions..=400);
            let region_finders: Vec<Hash256> =
                (0..n_regions).map(|_| sha256d(&[rng.gen::<u8>() % 7])).collect();
            let zone_finders: Vec<Hash256> =
                (0..n_zones).map(|_| sha256d(&[rng.gen::<u8>() % 13])).collect();
            let miner = zone_finders[0];
            let payouts = distribute(&p, miner, &region_finders, &zone_finders).unwrap();
            let sum: u64 = payouts.by_owner.values().sum();
            assert_eq!(sum, payouts.total);
            assert_eq!(
                payouts.total,
                compute_reward(&p, n_regions as u64, n_zones as u64)
            );
        }
    }

    #[test]
    fn missing_finder_rejected() {
        let p = params(0.5, RewardMode::Normalized);
        assert_eq!(
            distribute(&p, sha256d(b"m"), &[], &[sha256d(b"z")]),
            Err(RewardError::MissingFinder)
        );
    }

    #[test]
    fn escrow_equal_is_noop() {
        let mut s = EscrowState::default();
        let out = s.adjust(100, 100);
        assert_eq!(out, EscrowOutcome { payout: 100, ..Default::default() });
        assert_eq!(s, EscrowState::default());
    }

    #[test]
    fn escrow_sequesters_excess() {
        let mut s = EscrowState::default();
        let out = s.adjust(100, 150);
        assert_eq!(out.payout, 100);
        assert_eq!(out.sequestered, 50);
        assert_eq!(s.balance, 50);
        assert_eq!(s.cumulative_minted, 0);
    }

    #[test]
    fn escrow_draws_then_mints_on_shortfall() {
        let mut s = EscrowState { balance: 10, ..Default::default() };
        let out = s.adjust(100, 70);
        assert_eq!(out.payout, 100);
        assert_eq!(out.drawn, 10);
        assert_eq!(out.minted, 20);
        assert_eq!(s.balance, 0);
        assert_eq!(s.cumulative_minted, 20);
    }

    #[test]
    fn no_excess_minting_while_funds_cover_rewards() {
        // Whenever cumulative available stays at or above cumulative target,
        // nothing beyond schedule is minted.
        let mut s = EscrowState::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut surplus: i128 = 0;
        for _ in 0..10_000 {
            let target = rng.gen_range(50..150u64);
            // Keep actual high enough that the running surplus never dips
            // below zero.
            let actual = target + rng.gen_range(0..10u64);
            surplus += actual as i128 - target as i128;
            assert!(surplus >= 0);
            s.adjust(target, actual);
        }
        assert_eq!(s.cumulative_minted, 0);
    }
}
