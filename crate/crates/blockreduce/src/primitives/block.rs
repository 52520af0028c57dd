//! Full blocks: a header plus the three scope-partitioned transaction sets
//! and the linked lower-level block hashes.

use serde::{Deserialize, Serialize};

use super::{merkle_root, BlockHeader, BlockLevel, Transaction};
use crate::hash::Hash256;

/// Latest canonical tip per level, as seen by a miner when it builds the
/// interlink field.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChainTips {
    pub prime: Hash256,
    pub region: Hash256,
    pub zone: Hash256,
}

/// Interlink root carried in every header: merkle root over the three
/// current tips (PRIME, region, zone) as seen by the miner. Only the
/// carried-field rule; no proof machinery hangs off it here.
pub fn interlink_root(tips: &ChainTips) -> Hash256 {
    merkle_root(&[tips.prime, tips.region, tips.zone])
}

/// A block at any level. Zone, region and PRIME blocks look identical; what
/// distinguishes them is the difficulty the header hash achieved.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    /// Identity credited with finding this block; reward payouts key on it.
    pub miner: Hash256,
    /// Transactions of zonal scope relative to the header location.
    pub zone_txs: Vec<Transaction>,
    /// Regional-scope working set at mining time.
    pub region_txs: Vec<Transaction>,
    /// PRIME-scope working set at mining time.
    pub prime_txs: Vec<Transaction>,
    /// Zone blocks aggregated since the previous region block; populated
    /// when the achieved level is REGION or above.
    pub linked_zone_hashes: Vec<Hash256>,
    /// Region blocks aggregated since the previous PRIME block; populated
    /// only at PRIME level.
    pub linked_region_hashes: Vec<Hash256>,
}

impl Block {
    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    pub fn tx_count(&self) -> usize {
        self.zone_txs.len() + self.region_txs.len() + self.prime_txs.len()
    }

    pub fn all_txs(&self) -> impl Iterator<Item = &Transaction> {
        self.zone_txs
            .iter()
            .chain(self.region_txs.iter())
            .chain(self.prime_txs.iter())
    }

    /// Merkle roots over the three transaction sets, for header construction
    /// and validation.
    pub fn compute_tx_roots(&self) -> (Hash256, Hash256, Hash256) {
        let zone: Vec<Hash256> = self.zone_txs.iter().map(|t| t.txid()).collect();
        let region: Vec<Hash256> = self.region_txs.iter().map(|t| t.txid()).collect();
        let prime: Vec<Hash256> = self.prime_txs.iter().map(|t| t.txid()).collect();
        (
            merkle_root(&prime),
            merkle_root(&region),
            merkle_root(&zone),
        )
    }

    /// True when the header merkle roots commit to the carried tx sets.
    pub fn check_tx_roots(&self) -> bool {
        let (prime, region, zone) = self.compute_tx_roots();
        self.header.merkle_root_prime == prime
            && self.header.merkle_root_region == region
            && self.header.merkle_root_zone == zone
    }

    /// Bytes this block contributes to storage accounting: fixed header size
    /// plus the per-transaction accounting size and 32 bytes per linked hash.
    pub fn accounting_bytes(&self, tx_bytes: u64) -> u64 {
        super::HEADER_BYTES as u64
            + tx_bytes * self.tx_count() as u64
            + 32 * (self.linked_zone_hashes.len() + self.linked_region_hashes.len()) as u64
    }

    /// Level-dependent share of this block's data relevant to a recipient
    /// outside the origin zone; see `hierarchy::share_set_for_peers`.
    pub fn higher_scope_tx_count(&self) -> usize {
        self.region_txs.len() + self.prime_txs.len()
    }
}

/// Payload sizes a block presents to each propagation tier.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BundleAudience {
    /// Same zone: the full block.
    OwnZone,
    /// Sibling zones of the same region: header, regional and PRIME
    /// transactions, linked zone hashes.
    Region,
    /// Other regions: header, PRIME transactions, linked region hashes.
    Global,
}

impl Block {
    /// Accounting size of the bundle served to a requesting peer on the
    /// given tier. Zonal transactions of a foreign zone never leave it.
    pub fn bundle_bytes(&self, audience: BundleAudience, tx_bytes: u64, level: BlockLevel) -> u64 {
        let header = super::HEADER_BYTES as u64;
        match audience {
            BundleAudience::OwnZone => self.accounting_bytes(tx_bytes),
            BundleAudience::Region => {
                let mut bytes = header + tx_bytes * self.higher_scope_tx_count() as u64;
                if level >= BlockLevel::Region {
                    bytes += 32 * self.linked_zone_hashes.len() as u64;
                }
                bytes
            }
            BundleAudience::Global => {
                let mut bytes = header + tx_bytes * self.prime_txs.len() as u64;
                if level >= BlockLevel::Prime {
                    bytes += 32 * self.linked_region_hashes.len() as u64;
                }
                bytes
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256d;
    use crate::primitives::{Location, OutPoint, TxOutput};

    fn tx(seed: u8, dest: Location) -> Transaction {
        Transaction {
            inputs: vec![OutPoint::new(sha256d(&[seed]), 0)],
            outputs: vec![TxOutput { amount: 10, destination: dest, owner: sha256d(&[seed, 1]) }],
            location: Location::new(1, 1),
            fee: 1,
            witness: Vec::new(),
        }
    }

    #[test]
    fn interlink_at_genesis_covers_three_copies() {
        let g = sha256d(b"genesis");
        let tips = ChainTips { prime: g, region: g, zone: g };
        assert_eq!(interlink_root(&tips), merkle_root(&[g, g, g]));
    }

    #[test]
    fn interlink_changes_with_zone_tip() {
        let g = sha256d(b"genesis");
        let z = sha256d(b"zone1");
        let at_genesis = interlink_root(&ChainTips { prime: g, region: g, zone: g });
        let after_zone = interlink_root(&ChainTips { prime: g, region: g, zone: z });
        assert_eq!(after_zone, merkle_root(&[g, g, z]));
        assert_ne!(at_genesis, after_zone);
    }

    #[test]
    fn tx_roots_commit_to_sets() {
        let mut header = BlockHeader::zeroed();
        let block = Block {
            header,
            miner: sha256d(b"m"),
            zone_txs: vec![tx(1, Location::new(1, 1))],
            region_txs: vec![tx(2, Location::new(1, 2))],
            prime_txs: vec![tx(3, Location::new(2, 0))],
            linked_zone_hashes: vec![],
            linked_region_hashes: vec![],
        };
        assert!(!block.check_tx_roots());
        let (p, r, z) = block.compute_tx_roots();
        header.merkle_root_prime = p;
        header.merkle_root_region = r;
        header.merkle_root_zone = z;
        let block = Block { header, ..block };
        assert!(block.check_tx_roots());
    }

    #[test]
    fn bundle_sizes_by_audience() {
        let block = Block {
            header: BlockHeader::zeroed(),
            miner: sha256d(b"m"),
            zone_txs: (0..80).map(|i| tx(i, Location::new(1, 1))).collect(),
            region_txs: (0..15).map(|i| tx(i + 80, Location::new(1, 2))).collect(),
            prime_txs: (0..5).map(|i| tx(i + 95, Location::new(2, 0))).collect(),
            linked_zone_hashes: vec![sha256d(b"z1")],
            linked_region_hashes: vec![],
        };
        let header = HEADER_BYTES_U64;
        // Sibling zones get only the 20 higher-scope txs, never the 80 zonal.
        assert_eq!(
            block.bundle_bytes(BundleAudience::Region, 100, BlockLevel::Zone),
            header + 20 * 100
        );
        assert_eq!(
            block.bundle_bytes(BundleAudience::Global, 100, BlockLevel::Zone),
            header + 5 * 100
        );
        assert_eq!(
            block.bundle_bytes(BundleAudience::OwnZone, 100, BlockLevel::Zone),
            header + 100 * 100 + 32
        );
    }

    const HEADER_BYTES_U64: u64 = crate::primitives::HEADER_BYTES as u64;
}
