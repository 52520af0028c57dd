//! Chain linkage across the three levels, upward carriage of higher-scope
//! transactions, and fork choice.
//!
//! Every block lives in its zone's chain. Blocks that clear the region
//! difficulty additionally extend their region's chain and record the zone
//! blocks aggregated since the previous region block; PRIME blocks extend
//! all three chains and record the region blocks of the closing epoch.
//! Fork choice is heaviest-work per level, each level anchored to the
//! canonical chain of the level above, ties broken by lower hash.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::hash::Hash256;
use crate::primitives::{
    Block, BlockHeader, BlockLevel, BundleAudience, Location, Scope, Transaction,
};

pub const DEFAULT_ORPHAN_POOL_LIMIT: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("block {0} already known")]
    Duplicate(Hash256),
    #[error("parent {missing} of block {block} unknown; buffered as orphan")]
    UnknownParent { block: Hash256, missing: Hash256 },
    #[error("orphan pool full, block {0} dropped")]
    OrphanPoolFull(Hash256),
    #[error("parent {parent} is not a valid anchor for a block in {location}")]
    BadParentChain { parent: Hash256, location: Location },
}

/// Difficulty context a block was accepted under; its work contribution to
/// each chain it extends.
#[derive(Clone, Copy, Debug)]
pub struct WorkContext {
    pub zone: u64,
    pub region: u64,
    pub prime: u64,
}

/// Immutable per-block record kept by the store. Transaction bodies may be
/// pruned once a block is settled and old; everything else is retained.
pub struct StoredBlock {
    pub hash: Hash256,
    pub header: BlockHeader,
    pub level: BlockLevel,
    /// Effective location the block was mined in.
    pub location: Location,
    pub miner: Hash256,
    /// False for blocks carrying a rule violation; such blocks are tracked
    /// for fork accounting but never join a canonical chain.
    pub valid: bool,
    pub found_at_us: u64,
    pub zone_height: u64,
    pub zone_work: u128,
    pub region_height: u64,
    pub region_work: u128,
    pub prime_height: u64,
    pub prime_work: u128,
    pub linked_zone_hashes: Vec<Hash256>,
    pub linked_region_hashes: Vec<Hash256>,
    pub tx_counts: [u32; 3],
    pub body: Option<Arc<Block>>,
}

impl StoredBlock {
    pub fn tx_count(&self) -> u64 {
        self.tx_counts.iter().map(|&c| c as u64).sum()
    }

    pub fn linked_count(&self) -> u64 {
        (self.linked_zone_hashes.len() + self.linked_region_hashes.len()) as u64
    }
}

/// Append-only store of every block seen by the network, genesis included.
pub struct BlockStore {
    blocks: HashMap<Hash256, StoredBlock>,
    genesis: Hash256,
    zone_members: HashMap<Location, Vec<Hash256>>,
    region_members: HashMap<u8, Vec<Hash256>>,
    prime_members: Vec<Hash256>,
}

impl BlockStore {
    pub fn new(genesis_header: BlockHeader) -> BlockStore {
        let hash = genesis_header.hash();
        let genesis = StoredBlock {
            hash,
            header: genesis_header,
            level: BlockLevel::Prime,
            location: Location::new(genesis_header.location_region, genesis_header.location_zone),
            miner: Hash256::ZERO,
            valid: true,
            found_at_us: 0,
            zone_height: 0,
            zone_work: 0,
            region_height: 0,
            region_work: 0,
            prime_height: 0,
            prime_work: 0,
            linked_zone_hashes: Vec::new(),
            linked_region_hashes: Vec::new(),
            tx_counts: [0; 3],
            body: None,
        };
        let mut blocks = HashMap::new();
        blocks.insert(hash, genesis);
        BlockStore {
            blocks,
            genesis: hash,
            zone_members: HashMap::new(),
            region_members: HashMap::new(),
            prime_members: vec![hash],
        }
    }

    pub fn genesis(&self) -> Hash256 {
        self.genesis
    }

    pub fn get(&self, hash: &Hash256) -> Option<&StoredBlock> {
        self.blocks.get(hash)
    }

    pub fn contains(&self, hash: &Hash256) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredBlock> {
        self.blocks.values()
    }

    pub fn zone_members(&self, zone: Location) -> &[Hash256] {
        self.zone_members.get(&zone).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn region_members(&self, region: u8) -> &[Hash256] {
        self.region_members.get(&region).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn prime_members(&self) -> &[Hash256] {
        &self.prime_members
    }

    /// A zone chain may root at genesis, at a PRIME block (which settles
    /// globally and anchors zones activated by a resize), or extend a block
    /// of its own zone.
    fn anchor_ok(&self, parent: &StoredBlock, location: Location, level_needed: BlockLevel) -> bool {
        parent.hash == self.genesis
            || parent.level == BlockLevel::Prime
            || (parent.level >= level_needed
                && match level_needed {
                    BlockLevel::Zone => parent.location == location,
                    BlockLevel::Region => parent.location.region == location.region,
                    _ => true,
                })
    }

    /// Inserts a validated block, computing heights and cumulative work for
    /// every chain it extends.
    pub fn insert(
        &mut self,
        block: &Block,
        level: BlockLevel,
        location: Location,
        valid: bool,
        found_at_us: u64,
        work: WorkContext,
        keep_body: bool,
    ) -> Result<Hash256, HierarchyError> {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return Err(HierarchyError::Duplicate(hash));
        }
        let parent_zone = self
            .blocks
            .get(&block.header.parent_zone)
            .ok_or(HierarchyError::UnknownParent { block: hash, missing: block.header.parent_zone })?;
        if !self.anchor_ok(parent_zone, location, BlockLevel::Zone) {
            return Err(HierarchyError::BadParentChain { parent: parent_zone.hash, location });
        }
        let zone_height = parent_zone.zone_height + 1;
        let zone_work = parent_zone.zone_work + work.zone as u128;

        let (mut region_height, mut region_work) = (0, 0);
        if level >= BlockLevel::Region {
            let parent_region = self.blocks.get(&block.header.parent_region).ok_or(
                HierarchyError::UnknownParent { block: hash, missing: block.header.parent_region },
            )?;
            if !self.anchor_ok(parent_region, location, BlockLevel::Region) {
                return Err(HierarchyError::BadParentChain { parent: parent_region.hash, location });
            }
            region_height = parent_region.region_height + 1;
            region_work = parent_region.region_work + work.region as u128;
        }

        let (mut prime_height, mut prime_work) = (0, 0);
        if level >= BlockLevel::Prime {
            let parent_prime = self.blocks.get(&block.header.parent_prime).ok_or(
                HierarchyError::UnknownParent { block: hash, missing: block.header.parent_prime },
            )?;
            prime_height = parent_prime.prime_height + 1;
            prime_work = parent_prime.prime_work + work.prime as u128;
        }

        let stored = StoredBlock {
            hash,
            header: block.header,
            level,
            location,
            miner: block.miner,
            valid,
            found_at_us,
            zone_height,
            zone_work,
            region_height,
            region_work,
            prime_height,
            prime_work,
            linked_zone_hashes: block.linked_zone_hashes.clone(),
            linked_region_hashes: block.linked_region_hashes.clone(),
            tx_counts: [
                block.zone_txs.len() as u32,
                block.region_txs.len() as u32,
                block.prime_txs.len() as u32,
            ],
            body: keep_body.then(|| Arc::new(block.clone())),
        };
        self.blocks.insert(hash, stored);
        self.zone_members.entry(location).or_default().push(hash);
        if level >= BlockLevel::Region {
            self.region_members.entry(location.region).or_default().push(hash);
        }
        if level >= BlockLevel::Prime {
            self.prime_members.push(hash);
        }
        Ok(hash)
    }

    /// Drops transaction bodies of blocks found before the horizon.
    pub fn prune_bodies(&mut self, before_us: u64) {
        for block in self.blocks.values_mut() {
            if block.found_at_us < before_us {
                block.body = None;
            }
        }
    }

    /// Walks a chain tip-to-genesis via the given parent link.
    pub fn walk_chain<'a>(
        &'a self,
        tip: Hash256,
        parent_of: impl Fn(&StoredBlock) -> Hash256 + 'a,
    ) -> impl Iterator<Item = &'a StoredBlock> + 'a {
        let mut cursor = Some(tip);
        std::iter::from_fn(move || {
            let hash = cursor?;
            let block = self.blocks.get(&hash)?;
            cursor = if hash == self.genesis { None } else { Some(parent_of(block)) };
            Some(block)
        })
    }
}

/// Canonical tip per level, the outcome of fork choice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalTips {
    pub prime: Hash256,
    pub regions: BTreeMap<u8, Hash256>,
    pub zones: BTreeMap<Location, Hash256>,
}

/// What `extend` did to the view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtendOutcome {
    /// Block joined the store; lists every canonical tip that moved.
    Accepted { reorged: bool },
    /// Parent unknown; block buffered until the parent arrives.
    Orphaned,
}

/// A full view of the block DAG with per-level canonical tips, the orphan
/// pool, and the upward-pending transaction sets.
pub struct ChainView {
    pub store: BlockStore,
    prime_tip: Hash256,
    region_tips: HashMap<u8, Hash256>,
    zone_tips: HashMap<Location, Hash256>,
    canonical_prime: HashSet<Hash256>,
    canonical_regions: HashMap<u8, HashSet<Hash256>>,
    canonical_zones: HashMap<Location, HashSet<Hash256>>,
    orphans: VecDeque<(Block, BlockLevel, Location, bool, u64, WorkContext)>,
    orphan_limit: usize,
    /// Regional transactions included in canonical zone blocks but not yet
    /// in a canonical region block, and PRIME-scope ones awaiting a PRIME
    /// block.
    pending_regional: BTreeMap<Hash256, Transaction>,
    pending_prime: BTreeMap<Hash256, Transaction>,
}

impl ChainView {
    pub fn new(genesis_header: BlockHeader) -> ChainView {
        let store = BlockStore::new(genesis_header);
        let genesis = store.genesis();
        let mut canonical_prime = HashSet::new();
        canonical_prime.insert(genesis);
        ChainView {
            store,
            prime_tip: genesis,
            region_tips: HashMap::new(),
            zone_tips: HashMap::new(),
            canonical_prime,
            canonical_regions: HashMap::new(),
            canonical_zones: HashMap::new(),
            orphans: VecDeque::new(),
            orphan_limit: DEFAULT_ORPHAN_POOL_LIMIT,
            pending_regional: BTreeMap::new(),
            pending_prime: BTreeMap::new(),
        }
    }

    pub fn genesis(&self) -> Hash256 {
        self.store.genesis()
    }

    pub fn prime_tip(&self) -> Hash256 {
        self.prime_tip
    }

    pub fn region_tip(&self, region: u8) -> Hash256 {
        self.region_tips.get(&region).copied().unwrap_or_else(|| self.genesis())
    }

    pub fn zone_tip(&self, zone: Location) -> Hash256 {
        self.zone_tips.get(&zone).copied().unwrap_or_else(|| self.genesis())
    }

    pub fn tips(&self) -> CanonicalTips {
        CanonicalTips {
            prime: self.prime_tip,
            regions: self.region_tips.iter().map(|(k, v)| (*k, *v)).collect(),
            zones: self.zone_tips.iter().map(|(k, v)| (*k, *v)).collect(),
        }
    }

    pub fn is_canonical_zone_block(&self, zone: Location, hash: &Hash256) -> bool {
        *hash == self.genesis()
            || self.canonical_zones.get(&zone).map(|s| s.contains(hash)).unwrap_or(false)
    }

    pub fn is_canonical_prime(&self, hash: &Hash256) -> bool {
        self.canonical_prime.contains(hash)
    }

    pub fn is_canonical_region_block(&self, region: u8, hash: &Hash256) -> bool {
        *hash == self.genesis()
            || self.canonical_regions.get(&region).map(|s| s.contains(hash)).unwrap_or(false)
    }

    pub fn pending_regional(&self) -> &BTreeMap<Hash256, Transaction> {
        &self.pending_regional
    }

    pub fn pending_prime(&self) -> &BTreeMap<Hash256, Transaction> {
        &self.pending_prime
    }

    /// Inserts a block and re-runs fork choice. Unknown parents buffer the
    /// block; arrival of the parent replays it.
    pub fn extend(
        &mut self,
        block: &Block,
        level: BlockLevel,
        location: Location,
        valid: bool,
        found_at_us: u64,
        work: WorkContext,
    ) -> Result<ExtendOutcome, HierarchyError> {
        match self.store.insert(block, level, location, valid, found_at_us, work, true) {
            Ok(_) => {}
            Err(HierarchyError::UnknownParent { block: hash, .. }) => {
                if self.orphans.len() >= self.orphan_limit {
                    return Err(HierarchyError::OrphanPoolFull(hash));
                }
                self.orphans
                    .push_back((block.clone(), level, location, valid, found_at_us, work));
                return Ok(ExtendOutcome::Orphaned);
            }
            Err(e) => return Err(e),
        }
        let moved = self.update_tips_after_insert(level, location);
        let reorged = self.track_pending(block, level, location);
        Ok(ExtendOutcome::Accepted { reorged: reorged || moved })
    }

    /// Replays buffered orphans whose parents have arrived. Returns how many
    /// were connected.
    pub fn drain_orphans(&mut self) -> usize {
        let mut connected = 0;
        loop {
            let mut progressed = false;
            let mut remaining = VecDeque::new();
            while let Some((block, level, location, valid, at, work)) = self.orphans.pop_front() {
                let parent_known = self.store.contains(&block.header.parent_zone);
                if parent_known {
                    if self
                        .store
                        .insert(&block, level, location, valid, at, work, true)
                        .is_ok()
                    {
                        connected += 1;
                        progressed = true;
                    }
                } else {
                    remaining.push_back((block, level, location, valid, at, work));
                }
            }
            self.orphans = remaining;
            if !progressed {
                break;
            }
        }
        if connected > 0 {
            self.fork_choice();
        }
        connected
    }

    fn track_pending(&mut self, block: &Block, level: BlockLevel, location: Location) -> bool {
        // Queue higher-scope txs carried by canonical zone blocks; settle
        // them out of the pending sets when a high-enough canonical block
        // includes them.
        let hash = block.hash();
        if !self.is_canonical_zone_block(location, &hash) {
            return false;
        }
        if level < BlockLevel::Region {
            for tx in &block.region_txs {
                self.pending_regional.entry(tx.txid()).or_insert_with(|| tx.clone());
            }
        } else {
            for tx in &block.region_txs {
                self.pending_regional.remove(&tx.txid());
            }
        }
        if level < BlockLevel::Prime {
            for tx in &block.prime_txs {
                self.pending_prime.entry(tx.txid()).or_insert_with(|| tx.clone());
            }
        } else {
            for tx in &block.prime_txs {
                self.pending_prime.remove(&tx.txid());
            }
        }
        false
    }

    /// Incremental fork choice after one insert: only the chains the new
    /// block can affect are re-evaluated. A PRIME-level insert falls back
    /// to the full pass since every anchor may shift.
    fn update_tips_after_insert(&mut self, level: BlockLevel, location: Location) -> bool {
        if level >= BlockLevel::Prime {
            let before = self.prime_tip;
            self.fork_choice();
            return self.prime_tip != before || true;
        }
        let mut moved = false;
        if level >= BlockLevel::Region {
            moved |= self.refresh_region(location.region);
            if moved {
                // A region tip move can re-anchor every zone below it.
                let zones: Vec<Location> = self
                    .store
                    .zone_members
                    .keys()
                    .copied()
                    .filter(|z| z.region == location.region)
                    .collect();
                for zone in zones {
                    self.refresh_zone(zone);
                }
                return true;
            }
        }
        moved |= self.refresh_zone(location);
        moved
    }

    fn refresh_region(&mut self, region: u8) -> bool {
        let genesis = self.genesis();
        let mut best = (0u128, genesis);
        for hash in self.store.region_members(region) {
            let block = self.store.get(hash).expect("indexed");
            if !block.valid {
                continue;
            }
            let anchored = block.header.parent_prime == genesis
                || self.canonical_prime.contains(&block.header.parent_prime);
            if !anchored {
                continue;
            }
            let key = (block.region_work, *hash);
            if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
                best = key;
            }
        }
        let tip = best.1;
        let old = self.region_tips.get(&region).copied().unwrap_or(genesis);
        if old == tip && self.canonical_regions.contains_key(&region) {
            return false;
        }
        let parent_of_new = self.store.get(&tip).map(|b| b.header.parent_region);
        if parent_of_new == Some(old) {
            self.canonical_regions.entry(region).or_default().insert(tip);
        } else {
            let set = self
                .store
                .walk_chain(tip, |b| b.header.parent_region)
                .map(|b| b.hash)
                .collect();
            self.canonical_regions.insert(region, set);
        }
        self.region_tips.insert(region, tip);
        old != tip
    }

    fn refresh_zone(&mut self, zone: Location) -> bool {
        let genesis = self.genesis();
        let region_set = self.canonical_regions.get(&zone.region);
        let mut best = (0u128, genesis);
        for hash in self.store.zone_members(zone) {
            let block = self.store.get(hash).expect("indexed");
            if !block.valid {
                continue;
            }
            let anchored = block.header.parent_region == genesis
                || region_set.map(|s| s.contains(&block.header.parent_region)).unwrap_or(false)
                || self.canonical_prime.contains(&block.header.parent_region);
            if !anchored {
                continue;
            }
            let key = (block.zone_work, *hash);
            if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
                best = key;
            }
        }
        let tip = best.1;
        let old = self.zone_tips.get(&zone).copied().unwrap_or(genesis);
        if old == tip && self.canonical_zones.contains_key(&zone) {
            return false;
        }
        let parent_of_new = self.store.get(&tip).map(|b| b.header.parent_zone);
        if parent_of_new == Some(old) {
            self.canonical_zones.entry(zone).or_default().insert(tip);
        } else {
            let set = self
                .store
                .walk_chain(tip, |b| b.header.parent_zone)
                .map(|b| b.hash)
                .collect();
            self.canonical_zones.insert(zone, set);
        }
        self.zone_tips.insert(zone, tip);
        old != tip
    }

    /// Heaviest-work fork choice, level by level.
    ///
    /// PRIME first: greatest cumulative PRIME work. Then, per region, the
    /// heaviest region chain among blocks anchored to the canonical PRIME
    /// chain; then per zone among blocks anchored to the canonical region
    /// chain. Ties break toward the lower hash.
    pub fn fork_choice(&mut self) -> CanonicalTips {
        let genesis = self.genesis();

        let mut best_prime = (0u128, genesis);
        for hash in self.store.prime_members() {
            let block = self.store.get(hash).expect("indexed");
            if !block.valid {
                continue;
            }
            let key = (block.prime_work, *hash);
            if key.0 > best_prime.0 || (key.0 == best_prime.0 && key.1 < best_prime.1) {
                best_prime = key;
            }
        }
        if best_prime.1 != self.prime_tip || self.canonical_prime.is_empty() {
            self.prime_tip = best_prime.1;
            self.canonical_prime = self
                .store
                .walk_chain(self.prime_tip, |b| b.header.parent_prime)
                .map(|b| b.hash)
                .collect();
        }

        let regions: Vec<u8> = self.store.region_members.keys().copied().collect();
        for region in regions {
            let mut best = (0u128, genesis);
            for hash in self.store.region_members(region) {
                let block = self.store.get(hash).expect("indexed");
                if !block.valid {
                    continue;
                }
                let anchored = block.header.parent_prime == genesis
                    || self.canonical_prime.contains(&block.header.parent_prime);
                if !anchored {
                    continue;
                }
                let key = (block.region_work, *hash);
                if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
                    best = key;
                }
            }
            let tip = best.1;
            if self.region_tips.get(&region) != Some(&tip)
                || !self.canonical_regions.contains_key(&region)
            {
                let set = self
                    .store
                    .walk_chain(tip, |b| b.header.parent_region)
                    .map(|b| b.hash)
                    .collect();
                self.region_tips.insert(region, tip);
                self.canonical_regions.insert(region, set);
            }
        }

        let zones: Vec<Location> = self.store.zone_members.keys().copied().collect();
        for zone in zones {
            let region_set = self.canonical_regions.get(&zone.region);
            let mut best = (0u128, genesis);
            for hash in self.store.zone_members(zone) {
                let block = self.store.get(hash).expect("indexed");
                if !block.valid {
                    continue;
                }
                let anchored = block.header.parent_region == genesis
                    || region_set.map(|s| s.contains(&block.header.parent_region)).unwrap_or(false)
                    || self.canonical_prime.contains(&block.header.parent_region);
                if !anchored {
                    continue;
                }
                let key = (block.zone_work, *hash);
                if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
                    best = key;
                }
            }
            let tip = best.1;
            if self.zone_tips.get(&zone) != Some(&tip) || !self.canonical_zones.contains_key(&zone)
            {
                let set = self
                    .store
                    .walk_chain(tip, |b| b.header.parent_zone)
                    .map(|b| b.hash)
                    .collect();
                self.zone_tips.insert(zone, tip);
                self.canonical_zones.insert(zone, set);
            }
        }

        self.tips()
    }

    /// Every block on any canonical chain (zone, region or PRIME),
    /// genesis included.
    pub fn canonical_blocks(&self) -> Vec<Hash256> {
        let mut set: HashSet<Hash256> = HashSet::new();
        set.extend(self.canonical_prime.iter().copied());
        for members in self.canonical_regions.values() {
            set.extend(members.iter().copied());
        }
        for members in self.canonical_zones.values() {
            set.extend(members.iter().copied());
        }
        set.into_iter().collect()
    }

    /// Ordered canonical chain dump: one line per block,
    /// `level hash parent_prime parent_region parent_zone location zone_h region_h prime_h linked_zone linked_region`.
    pub fn export_canonical(&self) -> String {
        let mut lines: Vec<(u64, u64, String)> = Vec::new();
        let mut seen = HashSet::new();
        let emit = |block: &StoredBlock, lines: &mut Vec<(u64, u64, String)>, seen: &mut HashSet<Hash256>| {
            if !seen.insert(block.hash) {
                return;
            }
            let line = format!(
                "{} {} {} {} {} {},{} {} {} {} {} {}",
                block.level,
                block.hash.to_hex(),
                block.header.parent_prime.to_hex(),
                block.header.parent_region.to_hex(),
                block.header.parent_zone.to_hex(),
                block.location.region,
                block.location.zone,
                block.zone_height,
                block.region_height,
                block.prime_height,
                block.linked_zone_hashes.len(),
                block.linked_region_hashes.len(),
            );
            lines.push((block.found_at_us, block.zone_height, line));
        };
        for (_, tip) in self.zone_tips.iter() {
            for block in self.store.walk_chain(*tip, |b| b.header.parent_zone) {
                emit(block, &mut lines, &mut seen);
            }
        }
        for block in self.store.walk_chain(self.prime_tip, |b| b.header.parent_prime) {
            emit(block, &mut lines, &mut seen);
        }
        lines.sort();
        let mut out = String::new();
        for (_, _, line) in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// The data bundle a block presents to a peer on a given tier: the header
/// plus only the transactions of scope the recipient cares about. A zone's
/// own zonal transactions never travel to other zones outside full-block
/// requests from its own members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareBundle {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
    pub linked_zone_hashes: Vec<Hash256>,
    pub linked_region_hashes: Vec<Hash256>,
}

impl ShareBundle {
    pub fn accounting_bytes(&self, tx_bytes: u64) -> u64 {
        crate::primitives::HEADER_BYTES as u64
            + tx_bytes * self.txs.len() as u64
            + 32 * (self.linked_zone_hashes.len() + self.linked_region_hashes.len()) as u64
    }
}

/// Assembles the share set of a freshly found block for one audience tier.
pub fn share_set_for_peers(block: &Block, level: BlockLevel, audience: BundleAudience) -> ShareBundle {
    match audience {
        BundleAudience::OwnZone => ShareBundle {
            header: block.header,
            txs: block.all_txs().cloned().collect(),
            linked_zone_hashes: block.linked_zone_hashes.clone(),
            linked_region_hashes: block.linked_region_hashes.clone(),
        },
        BundleAudience::Region => ShareBundle {
            header: block.header,
            txs: block.region_txs.iter().chain(block.prime_txs.iter()).cloned().collect(),
            linked_zone_hashes: if level >= BlockLevel::Region {
                block.linked_zone_hashes.clone()
            } else {
                Vec::new()
            },
            linked_region_hashes: Vec::new(),
        },
        BundleAudience::Global => ShareBundle {
            header: block.header,
            txs: block.prime_txs.to_vec(),
            linked_zone_hashes: Vec::new(),
            linked_region_hashes: if level >= BlockLevel::Prime {
                block.linked_region_hashes.clone()
            } else {
                Vec::new()
            },
        },
    }
}

/// Scope sets a block build draws from.
#[derive(Clone, Debug, Default)]
pub struct WorkingSets {
    pub zonal: Vec<Transaction>,
    pub regional: Vec<Transaction>,
    pub prime: Vec<Transaction>,
}

/// Scope of a transaction set inside a block, for set placement.
pub fn set_for_scope(scope: Scope) -> usize {
    match scope {
        Scope::Zonal => 0,
        Scope::Regional => 1,
        Scope::Prime => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256d;
    use crate::primitives::{interlink_root, ChainTips, MapSize, OutPoint, TxOutput};

    const WORK: WorkContext = WorkContext { zone: 10, region: 100, prime: 1000 };

    fn genesis_header() -> BlockHeader {
        BlockHeader { version: 1, ..BlockHeader::zeroed() }
    }

    fn make_block(
        view: &ChainView,
        location: Location,
        nonce: u64,
        region_txs: Vec<Transaction>,
    ) -> Block {
        let zone_tip = view.zone_tip(location);
        let region_tip = view.region_tip(location.region);
        let prime_tip = view.prime_tip();
        let mut header = BlockHeader::zeroed();
        header.parent_zone = zone_tip;
        header.parent_region = region_tip;
        header.parent_prime = prime_tip;
        header.location_region = location.region;
        header.location_zone = location.zone;
        header.nonce = nonce;
        header.merkle_root_interlink =
            interlink_root(&ChainTips { prime: prime_tip, region: region_tip, zone: zone_tip });
        Block {
            header,
            miner: sha256d(&[nonce as u8, 0x99]),
            zone_txs: vec![],
            region_txs,
            prime_txs: vec![],
            linked_zone_hashes: vec![],
            linked_region_hashes: vec![],
        }
    }

    fn regional_tx(tag: u8) -> Transaction {
        Transaction {
            inputs: vec![OutPoint::new(sha256d(&[tag]), 0)],
            outputs: vec![TxOutput {
                amount: 5,
                destination: Location::new(0, 1),
                owner: sha256d(&[tag, 2]),
            }],
            location: Location::new(0, 0),
            fee: 1,
            witness: Vec::new(),
        }
    }

    #[test]
    fn zone_then_region_linkage() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        let z1 = make_block(&view, zone, 1, vec![]);
        let z1_hash = z1.hash();
        view.extend(&z1, BlockLevel::Zone, zone, true, 1000, WORK).unwrap();
        assert_eq!(view.zone_tip(zone), z1_hash);
        assert_eq!(view.region_tip(0), view.genesis());

        let mut r1 = make_block(&view, zone, 2, vec![]);
        r1.linked_zone_hashes = vec![z1_hash];
        let r1_hash = r1.hash();
        view.extend(&r1, BlockLevel::Region, zone, true, 2000, WORK).unwrap();
        assert_eq!(view.region_tip(0), r1_hash);
        // The region block is also the zone tip of its zone.
        assert_eq!(view.zone_tip(zone), r1_hash);
        assert_eq!(view.store.get(&r1_hash).unwrap().linked_zone_hashes, vec![z1_hash]);
    }

    #[test]
    fn longer_zone_fork_wins() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        // Build a 5-block chain.
        for n in 0..5 {
            let b = make_block(&view, zone, n, vec![]);
            view.extend(&b, BlockLevel::Zone, zone, true, 100 * n, WORK).unwrap();
        }
        let short_tip = view.zone_tip(zone);
        // Build a 7-block fork from genesis by inserting blocks that chain
        // off each other without consulting the canonical tip.
        let mut parent = view.genesis();
        let mut fork_tip = parent;
        for n in 0..7u64 {
            let mut header = BlockHeader::zeroed();
            header.parent_zone = parent;
            header.parent_region = view.genesis();
            header.parent_prime = view.genesis();
            header.nonce = 1000 + n;
            let b = Block {
                header,
                miner: sha256d(b"fork"),
                zone_txs: vec![],
                region_txs: vec![],
                prime_txs: vec![],
                linked_zone_hashes: vec![],
                linked_region_hashes: vec![],
            };
            fork_tip = b.hash();
            view.extend(&b, BlockLevel::Zone, zone, true, 50 * n, WORK).unwrap();
            parent = fork_tip;
        }
        assert_ne!(view.zone_tip(zone), short_tip);
        assert_eq!(view.zone_tip(zone), fork_tip);
    }

    #[test]
    fn equal_work_breaks_ties_toward_lower_hash() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        let a = make_block(&view, zone, 1, vec![]);
        let b = make_block(&view, zone, 2, vec![]);
        let (low, high) = if a.hash() < b.hash() { (a, b) } else { (b, a) };
        view.extend(&high, BlockLevel::Zone, zone, true, 10, WORK).unwrap();
        view.extend(&low, BlockLevel::Zone, zone, true, 20, WORK).unwrap();
        assert_eq!(view.zone_tip(zone), low.hash());
    }

    #[test]
    fn invalid_blocks_never_become_canonical() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        let honest = make_block(&view, zone, 1, vec![]);
        view.extend(&honest, BlockLevel::Zone, zone, true, 10, WORK).unwrap();
        // A heavier but invalid fork.
        let mut parent = view.genesis();
        for n in 0..4u64 {
            let mut header = BlockHeader::zeroed();
            header.parent_zone = parent;
            header.parent_region = view.genesis();
            header.parent_prime = view.genesis();
            header.nonce = 2000 + n;
            let b = Block {
                header,
                miner: sha256d(b"evil"),
                zone_txs: vec![],
                region_txs: vec![],
                prime_txs: vec![],
                linked_zone_hashes: vec![],
                linked_region_hashes: vec![],
            };
            parent = b.hash();
            view.extend(&b, BlockLevel::Zone, zone, false, 30 + n, WORK).unwrap();
        }
        assert_eq!(view.zone_tip(zone), honest.hash());
    }

    #[test]
    fn orphans_connect_when_parent_arrives() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        let parent = make_block(&view, zone, 1, vec![]);
        let parent_hash = parent.hash();
        // Child references the parent before the view knows it.
        let mut header = BlockHeader::zeroed();
        header.parent_zone = parent_hash;
        header.parent_region = view.genesis();
        header.parent_prime = view.genesis();
        header.nonce = 77;
        let child = Block {
            header,
            miner: sha256d(b"c"),
            zone_txs: vec![],
            region_txs: vec![],
            prime_txs: vec![],
            linked_zone_hashes: vec![],
            linked_region_hashes: vec![],
        };
        let outcome = view.extend(&child, BlockLevel::Zone, zone, true, 5, WORK).unwrap();
        assert_eq!(outcome, ExtendOutcome::Orphaned);
        view.extend(&parent, BlockLevel::Zone, zone, true, 4, WORK).unwrap();
        assert_eq!(view.drain_orphans(), 1);
        assert_eq!(view.zone_tip(zone), child.hash());
    }

    #[test]
    fn pending_upward_queue_and_settle() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        let tx = regional_tx(1);
        let txid = tx.txid();
        let z1 = make_block(&view, zone, 1, vec![tx.clone()]);
        view.extend(&z1, BlockLevel::Zone, zone, true, 10, WORK).unwrap();
        assert!(view.pending_regional().contains_key(&txid));
        let r1 = make_block(&view, zone, 2, vec![tx]);
        view.extend(&r1, BlockLevel::Region, zone, true, 20, WORK).unwrap();
        assert!(!view.pending_regional().contains_key(&txid));
    }

    #[test]
    fn share_bundles_by_audience() {
        let zone = Location::new(0, 0);
        let view = ChainView::new(genesis_header());
        let mut block = make_block(&view, zone, 3, vec![regional_tx(1), regional_tx(2)]);
        block.zone_txs = vec![];
        block.linked_zone_hashes = vec![sha256d(b"zb")];
        let region_bundle = share_set_for_peers(&block, BlockLevel::Region, BundleAudience::Region);
        assert_eq!(region_bundle.txs.len(), 2);
        assert_eq!(region_bundle.linked_zone_hashes.len(), 1);
        let global_bundle = share_set_for_peers(&block, BlockLevel::Region, BundleAudience::Global);
        assert!(global_bundle.txs.is_empty());
        // Header-only bundle for a block with nothing of the recipient's scope.
        assert_eq!(
            global_bundle.accounting_bytes(100),
            crate::primitives::HEADER_BYTES as u64
        );
        // A 1000-tx region block's header is a small fraction of its bundle.
        let mut big = block.clone();
        big.region_txs = (0..1000).map(|i| regional_tx((i % 250) as u8)).collect();
        let bundle = share_set_for_peers(&big, BlockLevel::Region, BundleAudience::Region);
        let ratio = crate::primitives::HEADER_BYTES as f64 / bundle.accounting_bytes(100) as f64;
        assert!(ratio < 1.0 / 300.0, "header share {ratio}");
    }

    #[test]
    fn share_bundle_sizes_match_block_accounting() {
        let zone = Location::new(0, 0);
        let view = ChainView::new(genesis_header());
        let mut block = make_block(&view, zone, 3, vec![regional_tx(1)]);
        block.linked_zone_hashes = vec![sha256d(b"zb"), sha256d(b"zb2")];
        for audience in [BundleAudience::OwnZone, BundleAudience::Region, BundleAudience::Global] {
            let bundle = share_set_for_peers(&block, BlockLevel::Region, audience);
            assert_eq!(
                bundle.accounting_bytes(100),
                block.bundle_bytes(audience, 100, BlockLevel::Region),
                "{audience:?}"
            );
        }
    }

    #[test]
    fn export_is_parseable_and_ordered() {
        let mut view = ChainView::new(genesis_header());
        let zone = Location::new(0, 0);
        for n in 0..3 {
            let b = make_block(&view, zone, n, vec![]);
            view.extend(&b, BlockLevel::Zone, zone, true, 100 * (n + 1), WORK).unwrap();
        }
        let dump = view.export_canonical();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 4); // genesis + 3
        for line in lines {
            assert_eq!(line.split_whitespace().count(), 11);
        }
        let _ = MapSize::FULL;
    }
}
