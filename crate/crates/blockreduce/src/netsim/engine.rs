//! The discrete-event simulator: seeded nodes, two-tier gossip, sampled
//! merge-mining, canonical settlement, rewards, resizing and group
//! selection, all in one deterministic event loop.
//!
//! Determinism contract: every source of randomness is a dedicated ChaCha
//! stream keyed by (seed, domain, index); event ordering is (time,
//! sequence); all cross-node iteration uses ordered containers. Identical
//! (config, seed) pairs replay event for event.
//!
//! Two desk-scale shortcuts, both invisible to the measured quantities:
//! block contents materialize at the find event (sampled mining has no
//! in-flight grinding window), and validation consults the canonical
//! ledger while propagation timing still follows per-node knowledge.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::hash::{sha256d, Hash256};
use crate::hierarchy::{ChainView, WorkContext};
use crate::ledger::{BlockUndo, LedgerState, NodeRole, SettlementStatus};
use crate::pow::{retarget, target_for_difficulty, target_to_compact, DifficultyTriple};
use crate::primitives::{
    interlink_root, Block, BlockHeader, BlockLevel, ChainTips, KeyedHashScheme, Location, MapSize,
    OutPoint, Scope, SignatureScheme, Transaction, TxOutput,
};
use crate::rewards::{
    distribute, EmissionSchedule, EscrowOutcome, EscrowState, RewardAudit, RewardParams,
};
use crate::sizing::{MapState, ResizeStep, SizingParams};

use super::config::SimConfig;
use super::metrics::{
    LatencyStats, LevelCounts, MsgClass, NodeTraffic, ResizeEvent, SimMetrics, StorageReport,
};
use super::rng::stream;

const HEADER_BYTES: u64 = crate::primitives::HEADER_BYTES as u64;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Event {
    NextArrival,
    Mining { node: usize, epoch: u64 },
    TxAnnounce { to: usize, txid: Hash256, from: usize },
    TxBody { to: usize, txid: Hash256, from: usize },
    BlockHeader { to: usize, hash: Hash256, from: usize },
    BlockBundle { to: usize, hash: Hash256, from: usize },
    Review { node: usize },
    AttackStart,
    Prune,
}

#[derive(PartialEq, Eq)]
struct Scheduled {
    at_us: u64,
    seq: u64,
    event: Event,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_us, self.seq).cmp(&(other.at_us, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct MempoolQueue {
    queue: VecDeque<Hash256>,
    set: HashSet<Hash256>,
    cap: usize,
}

impl MempoolQueue {
    fn new(cap: usize) -> MempoolQueue {
        MempoolQueue { queue: VecDeque::new(), set: HashSet::new(), cap }
    }

    fn push(&mut self, txid: Hash256) -> bool {
        if self.set.contains(&txid) {
            return false;
        }
        if self.set.len() >= self.cap {
            // FIFO eviction.
            while let Some(old) = self.queue.pop_front() {
                if self.set.remove(&old) {
                    break;
                }
            }
        }
        self.set.insert(txid);
        self.queue.push_back(txid);
        true
    }

    fn remove(&mut self, txid: &Hash256) {
        self.set.remove(txid);
    }

    /// Iterates live entries in arrival order.
    fn iter_live<'a>(&'a self) -> impl Iterator<Item = &'a Hash256> + 'a {
        self.queue.iter().filter(|id| self.set.contains(*id))
    }

    fn compact(&mut self) {
        if self.queue.len() > 2 * self.set.len() + 64 {
            let set = &self.set;
            self.queue.retain(|id| set.contains(id));
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BlockSeen {
    Requested,
    Accepted,
}

struct Node {
    owner: Hash256,
    hash_power: f64,
    zone: Location,
    coords: (f64, f64),
    zone_peers: Vec<usize>,
    region_peers: Vec<usize>,
    global_peers: Vec<usize>,
    zone_tip: Hash256,
    region_tip: Hash256,
    prime_tip: Hash256,
    seen_blocks: HashMap<Hash256, (BlockSeen, u64)>,
    seen_txs: HashMap<Hash256, u64>,
    mempool: [MempoolQueue; 3],
    unlinked_zones: Vec<Hash256>,
    unlinked_regions: Vec<Hash256>,
    mining_epoch: u64,
    mining_rng: ChaCha12Rng,
    review_rng: ChaCha12Rng,
    traffic: NodeTraffic,
    adversary: bool,
    adversary_active: bool,
}

struct TxRecord {
    tx: Option<Arc<Transaction>>,
    scope: Scope,
    origin: Location,
    arrival_us: u64,
    settled_at_us: Option<u64>,
}

struct OwnerWallet {
    home_declared: Location,
    utxos: VecDeque<(OutPoint, u64, u64)>,
}

struct JournalEntry {
    hash: Hash256,
    undo: BlockUndo,
    settled: Vec<(Hash256, Scope, u64)>,
    locked: Vec<Hash256>,
    fees: u64,
    is_prime: bool,
    escrow: Option<(EscrowOutcome, u64)>,
    fill_sample: Option<f64>,
}

struct BlockPropData {
    zone: Location,
    bundle_bytes: [u64; 3],
    zonal_ids: Arc<Vec<Hash256>>,
    regional_ids: Arc<Vec<Hash256>>,
    prime_ids: Arc<Vec<Hash256>>,
    created_us: u64,
}

/// Adversary fork race log for the attack scenario.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct AttackRace {
    pub adversary_ever_led: bool,
    pub honest_final_lead: i128,
    pub overtake_time_s: Option<f64>,
    pub migrated_into_zone: u64,
}

pub struct Engine {
    config: SimConfig,
    seed: u64,
    now_us: u64,
    end_us: u64,
    seq: u64,
    events: BinaryHeap<Reverse<Scheduled>>,

    view: ChainView,
    ledger: LedgerState,
    journal: Vec<JournalEntry>,
    applied_set: HashSet<Hash256>,
    accept_seq: HashMap<Hash256, u64>,
    next_accept_seq: u64,

    map_state: MapState,
    zone_difficulty: BTreeMap<Location, u64>,
    region_difficulty: BTreeMap<u8, u64>,
    prime_difficulty: u64,
    zone_retarget: BTreeMap<Location, (u32, u64)>,
    region_retarget: BTreeMap<u8, (u32, u64)>,
    prime_retarget: (u32, u64),

    escrow: EscrowState,
    bootstrap_supply: u64,
    minted_total: u64,
    prime_height: u64,
    epoch_fees: u64,
    last_prime_us: u64,
    prime_intervals_us: Vec<u64>,
    epoch_fill: (f64, u64),

    nodes: Vec<Node>,
    owner_node: HashMap<Hash256, usize>,
    zone_members: BTreeMap<Location, Vec<usize>>,
    zone_backlog: BTreeMap<Location, u64>,
    /// Higher-scope transactions locked at local consistency, awaiting a
    /// settling block: regional by origin region, PRIME-scope globally.
    /// Ordered by txid so settle sets are replay-independent.
    locked_regional: BTreeMap<u8, std::collections::BTreeSet<Hash256>>,
    locked_prime: std::collections::BTreeSet<Hash256>,

    txs: HashMap<Hash256, TxRecord>,
    wallets: BTreeMap<Hash256, OwnerWallet>,
    zone_owners: BTreeMap<Location, Vec<Hash256>>,
    prop_data: HashMap<Hash256, BlockPropData>,

    demand_rng: ChaCha12Rng,
    jitter_rng: ChaCha12Rng,
    topo_rng: ChaCha12Rng,

    // metrics accumulation
    arrivals: u64,
    arrivals_by_zone: BTreeMap<Location, u64>,
    admitted: u64,
    unserved: u64,
    spam_rejections: u64,
    settled_counts: BTreeMap<&'static str, u64>,
    latency_samples: BTreeMap<&'static str, Vec<u64>>,
    blocks_found: LevelCounts,
    invalid_blocks: u64,
    resize_events: Vec<ResizeEvent>,
    reward_audits: Vec<RewardAudit>,
    group_moves: u64,
    pub attack_race: AttackRace,
    adversary_node: Option<usize>,
    attack_zone: Location,
    adv_tip: Hash256,
    adv_work: u128,
    honest_led_before: bool,
}

impl Engine {
    pub fn new(config: SimConfig, seed: u64) -> Engine {
        let map = config.map_size();
        let triple = config.difficulty.triple().expect("validated");
        let genesis_header = genesis_header(&triple, map);
        let view = ChainView::new(genesis_header);

        let sizing_params = SizingParams {
            target_fill: config.sizing.target_fill,
            band: config.sizing.band,
            window: config.sizing.window,
            zones_per_region_cap: config.sizing.zones_per_region_cap,
        };

        let mut engine = Engine {
            end_us: (config.sim.duration_s * 1e6) as u64,
            seed,
            now_us: 0,
            seq: 0,
            events: BinaryHeap::new(),
            view,
            ledger: LedgerState::new(),
            journal: Vec::new(),
            applied_set: HashSet::new(),
            accept_seq: HashMap::new(),
            next_accept_seq: 1,
            map_state: MapState::new(map, sizing_params),
            zone_difficulty: BTreeMap::new(),
            region_difficulty: BTreeMap::new(),
            prime_difficulty: config.difficulty.prime,
            zone_retarget: BTreeMap::new(),
            region_retarget: BTreeMap::new(),
            prime_retarget: (0, 0),
            escrow: EscrowState::default(),
            bootstrap_supply: 0,
            minted_total: 0,
            prime_height: 0,
            epoch_fees: 0,
            last_prime_us: 0,
            prime_intervals_us: Vec::new(),
            epoch_fill: (0.0, 0),
            nodes: Vec::new(),
            owner_node: HashMap::new(),
            zone_members: BTreeMap::new(),
            zone_backlog: BTreeMap::new(),
            locked_regional: BTreeMap::new(),
            locked_prime: std::collections::BTreeSet::new(),
            txs: HashMap::new(),
            wallets: BTreeMap::new(),
            zone_owners: BTreeMap::new(),
            prop_data: HashMap::new(),
            demand_rng: stream(seed, "demand", 0),
            jitter_rng: stream(seed, "jitter", 0),
            topo_rng: stream(seed, "topology", 0),
            arrivals: 0,
            arrivals_by_zone: BTreeMap::new(),
            admitted: 0,
            unserved: 0,
            spam_rejections: 0,
            settled_counts: BTreeMap::new(),
            latency_samples: BTreeMap::new(),
            blocks_found: LevelCounts::default(),
            invalid_blocks: 0,
            resize_events: Vec::new(),
            reward_audits: Vec::new(),
            group_moves: 0,
            attack_race: AttackRace::default(),
            adversary_node: None,
            attack_zone: Location::new(config.attack.zone[0], config.attack.zone[1]),
            adv_tip: Hash256::ZERO,
            adv_work: 0,
            honest_led_before: false,
            config,
        };
        engine.init_world();
        engine
    }

    fn init_world(&mut self) {
        let map = self.map_state.map;
        let config = self.config.clone();

        for zone in map.iter_zones() {
            self.zone_difficulty.insert(zone, config.difficulty.zone);
            self.zone_retarget.insert(zone, (0, 0));
            self.zone_backlog.insert(zone, 0);
        }
        for region in 0..map.regions {
            self.region_difficulty.insert(region as u8, config.difficulty.region);
            self.region_retarget.insert(region as u8, (0, 0));
        }

        // Nodes: clustered around hash-derived zone centers.
        let mut id = 0usize;
        for zone in map.iter_zones() {
            let center = zone_center(zone);
            for k in 0..config.topology.nodes_per_zone {
                let dx: f64 = self.topo_rng.gen_range(-0.04..0.04);
                let dy: f64 = self.topo_rng.gen_range(-0.04..0.04);
                let owner = sha256d(&[b"miner" as &[u8], &(id as u64).to_le_bytes()].concat());
                self.nodes.push(Node {
                    owner,
                    hash_power: config.topology.hash_power_per_node,
                    zone,
                    coords: ((center.0 + dx).clamp(0.0, 1.0), (center.1 + dy).clamp(0.0, 1.0)),
                    zone_peers: Vec::new(),
                    region_peers: Vec::new(),
                    global_peers: Vec::new(),
                    zone_tip: self.view.genesis(),
                    region_tip: self.view.genesis(),
                    prime_tip: self.view.genesis(),
                    seen_blocks: HashMap::new(),
                    seen_txs: HashMap::new(),
                    mempool: [
                        MempoolQueue::new(4 * config.blocks.zone_txs),
                        MempoolQueue::new(4 * config.blocks.region_txs),
                        MempoolQueue::new(4 * config.blocks.prime_txs),
                    ],
                    unlinked_zones: Vec::new(),
                    unlinked_regions: Vec::new(),
                    mining_epoch: 0,
                    mining_rng: stream(self.seed, "mining", id as u64),
                    review_rng: stream(self.seed, "review", id as u64),
                    traffic: NodeTraffic::default(),
                    adversary: false,
                    adversary_active: false,
                });
                self.owner_node.insert(owner, id);
                self.zone_members.entry(zone).or_default().push(id);
                let _ = k;
                id += 1;
            }
        }

        if config.attack.enabled {
            // The adversary redirects a share of the target zone's own hash
            // power: honest members shrink to (1 - share) of the zone and
            // one adversary node wields the rest, so the zone's total stays
            // nominal until the fork.
            let zone = self.attack_zone;
            let nominal_power =
                config.topology.nodes_per_zone as f64 * config.topology.hash_power_per_node;
            let share = config.attack.share;
            for &id in self.zone_members.get(&zone).cloned().unwrap_or_default().iter() {
                self.nodes[id].hash_power *= 1.0 - share;
            }
            let power = nominal_power * share;
            let center = zone_center(zone);
            let owner = sha256d(b"adversary");
            self.nodes.push(Node {
                owner,
                hash_power: power,
                zone,
                coords: center,
                zone_peers: Vec::new(),
                region_peers: Vec::new(),
                global_peers: Vec::new(),
                zone_tip: self.view.genesis(),
                region_tip: self.view.genesis(),
                prime_tip: self.view.genesis(),
                seen_blocks: HashMap::new(),
                seen_txs: HashMap::new(),
                mempool: [
                    MempoolQueue::new(16),
                    MempoolQueue::new(16),
                    MempoolQueue::new(16),
                ],
                unlinked_zones: Vec::new(),
                unlinked_regions: Vec::new(),
                mining_epoch: 0,
                mining_rng: stream(self.seed, "mining-adversary", 0),
                review_rng: stream(self.seed, "review-adversary", 0),
                traffic: NodeTraffic::default(),
                adversary: true,
                adversary_active: false,
            });
            self.owner_node.insert(owner, id);
            self.zone_members.entry(zone).or_default().push(id);
            self.adversary_node = Some(id);
        }

        self.rebuild_zone_peers_all();
        self.assign_cross_peers();

        // Initial coin allocation and wallets.
        let mut allocations = Vec::new();
        for zone in map.iter_zones() {
            let owners: Vec<Hash256> = (0..config.demand.wallet_owners_per_zone)
                .map(|k| {
                    sha256d(
                        &[
                            b"wallet" as &[u8],
                            &[zone.region, zone.zone],
                            &(k as u64).to_le_bytes(),
                        ]
                        .concat(),
                    )
                })
                .collect();
            for owner in &owners {
                self.wallets.insert(*owner, OwnerWallet {
                    home_declared: zone,
                    utxos: VecDeque::new(),
                });
            }
            self.zone_owners.insert(zone, owners.clone());
            for i in 0..config.demand.initial_utxos_per_zone {
                let owner = owners[i as usize % owners.len()];
                let declared = Location::new(
                    spread_declared(zone.region, map.regions, &mut self.topo_rng),
                    spread_declared(zone.zone, map.zones, &mut self.topo_rng),
                );
                allocations.push((owner, config.demand.initial_utxo_amount, declared));
            }
        }
        self.ledger.bootstrap(&allocations);
        self.bootstrap_supply = self.ledger.total_supply();
        // Register bootstrap outputs in wallets.
        for (i, (owner, amount, _)) in allocations.iter().enumerate() {
            let mut tag = Vec::with_capacity(17);
            tag.extend_from_slice(b"genesis-alloc");
            tag.extend_from_slice(&(i as u32).to_le_bytes());
            let outpoint = OutPoint::new(sha256d(&tag), 0);
            if let Some(wallet) = self.wallets.get_mut(owner) {
                wallet.utxos.push_back((outpoint, *amount, 0));
            }
        }

        // Seed events.
        for node_id in 0..self.nodes.len() {
            self.schedule_mining(node_id);
            if config.group_selection.enabled && !self.nodes[node_id].adversary {
                self.schedule_review(node_id);
            }
        }
        if config.demand.tps > 0.0 {
            let dt = exp_us(&mut self.demand_rng, config.demand.tps);
            self.schedule(dt, Event::NextArrival);
        }
        if config.attack.enabled {
            self.schedule((config.attack.start_s * 1e6) as u64, Event::AttackStart);
        }
        let prune_every = (config.sim.body_prune_horizon_s * 1e6 / 2.0) as u64;
        self.schedule(prune_every.max(1), Event::Prune);
    }

    // ------------------------------------------------------------------
    // Scheduling and topology
    // ------------------------------------------------------------------

    fn schedule(&mut self, dt_us: u64, event: Event) {
        self.seq += 1;
        self.events.push(Reverse(Scheduled { at_us: self.now_us + dt_us, seq: self.seq, event }));
    }

    fn delay_us(&mut self, a: usize, b: usize) -> u64 {
        let la = &self.config.latency;
        let pa = self.nodes[a].coords;
        let pb = self.nodes[b].coords;
        let dist = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt();
        let jitter: f64 = if la.jitter_ms > 0.0 {
            self.jitter_rng.gen_range(0.0..la.jitter_ms)
        } else {
            0.0
        };
        ((la.base_ms + dist * la.per_unit_ms + jitter) * 1e3) as u64
    }

    fn latency_to_zone_ms(&self, node: usize, zone: Location) -> f64 {
        let la = &self.config.latency;
        let p = self.nodes[node].coords;
        let c = zone_center(zone);
        let dist = ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt();
        la.base_ms + dist * la.per_unit_ms
    }

    fn rebuild_zone_peers_all(&mut self) {
        let zones: Vec<Location> = self.zone_members.keys().copied().collect();
        for zone in zones {
            self.rebuild_zone_peers(zone);
        }
    }

    fn rebuild_zone_peers(&mut self, zone: Location) {
        let members = self.zone_members.get(&zone).cloned().unwrap_or_default();
        let degree = self.config.peers.zone;
        for &id in &members {
            let mut others: Vec<usize> = members.iter().copied().filter(|&m| m != id).collect();
            if others.len() > degree {
                // Nearest by coordinates, ties by id.
                let me = self.nodes[id].coords;
                others.sort_by(|&a, &b| {
                    let da = dist2(me, self.nodes[a].coords);
                    let db = dist2(me, self.nodes[b].coords);
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                });
                others.truncate(degree);
            }
            self.nodes[id].zone_peers = others;
        }
    }

    fn assign_cross_peers(&mut self) {
        let n = self.nodes.len();
        for id in 0..n {
            self.resample_cross_peers(id);
        }
    }

    fn resample_cross_peers(&mut self, id: usize) {
        let region = self.nodes[id].zone.region;
        let mut region_pool: Vec<usize> = self
            .zone_members
            .iter()
            .filter(|(z, _)| z.region == region && **z != self.nodes[id].zone)
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        region_pool.sort_unstable();
        let mut region_peers = Vec::new();
        let want = self.config.peers.region.min(region_pool.len());
        while region_peers.len() < want {
            let pick = region_pool[self.topo_rng.gen_range(0..region_pool.len())];
            if pick != id && !region_peers.contains(&pick) {
                region_peers.push(pick);
            }
        }
        self.nodes[id].region_peers = region_peers;

        let mut global_peers = Vec::new();
        let want = self.config.peers.global.min(self.nodes.len().saturating_sub(1));
        let mut guard = 0;
        while global_peers.len() < want && guard < 1000 {
            guard += 1;
            let pick = self.topo_rng.gen_range(0..self.nodes.len());
            if pick != id
                && !global_peers.contains(&pick)
                && self.nodes[pick].zone.region != region
            {
                global_peers.push(pick);
            }
        }
        self.nodes[id].global_peers = global_peers;
    }

    // ------------------------------------------------------------------
    // Event loop
    // ------------------------------------------------------------------

    pub fn run_to_end(&mut self) {
        while let Some(Reverse(next)) = self.events.pop() {
            if next.at_us > self.end_us {
                break;
            }
            self.now_us = next.at_us;
            self.dispatch(next.event);
        }
        self.now_us = self.end_us;
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::NextArrival => self.on_arrival(),
            Event::Mining { node, epoch } => self.on_mining(node, epoch),
            Event::TxAnnounce { to, txid, from } => self.on_tx_announce(to, txid, from),
            Event::TxBody { to, txid, from } => self.on_tx_body(to, txid, from),
            Event::BlockHeader { to, hash, from } => self.on_block_header(to, hash, from),
            Event::BlockBundle { to, hash, from } => self.on_block_bundle(to, hash, from),
            Event::Review { node } => self.on_review(node),
            Event::AttackStart => self.on_attack_start(),
            Event::Prune => self.on_prune(),
        }
    }

    fn charge(&mut self, from: usize, to: usize, class: MsgClass, bytes: u64) {
        self.nodes[from].traffic.counter_mut(class).sent += bytes;
        self.nodes[to].traffic.counter_mut(class).received += bytes;
    }

    // ------------------------------------------------------------------
    // Demand
    // ------------------------------------------------------------------

    fn on_arrival(&mut self) {
        let dt = exp_us(&mut self.demand_rng, self.config.demand.tps);
        self.schedule(dt, Event::NextArrival);
        self.arrivals += 1;

        let map = self.map_state.map;
        let scope = pick_scope(self.config.demand.scope_mix, &mut self.demand_rng);
        let origin = match self.pick_origin_zone() {
            Some(zone) => zone,
            None => {
                self.unserved += 1;
                return;
            }
        };
        *self.arrivals_by_zone.entry(origin).or_default() += 1;

        let tx = match self.build_demand_tx(origin, scope, map) {
            Some(tx) => tx,
            None => {
                self.unserved += 1;
                return;
            }
        };
        // Inject at a member of the origin zone.
        let members = self.zone_members.get(&origin).cloned().unwrap_or_default();
        if members.is_empty() {
            self.unserved += 1;
            return;
        }
        let entry_node = members[self.demand_rng.gen_range(0..members.len())];
        match self.admit_tx(entry_node, Arc::new(tx)) {
            Ok(()) => self.admitted += 1,
            Err(false) => self.unserved += 1,
            Err(true) => {}
        }
    }

    fn pick_origin_zone(&mut self) -> Option<Location> {
        // Users pick the least busy zone; occupancy is bucketed so uniform
        // zones tie and the choice spreads evenly.
        let limit = self.config.blocks.zone_txs as f64;
        let mut best_bucket = u64::MAX;
        let mut candidates: Vec<Location> = Vec::new();
        for (zone, members) in &self.zone_members {
            if members.is_empty() {
                continue;
            }
            let backlog = *self.zone_backlog.get(zone).unwrap_or(&0);
            let bucket = ((backlog as f64 / limit) * 10.0).round() as u64;
            match bucket.cmp(&best_bucket) {
                std::cmp::Ordering::Less => {
                    best_bucket = bucket;
                    candidates.clear();
                    candidates.push(*zone);
                }
                std::cmp::Ordering::Equal => candidates.push(*zone),
                std::cmp::Ordering::Greater => {}
            }
        }
        if candidates.is_empty() {
            return None;
        }
        Some(candidates[self.demand_rng.gen_range(0..candidates.len())])
    }

    fn build_demand_tx(&mut self, origin: Location, scope: Scope, map: MapSize) -> Option<Transaction> {
        let owners = self.zone_owners.get(&origin)?.clone();
        if owners.is_empty() {
            return None;
        }
        let fee = self.config.demand.fee_per_scope[match scope {
            Scope::Zonal => 0,
            Scope::Regional => 1,
            Scope::Prime => 2,
        }];
        // Round-robin over owners until one has spendable funds.
        let start = self.demand_rng.gen_range(0..owners.len());
        let zone_height = self.zone_height(origin);
        for turn in 0..owners.len() {
            let owner = owners[(start + turn) % owners.len()];
            let picked = self.pick_wallet_inputs(owner, origin, map, fee, zone_height);
            let Some((inputs, total)) = picked else { continue };
            let dest_zone = self.pick_destination(origin, scope, map);
            let dest_owner = self.pick_owner_in(dest_zone, map).unwrap_or(owner);
            let declared_dest = Location::new(
                spread_declared(dest_zone.region, map.regions, &mut self.demand_rng),
                spread_declared(dest_zone.zone, map.zones, &mut self.demand_rng),
            );
            let pay = (total - fee).max(1) / 2;
            let change = total - fee - pay;
            let mut outputs = vec![TxOutput {
                amount: pay,
                destination: declared_dest,
                owner: dest_owner,
            }];
            if change > 0 {
                let declared_change = Location::new(
                    spread_declared(origin.region, map.regions, &mut self.demand_rng),
                    spread_declared(origin.zone, map.zones, &mut self.demand_rng),
                );
                outputs.push(TxOutput { amount: change, destination: declared_change, owner });
            }
            let declared_origin = Location::new(
                spread_declared(origin.region, map.regions, &mut self.demand_rng),
                spread_declared(origin.zone, map.zones, &mut self.demand_rng),
            );
            let mut tx = Transaction {
                inputs: inputs.iter().map(|(op, _)| *op).collect(),
                outputs,
                location: declared_origin,
                fee,
                witness: Vec::new(),
            };
            let txid = tx.txid();
            let scheme = KeyedHashScheme;
            for _ in &inputs {
                tx.witness.extend_from_slice(&scheme.sign(&owner, &txid));
            }
            return Some(tx);
        }
        None
    }

    /// Pops up to two spendable wallet entries covering the fee; entries
    /// that no longer exist on the ledger are discarded.
    fn pick_wallet_inputs(
        &mut self,
        owner: Hash256,
        origin: Location,
        map: MapSize,
        fee: u64,
        zone_height: u64,
    ) -> Option<(Vec<(OutPoint, u64)>, u64)> {
        let wallet = self.wallets.get_mut(&owner)?;
        let mut picked: Vec<(OutPoint, u64)> = Vec::new();
        let mut total = 0u64;
        let mut scanned = 0;
        let max_scan = wallet.utxos.len();
        while scanned < max_scan && picked.len() < 2 {
            scanned += 1;
            let Some((outpoint, amount, mature)) = wallet.utxos.pop_front() else { break };
            let live = self
                .ledger
                .utxo(&outpoint)
                .map(|e| {
                    e.locked_by.is_none()
                        && e.declared.remap(map) == origin
                        && zone_height >= e.mature_at_height
                })
                .unwrap_or(false);
            if !live {
                if self.ledger.utxo(&outpoint).is_some() && zone_height < mature {
                    // Not mature yet: keep for later.
                    wallet.utxos.push_back((outpoint, amount, mature));
                }
                continue;
            }
            total += amount;
            picked.push((outpoint, amount));
            if total > fee && picked.len() >= 1 && total >= fee + 2 {
                break;
            }
        }
        if picked.is_empty() || total < fee + 2 {
            // Give back what we took.
            let wallet = self.wallets.get_mut(&owner)?;
            for (op, amount) in picked {
                wallet.utxos.push_back((op, amount, 0));
            }
            return None;
        }
        Some((picked, total))
    }

    fn pick_destination(&mut self, origin: Location, scope: Scope, map: MapSize) -> Location {
        match scope {
            Scope::Zonal => origin,
            Scope::Regional => {
                if map.zones <= 1 {
                    return origin;
                }
                let mut z = self.demand_rng.gen_range(0..map.zones - 1) as u8;
                if z >= origin.zone {
                    z += 1;
                }
                Location::new(origin.region, z)
            }
            Scope::Prime => {
                if map.regions <= 1 {
                    return self.pick_destination(origin, Scope::Regional, map);
                }
                let mut r = self.demand_rng.gen_range(0..map.regions - 1) as u8;
                if r >= origin.region {
                    r += 1;
                }
                let z = self.demand_rng.gen_range(0..map.zones) as u8;
                Location::new(r, z)
            }
        }
    }

    fn pick_owner_in(&mut self, zone: Location, _map: MapSize) -> Option<Hash256> {
        let owners = self.zone_owners.get(&zone)?;
        if owners.is_empty() {
            return None;
        }
        Some(owners[self.demand_rng.gen_range(0..owners.len())])
    }

    /// Validates and admits a transaction at a node, gossiping it to the
    /// node's zone peers. `Err(false)` marks an unservable transaction,
    /// `Err(true)` a spam rejection (wrong zone).
    pub fn admit_tx(&mut self, node_id: usize, tx: Arc<Transaction>) -> Result<(), bool> {
        let map = self.map_state.map;
        let node_zone = self.nodes[node_id].zone;
        let effective = tx.location.remap(map);
        if effective != node_zone {
            self.spam_rejections += 1;
            return Err(true);
        }
        let zone_height = self.zone_height(effective);
        let scheme = KeyedHashScheme;
        let scope = match self.ledger.validate_tx(&tx, map, zone_height, &scheme) {
            Ok(scope) => scope,
            Err(_) => return Err(false),
        };
        let txid = tx.txid();
        if self.txs.contains_key(&txid) && self.nodes[node_id].seen_txs.contains_key(&txid) {
            return Err(false);
        }
        self.txs.entry(txid).or_insert(TxRecord {
            tx: Some(tx.clone()),
            scope,
            origin: effective,
            arrival_us: self.now_us,
            settled_at_us: None,
        });
        *self.zone_backlog.entry(effective).or_default() += 1;
        let now = self.now_us;
        let node = &mut self.nodes[node_id];
        node.seen_txs.insert(txid, now);
        node.mempool[scope_index(scope)].push(txid);
        let peers = node.zone_peers.clone();
        let announce = self.config.messages.announce_bytes;
        for peer in peers {
            let delay = self.delay_us(node_id, peer);
            self.charge(node_id, peer, MsgClass::TxAnnounce, announce);
            self.schedule(delay, Event::TxAnnounce { to: peer, txid, from: node_id });
        }
        Ok(())
    }

    fn on_tx_announce(&mut self, to: usize, txid: Hash256, from: usize) {
        // Bytes were charged at send time; a duplicate offer costs exactly
        // those announcement bytes and stops here.
        if self.nodes[to].seen_txs.contains_key(&txid) {
            return;
        }
        if !self.txs.contains_key(&txid) {
            return;
        }
        self.nodes[to].seen_txs.insert(txid, self.now_us);
        let announce = self.config.messages.announce_bytes;
        self.charge(to, from, MsgClass::Request, announce);
        let rtt = self.delay_us(to, from) + self.delay_us(from, to);
        self.schedule(rtt, Event::TxBody { to, txid, from });
    }

    fn on_tx_body(&mut self, to: usize, txid: Hash256, from: usize) {
        let bytes = self.config.messages.tx_bytes + self.config.messages.envelope_bytes;
        self.charge(from, to, MsgClass::TxBody, bytes);
        let Some(record) = self.txs.get(&txid) else { return };
        if record.settled_at_us.is_some() {
            return;
        }
        let scope = record.scope;
        let origin = record.origin;
        let node_zone = self.nodes[to].zone;
        if origin != node_zone {
            // A relay crossed a migration in flight; drop silently.
            return;
        }
        let node = &mut self.nodes[to];
        node.mempool[scope_index(scope)].push(txid);
        let peers = node.zone_peers.clone();
        let announce = self.config.messages.announce_bytes;
        for peer in peers {
            if self.nodes[peer].seen_txs.contains_key(&txid) {
                // Still offer it; the duplicate costs announcement bytes.
                self.charge(to, peer, MsgClass::TxAnnounce, announce);
                continue;
            }
            let delay = self.delay_us(to, peer);
            self.charge(to, peer, MsgClass::TxAnnounce, announce);
            self.schedule(delay, Event::TxAnnounce { to: peer, txid, from: to });
        }
    }

    // ------------------------------------------------------------------
    // Mining
    // ------------------------------------------------------------------

    fn schedule_mining(&mut self, node_id: usize) {
        let zone = self.nodes[node_id].zone;
        let d_zone = *self.zone_difficulty.get(&zone).unwrap_or(&self.config.difficulty.zone);
        let rate = self.nodes[node_id].hash_power
            / (d_zone as f64 * self.config.difficulty.normalization);
        let dt = exp_us(&mut self.nodes[node_id].mining_rng, rate);
        let epoch = self.nodes[node_id].mining_epoch;
        self.schedule(dt, Event::Mining { node: node_id, epoch });
    }

    fn on_mining(&mut self, node_id: usize, epoch: u64) {
        if self.nodes[node_id].mining_epoch != epoch {
            return;
        }
        let zone = self.nodes[node_id].zone;
        let d_zone = *self.zone_difficulty.get(&zone).unwrap_or(&self.config.difficulty.zone);
        let d_region =
            *self.region_difficulty.get(&zone.region).unwrap_or(&self.config.difficulty.region);
        let d_prime = self.prime_difficulty;

        // Level draw, consistent with classification of uniform hashes.
        let u: f64 = self.nodes[node_id].mining_rng.gen();
        let p_prime = d_zone as f64 / d_prime as f64;
        let p_region = d_zone as f64 / d_region as f64;
        let mut level = if u < p_prime {
            BlockLevel::Prime
        } else if u < p_region {
            BlockLevel::Region
        } else {
            BlockLevel::Zone
        };
        let nonce: u64 = self.nodes[node_id].mining_rng.gen();

        let adversarial = self.nodes[node_id].adversary_active;
        if adversarial {
            // The adversary burns higher-level finds to keep its fork a
            // pure zone-level attack.
            level = BlockLevel::Zone;
        }

        let block = self.build_block(node_id, level, nonce, d_zone, d_region, d_prime, adversarial);
        let work = WorkContext { zone: d_zone, region: d_region, prime: d_prime };
        let hash = block.hash();
        match self.view.extend(&block, level, zone, !adversarial, self.now_us, work) {
            Ok(_) => {}
            Err(e) => panic!("self-built block rejected: {e}"),
        }
        self.accept_seq.insert(hash, self.next_accept_seq);
        self.next_accept_seq += 1;
        self.blocks_found.bump(level);
        if adversarial {
            self.invalid_blocks += 1;
            self.adv_tip = hash;
            self.adv_work = self.view.store.get(&hash).map(|b| b.zone_work).unwrap_or(0);
        }

        self.register_prop_data(&block, level, zone);
        self.sync_ledger();
        self.track_attack_race();
        self.retarget_counters(level, zone);

        // Accept own block and announce.
        self.node_accept_block(node_id, hash, None);
        self.schedule_mining(node_id);
    }

    #[allow(clippy::too_many_arguments)]
    fn build_block(
        &mut self,
        node_id: usize,
        level: BlockLevel,
        nonce: u64,
        d_zone: u64,
        d_region: u64,
        d_prime: u64,
        adversarial: bool,
    ) -> Block {
        let map = self.map_state.map;
        let zone = self.nodes[node_id].zone;
        let zone_height = self.zone_height(zone);
        let scheme = KeyedHashScheme;

        let (zone_txs, region_txs, prime_txs) = if adversarial {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            let zonal = self.drain_fresh(node_id, 0, self.config.blocks.zone_txs, map, zone_height);
            let mut regional =
                self.drain_fresh(node_id, 1, self.config.blocks.region_txs, map, zone_height);
            if level >= BlockLevel::Region {
                // A region block settles everything locked in its region.
                if let Some(queue) = self.locked_regional.get(&zone.region) {
                    let room = self.config.blocks.region_txs.saturating_sub(regional.len());
                    regional.extend(self.drain_locked(queue, room));
                }
            }
            let mut prime =
                self.drain_fresh(node_id, 2, self.config.blocks.prime_txs, map, zone_height);
            if level >= BlockLevel::Prime {
                let room = self.config.blocks.prime_txs.saturating_sub(prime.len());
                let queue = std::mem::take(&mut self.locked_prime);
                prime.extend(self.drain_locked(&queue, room));
                self.locked_prime = queue;
            }
            (zonal, regional, prime)
        };
        let _ = scheme;

        let node = &self.nodes[node_id];
        let (parent_zone, parent_region, parent_prime) = if adversarial && self.adv_tip != Hash256::ZERO
        {
            (self.adv_tip, node.region_tip, node.prime_tip)
        } else {
            (node.zone_tip, node.region_tip, node.prime_tip)
        };

        let linked_zone_hashes = if level >= BlockLevel::Region {
            node.unlinked_zones.clone()
        } else {
            Vec::new()
        };
        let linked_region_hashes = if level >= BlockLevel::Prime {
            node.unlinked_regions.clone()
        } else {
            Vec::new()
        };

        let mut block = Block {
            header: BlockHeader {
                version: 1,
                parent_prime,
                parent_region,
                parent_zone,
                merkle_root_prime: Hash256::ZERO,
                merkle_root_region: Hash256::ZERO,
                merkle_root_zone: Hash256::ZERO,
                merkle_root_interlink: interlink_root(&ChainTips {
                    prime: parent_prime,
                    region: parent_region,
                    zone: parent_zone,
                }),
                unix_time: (self.now_us / 1_000_000) as u32,
                bits_prime: target_to_compact(target_for_difficulty(d_prime)),
                bits_region: target_to_compact(target_for_difficulty(d_region)),
                bits_zone: target_to_compact(target_for_difficulty(d_zone)),
                fees_region: region_txs.iter().map(|t| t.fee).sum(),
                fees_zone: zone_txs.iter().map(|t| t.fee).sum(),
                map_region: MapSize::encode_byte(map.regions),
                map_zone: MapSize::encode_byte(map.zones),
                location_region: zone.region,
                location_zone: zone.zone,
                nonce,
            },
            miner: self.nodes[node_id].owner,
            zone_txs,
            region_txs,
            prime_txs,
            linked_zone_hashes,
            linked_region_hashes,
        };
        let (prime_root, region_root, zone_root) = block.compute_tx_roots();
        block.header.merkle_root_prime = prime_root;
        block.header.merkle_root_region = region_root;
        block.header.merkle_root_zone = zone_root;
        block
    }

    /// Selects fresh (never included) transactions from a node's working
    /// set, dropping entries that are stale or conflict with the chain.
    fn drain_fresh(
        &mut self,
        node_id: usize,
        pool: usize,
        limit: usize,
        map: MapSize,
        zone_height: u64,
    ) -> Vec<Transaction> {
        let scheme = KeyedHashScheme;
        let candidates: Vec<Hash256> =
            self.nodes[node_id].mempool[pool].iter_live().copied().collect();
        let mut out = Vec::new();
        let mut stale: Vec<Hash256> = Vec::new();
        for txid in candidates {
            if out.len() >= limit {
                break;
            }
            let fresh = self
                .txs
                .get(&txid)
                .map(|r| r.settled_at_us.is_none())
                .unwrap_or(false)
                && self.ledger.status(&txid) == SettlementStatus::Pending;
            if !fresh {
                stale.push(txid);
                continue;
            }
            let Some(tx) = self.txs.get(&txid).and_then(|r| r.tx.clone()) else {
                stale.push(txid);
                continue;
            };
            match self.ledger.validate_tx(&tx, map, zone_height, &scheme) {
                Ok(_) => out.push((*tx).clone()),
                Err(_) => stale.push(txid),
            }
        }
        for txid in stale {
            self.nodes[node_id].mempool[pool].remove(&txid);
        }
        out
    }

    /// Locked transactions a settling block of the given level must carry,
    /// in canonical txid order.
    fn drain_locked(&self, queue: &std::collections::BTreeSet<Hash256>, limit: usize) -> Vec<Transaction> {
        let mut out = Vec::new();
        for txid in queue {
            if out.len() >= limit {
                break;
            }
            if let Some(tx) = self.txs.get(txid).and_then(|r| r.tx.as_ref()) {
                out.push((**tx).clone());
            }
        }
        out
    }

    fn register_prop_data(&mut self, block: &Block, level: BlockLevel, zone: Location) {
        let tx_bytes = self.config.messages.tx_bytes;
        let own = block.bundle_bytes(crate::primitives::BundleAudience::OwnZone, tx_bytes, level);
        let region = block.bundle_bytes(crate::primitives::BundleAudience::Region, tx_bytes, level);
        let global = block.bundle_bytes(crate::primitives::BundleAudience::Global, tx_bytes, level);
        self.prop_data.insert(block.hash(), BlockPropData {
            zone,
            bundle_bytes: [own, region, global],
            zonal_ids: Arc::new(block.zone_txs.iter().map(|t| t.txid()).collect()),
            regional_ids: Arc::new(block.region_txs.iter().map(|t| t.txid()).collect()),
            prime_ids: Arc::new(block.prime_txs.iter().map(|t| t.txid()).collect()),
            created_us: self.now_us,
        });
    }

    /// Hash power a reviewer attributes to a zone: the aggregate power of
    /// members whose blocks validate. The adversary's power disappears from
    /// the estimate the moment its blocks turn invalid, which is exactly
    /// the signal that draws outside hash power toward the honest minority.
    fn honest_zone_power(&self, zone: Location) -> f64 {
        self.zone_members
            .get(&zone)
            .map(|members| {
                members
                    .iter()
                    .filter(|&&id| !self.nodes[id].adversary_active)
                    .map(|&id| self.nodes[id].hash_power)
                    .sum()
            })
            .unwrap_or(0.0)
    }

    /// Per-chain difficulty retarget: every `window` blocks a chain scales
    /// its difficulty by observed vs expected span, clamped to x4 / /4.
    /// Each level retargets against its own cadence, so the three-level
    /// ratio survives hash-power shifts.
    fn retarget_counters(&mut self, level: BlockLevel, zone: Location) {
        if !self.config.difficulty.retarget_enabled {
            return;
        }
        let window = self.config.difficulty.retarget_window;
        if window == 0 {
            return;
        }
        let now = self.now_us;
        let nominal_zone_power = self.config.topology.nodes_per_zone as f64
            * self.config.topology.hash_power_per_node;
        let norm = self.config.difficulty.normalization;

        let counter = self.zone_retarget.entry(zone).or_insert((0, now));
        counter.0 += 1;
        if counter.0 >= window {
            let observed = (now - counter.1) as f64 / 1e6;
            *counter = (0, now);
            let d = self.zone_difficulty.get(&zone).copied().unwrap_or(1);
            let expected = window as f64 * self.config.difficulty.zone as f64 * norm
                / nominal_zone_power;
            let new_d = retarget(d, observed, expected);
            if new_d != d {
                self.zone_difficulty.insert(zone, new_d);
                self.bump_zone_mining(zone);
            }
        }

        if level >= BlockLevel::Region {
            let region = zone.region;
            let counter = self.region_retarget.entry(region).or_insert((0, now));
            counter.0 += 1;
            if counter.0 >= window {
                let observed = (now - counter.1) as f64 / 1e6;
                *counter = (0, now);
                let d = self.region_difficulty.get(&region).copied().unwrap_or(1);
                let nominal_region_power =
                    nominal_zone_power * self.config.topology.zones_per_region as f64;
                let expected = window as f64 * self.config.difficulty.region as f64 * norm
                    / nominal_region_power;
                let new_d = retarget(d, observed, expected);
                if new_d != d {
                    self.region_difficulty.insert(region, new_d);
                }
            }
        }

        if level >= BlockLevel::Prime {
            self.prime_retarget.0 += 1;
            if self.prime_retarget.0 >= window {
                let observed = (now - self.prime_retarget.1) as f64 / 1e6;
                self.prime_retarget = (0, now);
                let nominal_power = nominal_zone_power
                    * self.config.topology.zones_per_region as f64
                    * self.config.topology.regions as f64;
                let expected =
                    window as f64 * self.config.difficulty.prime as f64 * norm / nominal_power;
                self.prime_difficulty = retarget(self.prime_difficulty, observed, expected);
            }
        }
    }

    fn bump_zone_mining(&mut self, zone: Location) {
        let members = self.zone_members.get(&zone).cloned().unwrap_or_default();
        for id in members {
            self.nodes[id].mining_epoch += 1;
            self.schedule_mining(id);
        }
    }

    fn remove_from_settle_queue(&mut self, txid: &Hash256) {
        if let Some(record) = self.txs.get(txid) {
            match record.scope {
                Scope::Regional => {
                    if let Some(queue) = self.locked_regional.get_mut(&record.origin.region) {
                        queue.remove(txid);
                    }
                }
                Scope::Prime => {
                    self.locked_prime.remove(txid);
                }
                Scope::Zonal => {}
            }
        }
    }

    /// A reorg returned this tx to pending after its inclusion pulled it
    /// from every working set; hand it back to its origin zone's members.
    fn reinject_pending(&mut self, txid: Hash256) {
        let Some(record) = self.txs.get(&txid) else { return };
        if record.settled_at_us.is_some() {
            return;
        }
        let pool = scope_index(record.scope);
        let origin = record.origin;
        let members = self.zone_members.get(&origin).cloned().unwrap_or_default();
        for id in members {
            self.nodes[id].mempool[pool].push(txid);
        }
    }

    fn zone_height(&self, zone: Location) -> u64 {
        let tip = self.view.zone_tip(zone);
        self.view.store.get(&tip).map(|b| b.zone_height).unwrap_or(0)
    }

    // ------------------------------------------------------------------
    // Block propagation
    // ------------------------------------------------------------------

    /// Tier fan-out for a node relaying a block it just accepted.
    fn relay_targets(&self, relayer: usize, level: BlockLevel, block_zone: Location) -> Vec<usize> {
        let node = &self.nodes[relayer];
        let mut targets = Vec::new();
        if node.zone == block_zone {
            targets.extend_from_slice(&node.zone_peers);
        }
        if node.zone.region == block_zone.region || level >= BlockLevel::Region {
            targets.extend_from_slice(&node.region_peers);
        }
        if level >= BlockLevel::Region {
            targets.extend_from_slice(&node.global_peers);
            if node.zone != block_zone {
                targets.extend_from_slice(&node.zone_peers);
            }
        }
        targets.sort_unstable();
        targets.dedup();
        targets
    }

    fn announce_block(&mut self, from: usize, hash: Hash256, level: BlockLevel, zone: Location) {
        for peer in self.relay_targets(from, level, zone) {
            if peer == from {
                continue;
            }
            let delay = self.delay_us(from, peer);
            self.charge(from, peer, MsgClass::BlockHeader, HEADER_BYTES);
            self.schedule(delay, Event::BlockHeader { to: peer, hash, from });
        }
    }

    fn on_block_header(&mut self, to: usize, hash: Hash256, from: usize) {
        // Header bytes charged at send; a seen block costs only those.
        if self.nodes[to].seen_blocks.contains_key(&hash) {
            return;
        }
        self.nodes[to].seen_blocks.insert(hash, (BlockSeen::Requested, self.now_us));
        let announce = self.config.messages.announce_bytes;
        self.charge(to, from, MsgClass::Request, announce);
        let rtt = self.delay_us(to, from) + self.delay_us(from, to);
        self.schedule(rtt, Event::BlockBundle { to, hash, from });
    }

    fn on_block_bundle(&mut self, to: usize, hash: Hash256, from: usize) {
        let bytes = self.prop_data.get(&hash).map(|prop| {
            let audience = audience_of(self.nodes[to].zone, prop.zone);
            prop.bundle_bytes[audience_index(audience)]
        });
        if let Some(bytes) = bytes {
            self.charge(from, to, MsgClass::BlockBundle, bytes);
        }
        self.node_accept_block(to, hash, Some(from));
    }

    /// A node integrates a block: tips, working sets, linked-hash ledgers,
    /// then relays the announcement once.
    fn node_accept_block(&mut self, node_id: usize, hash: Hash256, received_from: Option<usize>) {
        let Some(stored) = self.view.store.get(&hash) else { return };
        let level = stored.level;
        let block_zone = stored.location;
        let valid = stored.valid;
        let zone_work = stored.zone_work;
        let region_work = stored.region_work;
        let prime_work = stored.prime_work;
        let parent_zone = stored.header.parent_zone;
        let miner = stored.miner;
        let linked_zones: Vec<Hash256> = stored.linked_zone_hashes.clone();
        let linked_regions: Vec<Hash256> = stored.linked_region_hashes.clone();

        let already_accepted = matches!(
            self.nodes[node_id].seen_blocks.get(&hash),
            Some((BlockSeen::Accepted, _))
        );
        if already_accepted {
            return;
        }
        self.nodes[node_id].seen_blocks.insert(hash, (BlockSeen::Accepted, self.now_us));

        // Fetch the parent first if this node never saw it (parent-request
        // path); the chain store already has it, so only bytes are modeled.
        if let Some(from) = received_from {
            if parent_zone != self.view.genesis()
                && !self.nodes[node_id].seen_blocks.contains_key(&parent_zone)
            {
                let announce = self.config.messages.announce_bytes;
                self.nodes[node_id]
                    .seen_blocks
                    .insert(parent_zone, (BlockSeen::Requested, self.now_us));
                self.charge(node_id, from, MsgClass::Request, announce);
                let rtt = self.delay_us(node_id, from) + self.delay_us(from, node_id);
                self.schedule(rtt, Event::BlockBundle { to: node_id, hash: parent_zone, from });
            }
        }

        let node_zone = self.nodes[node_id].zone;
        let adversary_active = self.nodes[node_id].adversary_active;

        // Tip updates. The adversary pins its own fork; honest nodes track
        // the heaviest valid chains they have seen.
        if valid || (adversary_active && self.nodes[node_id].owner == miner) {
            if block_zone == node_zone && !(adversary_active && valid) {
                let current = self.nodes[node_id].zone_tip;
                let current_work =
                    self.view.store.get(&current).map(|b| b.zone_work).unwrap_or(0);
                if zone_work > current_work
                    || (zone_work == current_work && hash < current)
                {
                    self.nodes[node_id].zone_tip = hash;
                }
            }
            if level >= BlockLevel::Region && block_zone.region == node_zone.region && valid {
                let current = self.nodes[node_id].region_tip;
                let current_work =
                    self.view.store.get(&current).map(|b| b.region_work).unwrap_or(0);
                if region_work > current_work || (region_work == current_work && hash < current) {
                    self.nodes[node_id].region_tip = hash;
                    // Zone blocks linked by the adopted region block are no
                    // longer unlinked.
                    let node = &mut self.nodes[node_id];
                    node.unlinked_zones.retain(|h| !linked_zones.contains(h) && *h != hash);
                }
            }
            if level >= BlockLevel::Prime && valid {
                let current = self.nodes[node_id].prime_tip;
                let current_work =
                    self.view.store.get(&current).map(|b| b.prime_work).unwrap_or(0);
                if prime_work > current_work || (prime_work == current_work && hash < current) {
                    self.nodes[node_id].prime_tip = hash;
                    let node = &mut self.nodes[node_id];
                    node.unlinked_regions.retain(|h| !linked_regions.contains(h) && *h != hash);
                }
            }
        }

        // Linked-hash bookkeeping for future aggregation.
        if valid {
            if level == BlockLevel::Zone && block_zone.region == node_zone.region {
                if !self.nodes[node_id].unlinked_zones.contains(&hash) {
                    self.nodes[node_id].unlinked_zones.push(hash);
                }
            }
            if level == BlockLevel::Region {
                if !self.nodes[node_id].unlinked_regions.contains(&hash) {
                    self.nodes[node_id].unlinked_regions.push(hash);
                }
            }
        }

        // Working-set maintenance from the bundle contents.
        let prop_ids = self
            .prop_data
            .get(&hash)
            .map(|p| (p.zonal_ids.clone(), p.regional_ids.clone(), p.prime_ids.clone()));
        if let Some((zonal_ids, regional_ids, prime_ids)) = prop_ids {
            let now = self.now_us;
            if block_zone == node_zone {
                let node = &mut self.nodes[node_id];
                for id in zonal_ids.iter() {
                    node.mempool[0].remove(id);
                    node.seen_txs.insert(*id, now);
                }
            }
            if block_zone.region == node_zone.region {
                for id in regional_ids.iter() {
                    self.nodes[node_id].seen_txs.insert(*id, now);
                    // Included means locked or settled; the settle queues
                    // carry it from here.
                    self.nodes[node_id].mempool[1].remove(id);
                }
            }
            for id in prime_ids.iter() {
                self.nodes[node_id].seen_txs.insert(*id, now);
                self.nodes[node_id].mempool[2].remove(id);
            }
        }

        self.announce_block(node_id, hash, level, block_zone);
    }

    // ------------------------------------------------------------------
    // Canonical ledger synchronization
    // ------------------------------------------------------------------

    fn sync_ledger(&mut self) {
        // Canonical history in acceptance order.
        let canonical = self.view.canonical_blocks();
        let mut target: Vec<Hash256> = canonical
            .into_iter()
            .filter(|h| *h != self.view.genesis())
            .collect();
        target.sort_by_key(|h| self.accept_seq.get(h).copied().unwrap_or(u64::MAX));

        // Longest common prefix with the applied journal.
        let mut common = 0usize;
        while common < self.journal.len()
            && common < target.len()
            && self.journal[common].hash == target[common]
        {
            common += 1;
        }
        while self.journal.len() > common {
            let entry = self.journal.pop().expect("non-empty");
            self.applied_set.remove(&entry.hash);
            if let Some((outcome, emission)) = entry.escrow {
                self.escrow.balance = self.escrow.balance + outcome.drawn - outcome.sequestered;
                self.escrow.cumulative_sequestered -= outcome.sequestered;
                self.escrow.cumulative_minted -= outcome.minted;
                self.minted_total -= emission + outcome.minted;
                self.prime_height -= 1;
                self.reward_audits.pop();
                self.prime_intervals_us.pop();
            }
            if let Some(fill) = entry.fill_sample {
                self.epoch_fill.0 -= fill;
                self.epoch_fill.1 -= 1;
            }
            self.ledger.revert_block(entry.undo);
            // Settle queues mirror the ledger's lock state.
            for txid in &entry.locked {
                self.remove_from_settle_queue(txid);
                self.reinject_pending(*txid);
            }
            for (txid, scope, _) in &entry.settled {
                if let Some(record) = self.txs.get_mut(txid) {
                    record.settled_at_us = None;
                    *self.zone_backlog.entry(record.origin).or_default() += 1;
                }
                match self.ledger.status(txid) {
                    SettlementStatus::LocallyConsistent { .. } => {
                        if let Some(record) = self.txs.get(txid) {
                            match scope {
                                Scope::Regional => {
                                    self.locked_regional
                                        .entry(record.origin.region)
                                        .or_default()
                                        .insert(*txid);
                                }
                                Scope::Prime => {
                                    self.locked_prime.insert(*txid);
                                }
                                Scope::Zonal => {}
                            }
                        }
                    }
                    SettlementStatus::Pending => self.reinject_pending(*txid),
                    SettlementStatus::Settled { .. } => {}
                }
            }
        }
        // Recompute epoch fee accumulator from the journal tail.
        if self.journal.len() == common {
            let mut fees = 0u64;
            for entry in self.journal.iter().rev() {
                if entry.is_prime {
                    break;
                }
                fees += entry.fees;
            }
            self.epoch_fees = fees;
            self.last_prime_us = self
                .journal
                .iter()
                .rev()
                .find(|e| e.is_prime)
                .map(|e| self.view.store.get(&e.hash).map(|b| b.found_at_us).unwrap_or(0))
                .unwrap_or(0);
        }

        for hash in target.into_iter().skip(common) {
            self.apply_canonical(hash);
        }
    }

    fn apply_canonical(&mut self, hash: Hash256) {
        let (body, level, found_at, zonal_fill) = {
            let stored = self.view.store.get(&hash).expect("canonical block stored");
            let body = stored
                .body
                .clone()
                .expect("canonical block body within prune horizon");
            let fill = stored.tx_counts[0] as f64 / self.config.blocks.zone_txs as f64;
            (body, stored.level, stored.found_at_us, fill)
        };
        let map = MapSize::new(
            MapSize::decode_byte(body.header.map_region),
            MapSize::decode_byte(body.header.map_zone),
        )
        .expect("header map fields valid");
        let (undo, outcome) = self
            .ledger
            .apply_block(&body, level, map)
            .expect("canonical block applies cleanly");

        for txid in &outcome.locked {
            if let Some(record) = self.txs.get(txid) {
                match record.scope {
                    Scope::Regional => {
                        self.locked_regional
                            .entry(record.origin.region)
                            .or_default()
                            .insert(*txid);
                    }
                    Scope::Prime => {
                        self.locked_prime.insert(*txid);
                    }
                    Scope::Zonal => {}
                }
            }
        }
        let mut fees = 0u64;
        for (txid, scope, fee) in &outcome.settled {
            fees += fee;
            match scope {
                Scope::Regional => {
                    if let Some(record) = self.txs.get(txid) {
                        if let Some(queue) = self.locked_regional.get_mut(&record.origin.region) {
                            queue.remove(txid);
                        }
                    }
                }
                Scope::Prime => {
                    self.locked_prime.remove(txid);
                }
                Scope::Zonal => {}
            }
            if let Some(record) = self.txs.get_mut(txid) {
                record.settled_at_us = Some(found_at);
                let backlog = self.zone_backlog.entry(record.origin).or_default();
                *backlog = backlog.saturating_sub(1);
            }
            // Credit destination wallets.
            let _ = scope;
            if let Some(tx) = self.txs.get(txid).and_then(|r| r.tx.clone()) {
                for (i, output) in tx.outputs.iter().enumerate() {
                    if let Some(wallet) = self.wallets.get_mut(&output.owner) {
                        wallet.utxos.push_back((
                            OutPoint::new(*txid, i as u16),
                            output.amount,
                            0,
                        ));
                    }
                }
            }
        }
        self.epoch_fees += fees;

        let mut entry = JournalEntry {
            hash,
            undo,
            settled: outcome.settled,
            locked: outcome.locked,
            fees,
            is_prime: level == BlockLevel::Prime,
            escrow: None,
            fill_sample: Some(zonal_fill),
        };
        self.epoch_fill.0 += zonal_fill;
        self.epoch_fill.1 += 1;

        if level == BlockLevel::Prime {
            self.process_prime(&body, hash, found_at, &mut entry);
        }

        self.applied_set.insert(hash);
        self.journal.push(entry);
    }

    fn process_prime(
        &mut self,
        block: &Block,
        hash: Hash256,
        found_at_us: u64,
        entry: &mut JournalEntry,
    ) {
        self.prime_height += 1;
        self.prime_intervals_us.push(found_at_us - self.last_prime_us);
        self.last_prime_us = found_at_us;

        // Epoch enumeration from the linkage: the PRIME block itself is a
        // region and a zone block too.
        let mut region_finders: Vec<Hash256> = Vec::new();
        let mut zone_finders: Vec<Hash256> = Vec::new();
        for region_hash in &block.linked_region_hashes {
            if let Some(region_block) = self.view.store.get(region_hash) {
                region_finders.push(region_block.miner);
                zone_finders.push(region_block.miner);
                for zone_hash in &region_block.linked_zone_hashes {
                    if let Some(zone_block) = self.view.store.get(zone_hash) {
                        zone_finders.push(zone_block.miner);
                    }
                }
            }
        }
        region_finders.push(block.miner);
        zone_finders.push(block.miner);
        for zone_hash in &block.linked_zone_hashes {
            if let Some(zone_block) = self.view.store.get(zone_hash) {
                zone_finders.push(zone_block.miner);
            }
        }

        let emission_schedule = EmissionSchedule {
            per_prime_block: self.config.rewards.emission_per_prime,
            final_height: self.config.rewards.emission_final_height,
        };
        let emission = emission_schedule.at_height(self.prime_height);
        let available = emission + self.epoch_fees;
        let params = RewardParams {
            p_reward: available,
            chi_ppm: RewardParams::chi_from_fraction(self.config.rewards.chi),
            difficulty: DifficultyTriple {
                prime: self.prime_difficulty,
                region: *self
                    .region_difficulty
                    .get(&block.header.location_region)
                    .unwrap_or(&self.config.difficulty.region),
                zone: *self
                    .zone_difficulty
                    .get(&Location::new(block.header.location_region, block.header.location_zone))
                    .unwrap_or(&self.config.difficulty.zone),
            },
            mode: self.config.rewards.mode,
        };
        let payouts = distribute(&params, block.miner, &region_finders, &zone_finders)
            .expect("prime epoch has finders");
        let outcome = self.escrow.adjust(payouts.total, available);

        // Mint payout outputs in each finder's current zone.
        let owner_node = &self.owner_node;
        let nodes = &self.nodes;
        let maturity = self.config.rewards.coinbase_maturity;
        let dest_of = |owner: &Hash256| -> Location {
            owner_node
                .get(owner)
                .map(|&id| nodes[id].zone)
                .unwrap_or(Location::new(0, 0))
        };
        let mature_at = self
            .view
            .store
            .get(&hash)
            .map(|b| b.zone_height + maturity)
            .unwrap_or(maturity);
        self.ledger
            .mint_rewards(hash, &payouts.by_owner, dest_of, mature_at, &mut entry.undo);
        for (owner, amount) in &payouts.by_owner {
            if *amount == 0 {
                continue;
            }
            let home = dest_of(owner);
            let wallet = self.wallets.entry(*owner).or_insert_with(|| OwnerWallet {
                home_declared: home,
                utxos: VecDeque::new(),
            });
            let mut tag = Vec::with_capacity(44);
            tag.extend_from_slice(b"reward");
            tag.extend_from_slice(&hash.0);
            let idx = payouts.by_owner.keys().position(|k| k == owner).unwrap() as u32;
            tag.extend_from_slice(&idx.to_le_bytes());
            wallet.utxos.push_back((OutPoint::new(sha256d(&tag), 0), *amount, mature_at));
        }

        self.minted_total += emission + outcome.minted;
        entry.escrow = Some((outcome, emission));
        self.reward_audits.push(RewardAudit {
            prime_height: self.prime_height,
            prime_hash: hash,
            emission,
            fees: self.epoch_fees,
            available,
            reward: payouts.total,
            region_blocks: region_finders.len() as u64,
            zone_blocks: zone_finders.len() as u64,
            payout_recipients: payouts.by_owner.len() as u64,
            sequestered: outcome.sequestered,
            drawn: outcome.drawn,
            minted: outcome.minted,
            escrow_balance: self.escrow.balance,
        });
        self.epoch_fees = 0;

        // Resize review.
        if self.config.sizing.enabled && self.epoch_fill.1 > 0 {
            let mean_fill = (self.epoch_fill.0 / self.epoch_fill.1 as f64).min(1.0);
            let old = self.map_state.map;
            let step = self.map_state.observe_epoch_fill(mean_fill);
            if step != ResizeStep::None {
                let new = self.map_state.map;
                self.resize_events.push(ResizeEvent {
                    at_prime_height: self.prime_height,
                    old_regions: old.regions,
                    old_zones: old.zones,
                    new_regions: new.regions,
                    new_zones: new.zones,
                    window_mean_fill: mean_fill,
                });
                self.apply_resize(old, new);
            }
        }
        self.epoch_fill = (0.0, 0);
    }

    fn apply_resize(&mut self, old: MapSize, new: MapSize) {
        // Ensure state containers exist for newly valid zones.
        for zone in new.iter_zones() {
            self.zone_difficulty.entry(zone).or_insert(self.config.difficulty.zone);
            self.zone_retarget.entry(zone).or_insert((0, self.now_us));
            self.zone_backlog.entry(zone).or_default();
            self.zone_members.entry(zone).or_default();
            self.zone_owners.entry(zone).or_default();
        }
        for region in 0..new.regions {
            self.region_difficulty.entry(region as u8).or_insert(self.config.difficulty.region);
            self.region_retarget.entry(region as u8).or_insert((0, self.now_us));
        }
        // Move nodes whose zone is no longer valid.
        let moves: Vec<(usize, Location)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.zone.region as u16 >= new.regions || n.zone.zone as u16 >= new.zones)
            .map(|(id, n)| (id, n.zone.remap(new)))
            .collect();
        for (id, target) in moves {
            self.move_node(id, target);
        }
        // Re-bucket wallet owners by their home's new effective zone.
        let mut zone_owners: BTreeMap<Location, Vec<Hash256>> = BTreeMap::new();
        for zone in new.iter_zones() {
            zone_owners.insert(zone, Vec::new());
        }
        for (owner, wallet) in &self.wallets {
            let zone = wallet.home_declared.remap(new);
            zone_owners.entry(zone).or_default().push(*owner);
        }
        self.zone_owners = zone_owners;
        let _ = old;
    }

    // ------------------------------------------------------------------
    // Group selection
    // ------------------------------------------------------------------

    fn schedule_review(&mut self, node_id: usize) {
        let mean = self.config.group_selection.review_mean_s.max(0.001);
        let dt = exp_us(&mut self.nodes[node_id].review_rng, 1.0 / mean);
        self.schedule(dt, Event::Review { node: node_id });
    }

    fn on_review(&mut self, node_id: usize) {
        if !self.config.group_selection.enabled || self.nodes[node_id].adversary {
            return;
        }
        self.schedule_review(node_id);
        let map = self.map_state.map;
        let hp = self.nodes[node_id].hash_power;
        let current = self.nodes[node_id].zone;
        let mut best: Option<(f64, Location)> = None;
        let mut current_score = 0.0;
        for zone in map.iter_zones() {
            let power = self.honest_zone_power(zone);
            let lat = self.latency_to_zone_ms(node_id, zone);
            let score = group_score(
                hp,
                if zone == current { power } else { power + hp },
                lat,
                self.config.group_selection.latency_weight,
            );
            if zone == current {
                current_score = score;
            } else if best.map(|(s, _)| score > s).unwrap_or(true) {
                best = Some((score, zone));
            }
        }
        if let Some((score, target)) = best {
            if score > current_score * (1.0 + self.config.group_selection.hysteresis) {
                self.move_node(node_id, target);
                self.group_moves += 1;
                if target == self.attack_zone && self.adversary_node.is_some() {
                    self.attack_race.migrated_into_zone += 1;
                }
            }
        }
    }

    fn move_node(&mut self, node_id: usize, target: Location) {
        let old = self.nodes[node_id].zone;
        if old == target {
            return;
        }
        if let Some(members) = self.zone_members.get_mut(&old) {
            members.retain(|&m| m != node_id);
        }
        self.zone_members.entry(target).or_default().push(node_id);
        let region_changed = old.region != target.region;
        {
            let node = &mut self.nodes[node_id];
            node.zone = target;
            node.mempool[0] = MempoolQueue::new(node.mempool[0].cap);
            if region_changed {
                node.mempool[1] = MempoolQueue::new(node.mempool[1].cap);
                node.unlinked_zones.clear();
            }
            node.mining_epoch += 1;
        }
        // Adopt the target zone's canonical tip.
        self.nodes[node_id].zone_tip = self.view.zone_tip(target);
        if region_changed {
            self.nodes[node_id].region_tip = self.view.region_tip(target.region);
        }
        self.rebuild_zone_peers(old);
        self.rebuild_zone_peers(target);
        self.resample_cross_peers(node_id);
        self.schedule_mining(node_id);
    }

    // ------------------------------------------------------------------
    // Attack
    // ------------------------------------------------------------------

    fn on_attack_start(&mut self) {
        let Some(id) = self.adversary_node else { return };
        self.nodes[id].adversary_active = true;
        self.adv_tip = self.view.zone_tip(self.attack_zone);
        self.adv_work = self
            .view
            .store
            .get(&self.adv_tip)
            .map(|b| b.zone_work)
            .unwrap_or(0);
    }

    fn track_attack_race(&mut self) {
        if self.adversary_node.is_none() || self.adv_tip == Hash256::ZERO {
            return;
        }
        let honest_tip = self.view.zone_tip(self.attack_zone);
        let honest_work =
            self.view.store.get(&honest_tip).map(|b| b.zone_work).unwrap_or(0) as i128;
        let lead = honest_work - self.adv_work as i128;
        if lead < 0 {
            self.attack_race.adversary_ever_led = true;
            self.honest_led_before = false;
        } else if lead > 0 && self.attack_race.adversary_ever_led && !self.honest_led_before {
            self.honest_led_before = true;
            self.attack_race.overtake_time_s = Some(self.now_us as f64 / 1e6);
        }
        self.attack_race.honest_final_lead = lead;
    }

    // ------------------------------------------------------------------
    // Pruning
    // ------------------------------------------------------------------

    fn on_prune(&mut self) {
        let horizon_us = (self.config.sim.body_prune_horizon_s * 1e6) as u64;
        let cutoff = self.now_us.saturating_sub(horizon_us);
        self.view.store.prune_bodies(cutoff);
        self.prop_data.retain(|_, p| p.created_us >= cutoff);

        // Finalize settled transaction records past the horizon.
        let mut finalized: Vec<Hash256> = Vec::new();
        for (txid, record) in &self.txs {
            if let Some(at) = record.settled_at_us {
                if at < cutoff {
                    finalized.push(*txid);
                }
            }
        }
        for txid in finalized {
            let record = self.txs.remove(&txid).expect("present");
            let at = record.settled_at_us.expect("settled");
            let key = SimMetrics::scope_key(record.scope);
            *self.settled_counts.entry(key).or_default() += 1;
            self.latency_samples
                .entry(key)
                .or_default()
                .push((at.saturating_sub(record.arrival_us)) / 1000);
        }
        for node in &mut self.nodes {
            node.seen_txs.retain(|_, at| *at >= cutoff);
            node.seen_blocks.retain(|_, (_, at)| *at >= cutoff);
            for pool in &mut node.mempool {
                pool.compact();
            }
        }
        self.schedule(horizon_us / 2, Event::Prune);
    }

    // ------------------------------------------------------------------
    // Finalization
    // ------------------------------------------------------------------

    pub fn finish(mut self) -> SimMetrics {
        // Flush remaining settled records into the aggregates.
        let remaining: Vec<Hash256> = self
            .txs
            .iter()
            .filter(|(_, r)| r.settled_at_us.is_some())
            .map(|(id, _)| *id)
            .collect();
        for txid in remaining {
            let record = self.txs.remove(&txid).expect("present");
            let at = record.settled_at_us.expect("settled");
            let key = SimMetrics::scope_key(record.scope);
            *self.settled_counts.entry(key).or_default() += 1;
            self.latency_samples
                .entry(key)
                .or_default()
                .push((at.saturating_sub(record.arrival_us)) / 1000);
        }

        let duration_s = self.config.sim.duration_s;
        let mut latency_by_scope = BTreeMap::new();
        for (key, samples) in self.latency_samples.iter_mut() {
            latency_by_scope.insert(key.to_string(), LatencyStats::from_samples(samples));
        }
        let settled_by_scope: BTreeMap<String, u64> = self
            .settled_counts
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let settled_total: u64 = self.settled_counts.values().sum();

        // Canonical block census and storage accounting.
        let canonical = self.view.canonical_blocks();
        let mut blocks_canonical = LevelCounts::default();
        let mut infos = Vec::new();
        let tx_bytes = self.config.messages.tx_bytes;
        for hash in &canonical {
            if *hash == self.view.genesis() {
                continue;
            }
            let stored = self.view.store.get(hash).expect("stored");
            blocks_canonical.bump(stored.level);
            infos.push(crate::ledger::BlockStorageInfo {
                level: stored.level,
                location: stored.location,
                header_bytes: HEADER_BYTES,
                body_bytes: tx_bytes * stored.tx_count() + 32 * stored.linked_count(),
            });
        }
        let full_bytes = crate::ledger::storage_footprint(NodeRole::Full, &infos);
        let map = self.map_state.map;
        let mut sharded_sum = 0u64;
        let mut own_zone_sum = 0u64;
        let mut zone_block_bytes = 0u64;
        for info in &infos {
            if info.level == BlockLevel::Zone {
                zone_block_bytes += info.header_bytes + info.body_bytes;
            }
        }
        for zone in map.iter_zones() {
            sharded_sum += crate::ledger::storage_footprint(NodeRole::Zone(zone), &infos);
            own_zone_sum += infos
                .iter()
                .filter(|i| i.location == zone)
                .map(|i| i.header_bytes + i.body_bytes)
                .sum::<u64>();
        }
        let zone_count = map.zone_count();
        let sharded_mean = sharded_sum / zone_count as u64;
        let storage = StorageReport {
            full_node_bytes: full_bytes,
            sharded_node_bytes: sharded_mean,
            sharded_to_full_ratio: if full_bytes > 0 {
                sharded_mean as f64 / full_bytes as f64
            } else {
                0.0
            },
            zone_block_bytes_total: zone_block_bytes,
            own_zone_bytes_mean: own_zone_sum / zone_count as u64,
        };

        let valid_zone_found = self.blocks_found.zone.saturating_sub(self.invalid_blocks);
        let uncles = LevelCounts {
            zone: valid_zone_found.saturating_sub(blocks_canonical.zone),
            region: self.blocks_found.region.saturating_sub(blocks_canonical.region),
            prime: self.blocks_found.prime.saturating_sub(blocks_canonical.prime),
        };

        let mean_prime_interval_s = if self.prime_intervals_us.is_empty() {
            0.0
        } else {
            self.prime_intervals_us.iter().sum::<u64>() as f64
                / self.prime_intervals_us.len() as f64
                / 1e6
        };
        let canonical_total = blocks_canonical.total();
        let mean_zone_interval_s = if canonical_total > 0 {
            duration_s * zone_count as f64 / canonical_total as f64
        } else {
            0.0
        };

        let traffic: Vec<NodeTraffic> = self.nodes.iter().map(|n| n.traffic.clone()).collect();
        let total_sent: u64 = traffic.iter().map(|t| t.total_sent()).sum();
        let total_received: u64 = traffic.iter().map(|t| t.total_received()).sum();
        let mean_bw = SimMetrics::compute_mean_bandwidth(&traffic, duration_s);

        let mean_zone_fill = {
            let mut sum = 0.0;
            let mut count = 0u64;
            for entry in &self.journal {
                if let Some(f) = entry.fill_sample {
                    sum += f;
                    count += 1;
                }
            }
            if count > 0 {
                sum / count as f64
            } else {
                0.0
            }
        };

        // Conservation: circulating supply plus escrow plus the fees
        // collected since the last PRIME block equals bootstrap plus
        // everything minted (scheduled emission and shortfall mints).
        let supply_conserved = self.ledger.total_supply() as i128
            + self.escrow.balance as i128
            + self.epoch_fees as i128
            == self.bootstrap_supply as i128 + self.minted_total as i128;

        SimMetrics {
            seed: self.seed,
            duration_s,
            node_count: self.nodes.len(),
            zone_count,
            arrivals: self.arrivals,
            admitted: self.admitted,
            unserved: self.unserved,
            spam_rejections: self.spam_rejections,
            settled_by_scope,
            settled_total,
            settled_tps: settled_total as f64 / duration_s,
            latency_by_scope,
            blocks_found: self.blocks_found,
            blocks_canonical,
            uncles,
            invalid_blocks: self.invalid_blocks,
            mean_zone_interval_s,
            mean_prime_interval_s,
            prime_epochs: self.prime_intervals_us.len() as u64,
            mean_zone_fill,
            per_node_traffic: traffic,
            mean_node_bandwidth_bps: mean_bw,
            total_bytes_sent: total_sent,
            total_bytes_received: total_received,
            resize_events: self.resize_events,
            final_map: (map.regions, map.zones),
            reward_audits: self.reward_audits,
            escrow_balance: self.escrow.balance,
            cumulative_minted: self.minted_total,
            total_supply: self.ledger.total_supply(),
            supply_conserved,
            storage,
            group_moves: self.group_moves,
        }
    }

    // Test and scenario hooks.

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn node_zone(&self, node_id: usize) -> Location {
        self.nodes[node_id].zone
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn zone_node_counts(&self) -> BTreeMap<Location, usize> {
        self.zone_members.iter().map(|(z, m)| (*z, m.len())).collect()
    }

    pub fn ledger_state_hash(&self) -> Hash256 {
        self.ledger.state_hash()
    }

    pub fn export_chain(&self) -> String {
        self.view.export_canonical()
    }

    pub fn arrivals_by_zone(&self) -> &BTreeMap<Location, u64> {
        &self.arrivals_by_zone
    }

    /// Debug dump of non-canonical valid blocks: why did they fork?
    pub fn debug_forks(&mut self) {
        let canonical: std::collections::HashSet<Hash256> =
            self.view.canonical_blocks().into_iter().collect();
        let mut orphan_count = 0;
        let mut sibling_deltas: Vec<u64> = Vec::new();
        let mut no_sibling = 0;
        let blocks: Vec<(Hash256, Hash256, u64, Location, u64)> = self
            .view
            .store
            .iter()
            .filter(|b| b.valid && !canonical.contains(&b.hash) && b.level == BlockLevel::Zone)
            .map(|b| (b.hash, b.header.parent_zone, b.found_at_us, b.location, b.zone_height))
            .collect();
        for (hash, parent, at, zone, height) in &blocks {
            orphan_count += 1;
            // Find the canonical sibling at the same height in the same zone.
            let sibling = self
                .view
                .store
                .iter()
                .filter(|b| {
                    b.location == *zone && b.zone_height == *height && canonical.contains(&b.hash)
                })
                .next();
            match sibling {
                Some(s) => sibling_deltas.push(s.found_at_us.abs_diff(*at)),
                None => {
                    no_sibling += 1;
                    let parent_canon = canonical.contains(parent);
                    if no_sibling <= 10 {
                        println!(
                            "no-sibling orphan: zone {} height {} at {}us parent_canon={} hash={}",
                            zone, height, at, parent_canon, hash
                        );
                    }
                }
            }
        }
        sibling_deltas.sort_unstable();
        println!("valid zone-level orphans: {orphan_count}, no canonical sibling: {no_sibling}");
        if !sibling_deltas.is_empty() {
            println!(
                "sibling delta us: p10={} p50={} p90={}",
                sibling_deltas[sibling_deltas.len() / 10],
                sibling_deltas[sibling_deltas.len() / 2],
                sibling_deltas[sibling_deltas.len() * 9 / 10]
            );
        }
    }
}

/// Relative attractiveness of a zone for a miner: expected share of the
/// zone's block flow at post-join equilibrium, discounted by latency.
pub fn group_score(hash_power: f64, zone_power_after_join: f64, latency_ms: f64, latency_weight: f64) -> f64 {
    let share = hash_power / zone_power_after_join.max(1e-12);
    share / (1.0 + latency_weight * latency_ms)
}

fn scope_index(scope: Scope) -> usize {
    match scope {
        Scope::Zonal => 0,
        Scope::Regional => 1,
        Scope::Prime => 2,
    }
}

fn audience_of(receiver_zone: Location, block_zone: Location) -> crate::primitives::BundleAudience {
    if receiver_zone == block_zone {
        crate::primitives::BundleAudience::OwnZone
    } else if receiver_zone.region == block_zone.region {
        crate::primitives::BundleAudience::Region
    } else {
        crate::primitives::BundleAudience::Global
    }
}

fn audience_index(a: crate::primitives::BundleAudience) -> usize {
    match a {
        crate::primitives::BundleAudience::OwnZone => 0,
        crate::primitives::BundleAudience::Region => 1,
        crate::primitives::BundleAudience::Global => 2,
    }
}

fn exp_us<R: Rng>(rng: &mut R, rate_per_s: f64) -> u64 {
    debug_assert!(rate_per_s > 0.0);
    let u: f64 = 1.0 - rng.gen::<f64>();
    let dt_s = -u.ln() / rate_per_s;
    (dt_s * 1e6).max(1.0) as u64
}

fn pick_scope<R: Rng>(mix: [f64; 3], rng: &mut R) -> Scope {
    let u: f64 = rng.gen();
    if u < mix[0] {
        Scope::Zonal
    } else if u < mix[0] + mix[1] {
        Scope::Regional
    } else {
        Scope::Prime
    }
}

/// Uniformly random declared byte congruent to `effective` modulo the map
/// dimension, so remapping exercises the whole 0-255 range.
fn spread_declared<R: Rng>(effective: u8, modulus: u16, rng: &mut R) -> u8 {
    let t_max = (255 - effective as u16) / modulus;
    let t = rng.gen_range(0..=t_max);
    (effective as u16 + t * modulus) as u8
}

/// Deterministic zone center in the unit square, stable across resizes.
fn zone_center(zone: Location) -> (f64, f64) {
    let digest = sha256d(&[b"zone-center" as &[u8], &[zone.region, zone.zone]].concat());
    let x = u64::from_le_bytes(digest.0[0..8].try_into().unwrap()) as f64 / u64::MAX as f64;
    let y = u64::from_le_bytes(digest.0[8..16].try_into().unwrap()) as f64 / u64::MAX as f64;
    (x, y)
}

fn genesis_header(triple: &DifficultyTriple, map: MapSize) -> BlockHeader {
    let (bits_prime, bits_region, bits_zone) = triple.compact_bits();
    BlockHeader {
        version: 1,
        bits_prime,
        bits_region,
        bits_zone,
        map_region: MapSize::encode_byte(map.regions),
        map_zone: MapSize::encode_byte(map.zones),
        ..BlockHeader::zeroed()
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_score_prefers_underpowered_zones() {
        // Joining a half-powered zone doubles the share.
        let near = group_score(1.0, 4.0, 20.0, 0.0);
        let weak = group_score(1.0, 2.0, 20.0, 0.0);
        assert!(weak > near * 1.5);
    }

    #[test]
    fn group_score_latency_breakeven_flips_choice() {
        // A distant half-powered zone vs a near equal-powered zone: the
        // preference flips as the latency weight crosses the closed-form
        // break-even 1/(w*(lat_far - lat_near)) ... solved for w below.
        let hp = 1.0;
        let near_power = 9.0 + hp;
        let far_power = 4.0 + hp;
        let lat_near = 10.0;
        let lat_far = 200.0;
        // Break-even weight: share_far/(1+w*lat_far) = share_near/(1+w*lat_near).
        let share_near = hp / near_power;
        let share_far = hp / far_power;
        let w_star = (share_far - share_near) / (share_near * lat_far - share_far * lat_near);
        let below = w_star * 0.5;
        let above = w_star * 2.0;
        assert!(
            group_score(hp, far_power, lat_far, below) > group_score(hp, near_power, lat_near, below)
        );
        assert!(
            group_score(hp, far_power, lat_far, above) < group_score(hp, near_power, lat_near, above)
        );
    }

    #[test]
    fn spread_declared_stays_in_residue_class() {
        let mut rng = stream(1, "test", 0);
        for modulus in [1u16, 3, 10, 255, 256] {
            for eff in 0..modulus.min(256) as u16 {
                let v = spread_declared(eff as u8, modulus, &mut rng);
                assert_eq!(v as u16 % modulus, eff % modulus);
            }
        }
    }
}
