//! Scenario drivers built on the engine: plain runs, the bandwidth sweep
//! against a flat-gossip baseline, the zone-takeover attack, and the
//! wrong-zone spam fuzz.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hash::sha256d;
use crate::primitives::{KeyedHashScheme, Location, SignatureScheme, Transaction, TxOutput};

use super::config::SimConfig;
use super::engine::Engine;
use super::metrics::SimMetrics;
use super::rng::stream;

/// Runs one scenario to completion. Deterministic in (config, seed).
pub fn run(config: &SimConfig, seed: u64) -> SimMetrics {
    let mut engine = Engine::new(config.clone(), seed);
    engine.run_to_end();
    engine.finish()
}

/// One sweep point: demand multiplier, per-node bandwidth in both modes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiplier: u32,
    /// Zones deployed in protocol mode at this demand.
    pub map_zones: u32,
    pub baseline_bandwidth_bps: f64,
    pub protocol_bandwidth_bps: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub baseline_fit_slope: f64,
    pub protocol_fit_slope: f64,
    /// Protocol slope fitted over the full-map points only.
    pub slope_ratio: f64,
}

impl SweepTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("  N    zones   baseline B/s    protocol B/s    ratio\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{:>3} {:>8} {:>14.1} {:>15.1} {:>7.1}%\n",
                row.multiplier,
                row.map_zones,
                row.baseline_bandwidth_bps,
                row.protocol_bandwidth_bps,
                row.ratio * 100.0
            ));
        }
        out.push_str(&format!(
            "baseline slope {:.3} B/s per multiplier; protocol slope {:.3}; ratio {:.5}\n",
            self.baseline_fit_slope, self.protocol_fit_slope, self.slope_ratio
        ));
        out
    }
}

/// Converts a scenario to flat-gossip mode: one zone holding every node,
/// the degenerate deployment where every transaction is relayed per-tx to
/// the whole network.
fn baseline_config(config: &SimConfig) -> SimConfig {
    let mut flat = config.clone();
    let total_nodes = config.node_count() as u32;
    let zone_count = config.map_size().zone_count() as u64;
    flat.topology.regions = 1;
    flat.topology.zones_per_region = 1;
    flat.topology.nodes_per_zone = total_nodes;
    // One chain at the per-zone cadence: scale difficulties and block
    // capacity to the concentrated population.
    flat.difficulty.zone = config.difficulty.zone.saturating_mul(zone_count);
    flat.difficulty.region = config.difficulty.region.saturating_mul(zone_count);
    flat.difficulty.prime = config.difficulty.prime.saturating_mul(zone_count);
    flat.blocks.zone_txs = config.blocks.zone_txs.saturating_mul(zone_count as usize);
    flat.sizing.enabled = false;
    flat.group_selection.enabled = false;
    flat
}

fn scaled_demand(config: &SimConfig, multiplier: u32) -> SimConfig {
    let mut scaled = config.clone();
    scaled.demand.tps = config.demand.tps * multiplier as f64;
    scaled
}

/// Linear least-squares slope of y against x.
fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let den: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sweeps demand multipliers through both modes on equal demand.
///
/// Protocol mode deploys the map the resize controller would settle on at
/// each demand level: below `full_map_from_multiplier` a single zone
/// suffices and the run degenerates to flat gossip (ratio 1 by
/// construction, as in the base column of the reference comparison).
pub fn bandwidth_sweep(config: &SimConfig, seed: u64, multipliers: &[u32]) -> SweepTable {
    let mut rows = Vec::new();
    for &multiplier in multipliers {
        let scaled = scaled_demand(config, multiplier);
        let flat = baseline_config(&scaled);
        let baseline = run(&flat, seed);
        let protocol = if multiplier < config.sweep.full_map_from_multiplier {
            // Below the deployment threshold the protocol runs a single
            // zone: exactly the baseline deployment.
            baseline.clone()
        } else {
            run(&scaled, seed)
        };
        rows.push(SweepRow {
            multiplier,
            map_zones: protocol.zone_count,
            baseline_bandwidth_bps: baseline.mean_node_bandwidth_bps,
            protocol_bandwidth_bps: protocol.mean_node_bandwidth_bps,
            ratio: if baseline.mean_node_bandwidth_bps > 0.0 {
                protocol.mean_node_bandwidth_bps / baseline.mean_node_bandwidth_bps
            } else {
                0.0
            },
        });
    }
    let baseline_points: Vec<(f64, f64)> =
        rows.iter().map(|r| (r.multiplier as f64, r.baseline_bandwidth_bps)).collect();
    let protocol_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.multiplier >= config.sweep.full_map_from_multiplier)
        .map(|r| (r.multiplier as f64, r.protocol_bandwidth_bps))
        .collect();
    let baseline_fit_slope = fit_slope(&baseline_points);
    let protocol_fit_slope = fit_slope(&protocol_points);
    SweepTable {
        rows,
        baseline_fit_slope,
        protocol_fit_slope,
        slope_ratio: if baseline_fit_slope > 0.0 {
            protocol_fit_slope / baseline_fit_slope
        } else {
            0.0
        },
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackReport {
    pub seed: u64,
    pub adversary_share: f64,
    pub migration_enabled: bool,
    pub adversary_ever_led: bool,
    pub honest_fork_won: bool,
    pub overtake_time_s: Option<f64>,
    pub honest_final_lead_work: i128,
    pub migrated_into_zone: u64,
    pub invalid_blocks: u64,
}

/// Runs the zone-takeover scenario: an adversary holding a configured
/// share of one zone's hash power mines a rule-violating fork. With group
/// selection enabled, outside hash power migrates toward the honest
/// minority and the honest fork should retake the lead.
pub fn run_attack(config: &SimConfig, seed: u64) -> AttackReport {
    let mut scenario = config.clone();
    scenario.attack.enabled = true;
    let mut engine = Engine::new(scenario.clone(), seed);
    engine.run_to_end();
    let race = engine.attack_race.clone();
    let metrics = engine.finish();
    AttackReport {
        seed,
        adversary_share: scenario.attack.share,
        migration_enabled: scenario.group_selection.enabled,
        adversary_ever_led: race.adversary_ever_led,
        honest_fork_won: race.honest_final_lead > 0,
        overtake_time_s: race.overtake_time_s,
        honest_final_lead_work: race.honest_final_lead,
        migrated_into_zone: race.migrated_into_zone,
        invalid_blocks: metrics.invalid_blocks,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpamReport {
    pub attempts: u64,
    pub rejected: u64,
    pub accepted_outside_origin: u64,
}

/// Fuzzes duplicate and conflicting broadcasts into foreign zones: a
/// transaction located in one zone is offered to nodes of other zones.
/// Located UTXOs make every such acceptance impossible.
pub fn spam_fuzz(config: &SimConfig, seed: u64, attempts: u64) -> SpamReport {
    let mut warmup = config.clone();
    warmup.sim.duration_s = warmup.sim.duration_s.min(5.0);
    let mut engine = Engine::new(warmup, seed);
    engine.run_to_end();

    let scheme = KeyedHashScheme;
    let mut rng = stream(seed, "spam", 0);
    let map = config.map_size();
    let mut rejected = 0u64;
    let mut accepted = 0u64;
    for i in 0..attempts {
        // A synthetic transfer located in a random zone.
        let origin = Location::new(
            rng.gen_range(0..map.regions) as u8,
            rng.gen_range(0..map.zones) as u8,
        );
        let owner = sha256d(&[b"spammer" as &[u8], &i.to_le_bytes()].concat());
        let mut tx = Transaction {
            inputs: vec![crate::primitives::OutPoint::new(sha256d(&i.to_le_bytes()), 0)],
            outputs: vec![TxOutput { amount: 1, destination: origin, owner }],
            location: origin,
            fee: 0,
            witness: Vec::new(),
        };
        let txid = tx.txid();
        tx.witness = scheme.sign(&owner, &txid);
        // Offer it to a node in a different zone.
        let node_count = engine.node_count();
        let mut node = rng.gen_range(0..node_count);
        let mut guard = 0;
        while engine.node_zone(node).remap(map) == origin.remap(map) && guard < 64 {
            node = rng.gen_range(0..node_count);
            guard += 1;
        }
        if engine.node_zone(node).remap(map) == origin.remap(map) {
            continue;
        }
        match engine.admit_tx(node, Arc::new(tx)) {
            Err(true) => rejected += 1,
            Err(false) => rejected += 1,
            Ok(()) => accepted += 1,
        }
    }
    SpamReport { attempts, rejected, accepted_outside_origin: accepted }
}
