//! Measurement output of a simulation run: per-node bandwidth by message
//! class, settlement latencies by scope, block and fork counts, storage by
//! role, reward audits. Serialized as line-delimited JSON records plus a
//! plain-text summary table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::primitives::{BlockLevel, Scope};
use crate::rewards::RewardAudit;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgClass {
    TxAnnounce,
    TxBody,
    BlockHeader,
    BlockBundle,
    Request,
}

pub const MSG_CLASSES: [MsgClass; 5] = [
    MsgClass::TxAnnounce,
    MsgClass::TxBody,
    MsgClass::BlockHeader,
    MsgClass::BlockBundle,
    MsgClass::Request,
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounter {
    pub sent: u64,
    pub received: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeTraffic {
    pub tx_announce: ByteCounter,
    pub tx_body: ByteCounter,
    pub block_header: ByteCounter,
    pub block_bundle: ByteCounter,
    pub request: ByteCounter,
}

impl NodeTraffic {
    pub fn counter_mut(&mut self, class: MsgClass) -> &mut ByteCounter {
        match class {
            MsgClass::TxAnnounce => &mut self.tx_announce,
            MsgClass::TxBody => &mut self.tx_body,
            MsgClass::BlockHeader => &mut self.block_header,
            MsgClass::BlockBundle => &mut self.block_bundle,
            MsgClass::Request => &mut self.request,
        }
    }

    pub fn counter(&self, class: MsgClass) -> &ByteCounter {
        match class {
            MsgClass::TxAnnounce => &self.tx_announce,
            MsgClass::TxBody => &self.tx_body,
            MsgClass::BlockHeader => &self.block_header,
            MsgClass::BlockBundle => &self.block_bundle,
            MsgClass::Request => &self.request,
        }
    }

    pub fn total_sent(&self) -> u64 {
        MSG_CLASSES.iter().map(|&c| self.counter(c).sent).sum()
    }

    pub fn total_received(&self) -> u64 {
        MSG_CLASSES.iter().map(|&c| self.counter(c).received).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub p50_ms: u64,
    pub p90_ms: u64,
    pub mean_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &mut Vec<u64>) -> LatencyStats {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_unstable();
        let count = samples.len() as u64;
        let pick = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        let mean = samples.iter().sum::<u64>() as f64 / count as f64;
        LatencyStats { count, p50_ms: pick(0.5), p90_ms: pick(0.9), mean_ms: mean }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LevelCounts {
    pub zone: u64,
    pub region: u64,
    pub prime: u64,
}

impl LevelCounts {
    pub fn bump(&mut self, level: BlockLevel) {
        match level {
            BlockLevel::Zone => self.zone += 1,
            BlockLevel::Region => self.region += 1,
            BlockLevel::Prime => self.prime += 1,
            BlockLevel::None => {}
        }
    }

    pub fn total(&self) -> u64 {
        self.zone + self.region + self.prime
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResizeEvent {
    pub at_prime_height: u64,
    pub old_regions: u16,
    pub old_zones: u16,
    pub new_regions: u16,
    pub new_zones: u16,
    pub window_mean_fill: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StorageReport {
    /// Bytes a full archival node stores for the whole run.
    pub full_node_bytes: u64,
    /// Mean bytes across one sampled zone node per zone.
    pub sharded_node_bytes: u64,
    pub sharded_to_full_ratio: f64,
    /// Foreign-header plus lineage share, for the sharding-ratio check.
    pub zone_block_bytes_total: u64,
    pub own_zone_bytes_mean: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimMetrics {
    pub seed: u64,
    pub duration_s: f64,
    pub node_count: usize,
    pub zone_count: u32,

    pub arrivals: u64,
    pub admitted: u64,
    pub unserved: u64,
    pub spam_rejections: u64,

    pub settled_by_scope: BTreeMap<String, u64>,
    pub settled_total: u64,
    pub settled_tps: f64,
    pub latency_by_scope: BTreeMap<String, LatencyStats>,

    pub blocks_found: LevelCounts,
    pub blocks_canonical: LevelCounts,
    pub uncles: LevelCounts,
    pub invalid_blocks: u64,
    pub mean_zone_interval_s: f64,
    pub mean_prime_interval_s: f64,
    pub prime_epochs: u64,
    pub mean_zone_fill: f64,

    pub per_node_traffic: Vec<NodeTraffic>,
    pub mean_node_bandwidth_bps: f64,
    pub total_bytes_sent: u64,
    pub total_bytes_received: u64,

    pub resize_events: Vec<ResizeEvent>,
    pub final_map: (u16, u16),
    pub reward_audits: Vec<RewardAudit>,
    pub escrow_balance: u64,
    pub cumulative_minted: u64,
    pub total_supply: u64,
    pub supply_conserved: bool,

    pub storage: StorageReport,
    pub group_moves: u64,
}

impl SimMetrics {
    pub fn scope_key(scope: Scope) -> &'static str {
        match scope {
            Scope::Zonal => "zonal",
            Scope::Regional => "regional",
            Scope::Prime => "prime",
        }
    }

    /// Mean of (sent + received) / 2 per node, in bytes per simulated
    /// second.
    pub fn compute_mean_bandwidth(traffic: &[NodeTraffic], duration_s: f64) -> f64 {
        if traffic.is_empty() || duration_s <= 0.0 {
            return 0.0;
        }
        let total: u64 = traffic.iter().map(|t| t.total_sent() + t.total_received()).sum();
        total as f64 / 2.0 / traffic.len() as f64 / duration_s
    }

    /// Line-delimited machine-readable records: one `summary` record, one
    /// `node` record per node, then `resize` and `reward` records.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut summary = serde_json::Map::new();
        summary.insert("record".into(), "summary".into());
        let slim = SummaryRecord::from(self);
        let value = serde_json::to_value(&slim).expect("serializable");
        if let serde_json::Value::Object(map) = value {
            summary.extend(map);
        }
        out.push_str(&serde_json::Value::Object(summary).to_string());
        out.push('\n');
        for (id, traffic) in self.per_node_traffic.iter().enumerate() {
            let rec = serde_json::json!({
                "record": "node",
                "id": id,
                "sent": traffic.total_sent(),
                "received": traffic.total_received(),
                "tx_announce": traffic.tx_announce,
                "tx_body": traffic.tx_body,
                "block_header": traffic.block_header,
                "block_bundle": traffic.block_bundle,
                "request": traffic.request,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        for event in &self.resize_events {
            let rec = serde_json::json!({"record": "resize", "event": event});
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        for audit in &self.reward_audits {
            let rec = serde_json::json!({"record": "reward", "audit": audit});
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(&format!("{k:<28} {v}\n"));
        };
        line("duration_s", format!("{:.1}", self.duration_s));
        line("nodes", self.node_count.to_string());
        line("zones", self.zone_count.to_string());
        line("arrivals", self.arrivals.to_string());
        line("settled_total", self.settled_total.to_string());
        line("settled_tps", format!("{:.2}", self.settled_tps));
        for (scope, stats) in &self.latency_by_scope {
            line(
                &format!("latency_{scope}_ms"),
                format!("p50={} p90={} n={}", stats.p50_ms, stats.p90_ms, stats.count),
            );
        }
        line(
            "blocks_found z/r/p",
            format!(
                "{}/{}/{}",
                self.blocks_found.zone, self.blocks_found.region, self.blocks_found.prime
            ),
        );
        line(
            "uncles z/r/p",
            format!("{}/{}/{}", self.uncles.zone, self.uncles.region, self.uncles.prime),
        );
        line("mean_zone_interval_s", format!("{:.2}", self.mean_zone_interval_s));
        line("mean_prime_interval_s", format!("{:.2}", self.mean_prime_interval_s));
        line("mean_zone_fill", format!("{:.3}", self.mean_zone_fill));
        line("mean_node_bandwidth_Bps", format!("{:.1}", self.mean_node_bandwidth_bps));
        line("spam_rejections", self.spam_rejections.to_string());
        line("escrow_balance", self.escrow_balance.to_string());
        line("total_supply", self.total_supply.to_string());
        line("supply_conserved", self.supply_conserved.to_string());
        line("final_map", format!("{}x{}", self.final_map.0, self.final_map.1));
        line(
            "storage sharded/full",
            format!(
                "{}/{} ({:.4})",
                self.storage.sharded_node_bytes,
                self.storage.full_node_bytes,
                self.storage.sharded_to_full_ratio
            ),
        );
        line("group_moves", self.group_moves.to_string());
        s
    }
}

/// Flat summary subset embedded in the first JSONL record.
#[derive(Serialize)]
struct SummaryRecord {
    seed: u64,
    duration_s: f64,
    node_count: usize,
    zone_count: u32,
    arrivals: u64,
    admitted: u64,
    unserved: u64,
    spam_rejections: u64,
    settled_total: u64,
    settled_tps: f64,
    settled_by_scope: BTreeMap<String, u64>,
    latency_by_scope: BTreeMap<String, LatencyStats>,
    blocks_found: LevelCounts,
    blocks_canonical: LevelCounts,
    uncles: LevelCounts,
    invalid_blocks: u64,
    mean_zone_interval_s: f64,
    mean_prime_interval_s: f64,
    prime_epochs: u64,
    mean_zone_fill: f64,
    mean_node_bandwidth_bps: f64,
    total_bytes_sent: u64,
    total_bytes_received: u64,
    final_map: (u16, u16),
    escrow_balance: u64,
    cumulative_minted: u64,
    total_supply: u64,
    supply_conserved: bool,
    storage: StorageReport,
    group_moves: u64,
}

impl From<&SimMetrics> for SummaryRecord {
    fn from(m: &SimMetrics) -> Self {
        SummaryRecord {
            seed: m.seed,
            duration_s: m.duration_s,
            node_count: m.node_count,
            zone_count: m.zone_count,
            arrivals: m.arrivals,
            admitted: m.admitted,
            unserved: m.unserved,
            spam_rejections: m.spam_rejections,
            settled_total: m.settled_total,
            settled_tps: m.settled_tps,
            settled_by_scope: m.settled_by_scope.clone(),
            latency_by_scope: m.latency_by_scope.clone(),
            blocks_found: m.blocks_found,
            blocks_canonical: m.blocks_canonical,
            uncles: m.uncles,
            invalid_blocks: m.invalid_blocks,
            mean_zone_interval_s: m.mean_zone_interval_s,
            mean_prime_interval_s: m.mean_prime_interval_s,
            prime_epochs: m.prime_epochs,
            mean_zone_fill: m.mean_zone_fill,
            mean_node_bandwidth_bps: m.mean_node_bandwidth_bps,
            total_bytes_sent: m.total_bytes_sent,
            total_bytes_received: m.total_bytes_received,
            final_map: m.final_map,
            escrow_balance: m.escrow_balance,
            cumulative_minted: m.cumulative_minted,
            total_supply: m.total_supply,
            supply_conserved: m.supply_conserved,
            storage: m.storage,
            group_moves: m.group_moves,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_percentiles() {
        let mut samples: Vec<u64> = (1..=100).collect();
        let stats = LatencyStats::from_samples(&mut samples);
        assert_eq!(stats.count, 100);
        assert_eq!(stats.p50_ms, 51);
        assert_eq!(stats.p90_ms, 90);
        let mut empty = Vec::new();
        assert_eq!(LatencyStats::from_samples(&mut empty).count, 0);
    }

    #[test]
    fn traffic_totals() {
        let mut t = NodeTraffic::default();
        t.counter_mut(MsgClass::TxBody).sent += 140;
        t.counter_mut(MsgClass::TxBody).received += 140;
        t.counter_mut(MsgClass::BlockHeader).received += 272;
        assert_eq!(t.total_sent(), 140);
        assert_eq!(t.total_received(), 412);
    }
}
