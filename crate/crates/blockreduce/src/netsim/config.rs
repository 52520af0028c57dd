//! Scenario configuration: the human-editable TOML schema and its
//! validation. Every field is documented in `configs/` alongside the
//! shipped scenarios.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pow::DifficultyTriple;
use crate::primitives::MapSize;
use crate::rewards::RewardMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub regions: u16,
    pub zones_per_region: u16,
    pub nodes_per_zone: u32,
    pub hash_power_per_node: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    /// Fixed per-hop delay in milliseconds.
    pub base_ms: f64,
    /// Delay per unit of distance in the unit square.
    pub per_unit_ms: f64,
    /// Uniform jitter added per message.
    pub jitter_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub zone: usize,
    pub region: usize,
    pub global: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyConfig {
    pub zone: u64,
    pub region: u64,
    pub prime: u64,
    /// Expected hashes to clear a difficulty-1 target; mining rate is
    /// hash_power / (zone_difficulty x normalization).
    pub normalization: f64,
    pub retarget_window: u32,
    pub retarget_enabled: bool,
}

impl DifficultyConfig {
    pub fn triple(&self) -> Result<DifficultyTriple, ConfigError> {
        DifficultyTriple::new(self.prime, self.region, self.zone).map_err(|_| {
            ConfigError::Invalid(format!(
                "difficulty ordering violated: prime {} > region {} > zone {} > 0 required",
                self.prime, self.region, self.zone
            ))
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Network-wide transaction arrivals per simulated second.
    pub tps: f64,
    /// Fractions of zonal / regional / PRIME scope arrivals; sums to one.
    pub scope_mix: [f64; 3],
    /// Flat fee charged per scope class.
    pub fee_per_scope: [u64; 3],
    pub initial_utxos_per_zone: u32,
    pub initial_utxo_amount: u64,
    pub wallet_owners_per_zone: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockLimitsConfig {
    pub zone_txs: usize,
    pub region_txs: usize,
    pub prime_txs: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub chi: f64,
    pub mode: RewardMode,
    pub emission_per_prime: u64,
    pub emission_final_height: u64,
    /// Zone-chain confirmations before reward outputs become spendable.
    pub coinbase_maturity: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizingConfig {
    pub enabled: bool,
    pub target_fill: f64,
    pub band: f64,
    pub window: usize,
    pub zones_per_region_cap: u16,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageConfig {
    /// Inventory announcement cost, also charged for duplicate offers.
    pub announce_bytes: u64,
    /// Per-message envelope on transaction relays.
    pub envelope_bytes: u64,
    /// Accounting size of one transaction.
    pub tx_bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSelectionConfig {
    pub enabled: bool,
    /// Mean seconds between per-node group reviews (Poisson).
    pub review_mean_s: f64,
    /// Required relative score advantage before a node moves.
    pub hysteresis: f64,
    /// Score penalty per millisecond of median latency to the zone.
    pub latency_weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub duration_s: f64,
    /// Transaction and block bodies older than this are pruned from memory;
    /// reorgs never reach past it at the simulated scales.
    pub body_prune_horizon_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub enabled: bool,
    /// Zone the adversary concentrates on.
    pub zone: [u8; 2],
    /// Adversary share of that zone's hash power, in (0, 1).
    pub share: f64,
    /// Simulated second at which the adversary forks off.
    pub start_s: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { enabled: false, zone: [0, 0], share: 0.6, start_s: 30.0 }
    }
}

/// Bandwidth sweep settings: demand multipliers and the map deployed per
/// multiplier (the deployment the resize controller would converge to at
/// that demand; at base demand a single zone suffices and the protocol
/// degenerates to flat gossip).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub multipliers: Vec<u32>,
    /// Demand multipliers below this run the single-zone map.
    pub full_map_from_multiplier: u32,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { multipliers: vec![1, 2, 4, 8, 16], full_map_from_multiplier: 4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologyConfig,
    pub latency: LatencyConfig,
    pub peers: PeerConfig,
    pub difficulty: DifficultyConfig,
    pub demand: DemandConfig,
    pub blocks: BlockLimitsConfig,
    pub rewards: RewardConfig,
    pub sizing: SizingConfig,
    pub messages: MessageConfig,
    pub group_selection: GroupSelectionConfig,
    pub sim: SimSection,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<SimConfig, ConfigError> {
        let config: SimConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn map_size(&self) -> MapSize {
        MapSize::new(self.topology.regions, self.topology.zones_per_region)
            .expect("validated topology")
    }

    pub fn node_count(&self) -> usize {
        self.topology.regions as usize
            * self.topology.zones_per_region as usize
            * self.topology.nodes_per_zone as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        if !(1..=256).contains(&t.regions) || !(1..=256).contains(&t.zones_per_region) {
            return Err(ConfigError::Invalid(
                "regions and zones_per_region must be in 1..=256".into(),
            ));
        }
        if t.nodes_per_zone == 0 {
            return Err(ConfigError::Invalid("nodes_per_zone must be positive".into()));
        }
        if t.hash_power_per_node <= 0.0 {
            return Err(ConfigError::Invalid("hash_power_per_node must be positive".into()));
        }
        self.difficulty.triple()?;
        if self.difficulty.normalization <= 0.0 {
            return Err(ConfigError::Invalid("normalization must be positive".into()));
        }
        let mix_sum: f64 = self.demand.scope_mix.iter().sum();
        if self.demand.tps < 0.0 {
            return Err(ConfigError::Invalid("demand tps must be non-negative".into()));
        }
        if self.demand.scope_mix.iter().any(|&f| f < 0.0) || (mix_sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid("scope_mix must be non-negative and sum to 1".into()));
        }
        if self.blocks.zone_txs == 0 || self.blocks.region_txs == 0 || self.blocks.prime_txs == 0 {
            return Err(ConfigError::Invalid("block tx limits must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rewards.chi) {
            return Err(ConfigError::Invalid("chi must lie in [0, 1]".into()));
        }
        if self.sizing.enabled {
            if !(0.0..=1.0).contains(&self.sizing.target_fill) || self.sizing.window == 0 {
                return Err(ConfigError::Invalid("sizing target/window invalid".into()));
            }
        }
        if self.peers.zone == 0 {
            return Err(ConfigError::Invalid("zone peer degree must be positive".into()));
        }
        if self.sim.duration_s <= 0.0 {
            return Err(ConfigError::Invalid("duration must be positive".into()));
        }
        if self.attack.enabled && !(0.0 < self.attack.share && self.attack.share < 1.0) {
            return Err(ConfigError::Invalid("attack share must be in (0, 1)".into()));
        }
        if self.sweep.multipliers.is_empty() || self.sweep.multipliers.iter().any(|&m| m == 0) {
            return Err(ConfigError::Invalid("sweep multipliers must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config_toml() -> String {
        r#"
[topology]
regions = 2
zones_per_region = 2
nodes_per_zone = 2
hash_power_per_node = 1.0

[latency]
base_ms = 10.0
per_unit_ms = 50.0
jitter_ms = 5.0

[peers]
zone = 4
region = 2
global = 2

[difficulty]
zone = 20
region = 80
prime = 320
normalization = 1.0
retarget_window = 100
retarget_enabled = true

[demand]
tps = 20.0
scope_mix = [0.8, 0.15, 0.05]
fee_per_scope = [2, 4, 8]
initial_utxos_per_zone = 50
initial_utxo_amount = 1000000
wallet_owners_per_zone = 5

[blocks]
zone_txs = 100
region_txs = 1000
prime_txs = 10000

[rewards]
chi = 0.5
mode = "normalized"
emission_per_prime = 1000000
emission_final_height = 100000
coinbase_maturity = 10

[sizing]
enabled = false
target_fill = 0.8
band = 0.1
window = 8
zones_per_region_cap = 10

[messages]
announce_bytes = 36
envelope_bytes = 40
tx_bytes = 100

[group_selection]
enabled = true
review_mean_s = 30.0
hysteresis = 0.1
latency_weight = 0.0002

[sim]
duration_s = 60.0
body_prune_horizon_s = 120.0
"#
        .to_string()
    }

    #[test]
    fn parses_and_validates() {
        let config = SimConfig::from_toml(&tiny_config_toml()).unwrap();
        assert_eq!(config.node_count(), 8);
        assert_eq!(config.map_size().zone_count(), 4);
        // Round-trips through TOML.
        let again = SimConfig::from_toml(&config.to_toml()).unwrap();
        assert_eq!(again.to_toml(), config.to_toml());
    }

    #[test]
    fn difficulty_ordering_rejected() {
        let bad = tiny_config_toml().replace("region = 80", "region = 10");
        match SimConfig::from_toml(&bad) {
            Err(ConfigError::Invalid(msg)) => assert!(msg.contains("ordering")),
            other => panic!("expected ordering rejection, got {other:?}"),
        }
    }

    #[test]
    fn scope_mix_must_sum_to_one() {
        let bad = tiny_config_toml().replace("[0.8, 0.15, 0.05]", "[0.8, 0.3, 0.05]");
        assert!(SimConfig::from_toml(&bad).is_err());
    }
}
