//! Seeded discrete-event simulation of the protocol at desk scale: nodes,
//! latency topology, two-tier gossip (per-transaction inside a zone,
//! header-first across groups), bandwidth accounting, miner group
//! selection, and attack scenarios.

pub mod config;
mod engine;
pub mod metrics;
pub mod rng;
mod scenarios;

pub use config::{ConfigError, SimConfig};
pub use engine::{group_score, AttackRace, Engine};
pub use metrics::{MsgClass, NodeTraffic, SimMetrics};
pub use scenarios::{
    bandwidth_sweep, run, run_attack, spam_fuzz, AttackReport, SpamReport, SweepRow, SweepTable,
};
