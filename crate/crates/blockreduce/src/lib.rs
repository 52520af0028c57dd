//! BlockReduce: a three-level hierarchy of tightly coupled, merge-mined
//! blockchains, plus a deterministic discrete-event simulator that measures
//! its bandwidth, settlement and consensus behavior.
//!
//! The hierarchy has a single root chain (PRIME) whose blocks are global
//! consensus, regions below it, and zones at the leaves. Every miner works
//! on all three levels with one hash stream; the difficulty a header
//! achieves decides which chain the block extends. Transactions are located
//! in a zone and carry a scope (zonal, regional, PRIME) that decides which
//! block level settles them.

pub mod hash;
pub mod hierarchy;
pub mod pow;
pub mod primitives;
pub mod ledger;
pub mod netsim;
pub mod rewards;
pub mod sizing;

pub use hash::Hash256;
