//! Domain types shared by every other module: locations, scopes, block
//! levels, the 272-byte block header, transactions and merkle trees.

mod block;
mod header;
mod merkle;
mod sig;
mod tx;

pub use block::{interlink_root, Block, BundleAudience, ChainTips};
pub use header::{BlockHeader, HEADER_BYTES};
pub use merkle::merkle_root;
pub use sig::{KeyedHashScheme, SignatureScheme};
pub use tx::{compute_scope, OutPoint, Transaction, TxOutput, TX_ACCOUNTING_BYTES};

use serde::{Deserialize, Serialize};

/// A (region, zone) coordinate. Each component is one byte, so declared
/// locations range over 0-255 on both axes regardless of how many regions
/// and zones are currently valid.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Location {
    pub region: u8,
    pub zone: u8,
}

impl Location {
    pub fn new(region: u8, zone: u8) -> Location {
        Location { region, zone }
    }

    /// Folds a declared location into the currently valid range.
    ///
    /// Total and deterministic: transactions formed without knowledge of the
    /// present map size always land on a valid zone.
    pub fn remap(self, map: MapSize) -> Location {
        Location {
            region: (self.region as u16 % map.regions) as u8,
            zone: (self.zone as u16 % map.zones) as u8,
        }
    }
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.region, self.zone)
    }
}

/// The currently valid number of regions and zones, each in 1..=256.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MapSize {
    pub regions: u16,
    pub zones: u16,
}

impl MapSize {
    /// The full declared range; remapping under this map is the identity.
    pub const FULL: MapSize = MapSize { regions: 256, zones: 256 };

    pub fn new(regions: u16, zones: u16) -> Option<MapSize> {
        if (1..=256).contains(&regions) && (1..=256).contains(&zones) {
            Some(MapSize { regions, zones })
        } else {
            None
        }
    }

    pub fn zone_count(&self) -> u32 {
        self.regions as u32 * self.zones as u32
    }

    /// All currently valid zones in row-major order.
    pub fn iter_zones(&self) -> impl Iterator<Item = Location> + '_ {
        let regions = self.regions as u16;
        let zones = self.zones as u16;
        (0..regions).flat_map(move |r| (0..zones).map(move |z| Location::new(r as u8, z as u8)))
    }

    /// Header byte encoding: 1..=255 verbatim, 256 wraps to 0.
    pub fn encode_byte(n: u16) -> u8 {
        (n & 0xff) as u8
    }

    /// Inverse of `encode_byte`: 0 decodes to 256.
    pub fn decode_byte(b: u8) -> u16 {
        if b == 0 {
            256
        } else {
            b as u16
        }
    }
}

/// Transaction scope: the smallest hierarchy level whose block can settle it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Scope {
    Zonal,
    Regional,
    Prime,
}

impl Scope {
    /// The block level required to settle a transaction of this scope.
    pub fn required_level(self) -> BlockLevel {
        match self {
            Scope::Zonal => BlockLevel::Zone,
            Scope::Regional => BlockLevel::Region,
            Scope::Prime => BlockLevel::Prime,
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scope::Zonal => "zonal",
            Scope::Regional => "regional",
            Scope::Prime => "prime",
        };
        f.write_str(s)
    }
}

/// The difficulty level a mined header achieved. A block at level L also
/// satisfies the difficulty of every level below L.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum BlockLevel {
    None,
    Zone,
    Region,
    Prime,
}

impl std::fmt::Display for BlockLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BlockLevel::None => "none",
            BlockLevel::Zone => "zone",
            BlockLevel::Region => "region",
            BlockLevel::Prime => "prime",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scope_and_level_orderings() {
        assert!(Scope::Zonal < Scope::Regional);
        assert!(Scope::Regional < Scope::Prime);
        assert!(BlockLevel::None < BlockLevel::Zone);
        assert!(BlockLevel::Zone < BlockLevel::Region);
        assert!(BlockLevel::Region < BlockLevel::Prime);
    }

    #[test]
    fn remap_is_modulo() {
        let map = MapSize::new(10, 10).unwrap();
        assert_eq!(Location::new(200, 73).remap(map), Location::new(0, 3));
        let id = Location::new(200, 73).remap(MapSize::FULL);
        assert_eq!(id, Location::new(200, 73));
    }

    #[test]
    fn map_byte_encoding_wraps_256() {
        assert_eq!(MapSize::encode_byte(256), 0);
        assert_eq!(MapSize::decode_byte(0), 256);
        for n in 1..=255u16 {
            assert_eq!(MapSize::decode_byte(MapSize::encode_byte(n)), n);
        }
    }
}
