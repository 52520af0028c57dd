//! Dynamic network sizing: the fill-target controller that grows or shrinks
//! the valid region/zone counts, and the deterministic remap that folds
//! declared locations into the current range.
//!
//! Declared locations always span the full 0-255 range on both axes;
//! remapping keeps every pre-formed transaction valid across resizes.

use serde::{Deserialize, Serialize};

use crate::primitives::{Location, MapSize};

/// Controller parameters. The controller moves one step per PRIME block at
/// most, and only after observing a full window of epochs on one side of
/// the deadband.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SizingParams {
    /// Desired mean zone-block fill, e.g. 0.8.
    pub target_fill: f64,
    /// Half-width of the deadband around the target, e.g. 0.1.
    pub band: f64,
    /// Number of PRIME epochs a deviation must persist before a step.
    pub window: usize,
    /// Zones per region before further growth adds regions instead.
    pub zones_per_region_cap: u16,
}

impl Default for SizingParams {
    fn default() -> Self {
        SizingParams { target_fill: 0.8, band: 0.1, window: 8, zones_per_region_cap: 10 }
    }
}

/// Outcome of a controller review at a PRIME block.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ResizeStep {
    None,
    Grew,
    Shrank,
}

/// The valid map plus the utilization window driving resize decisions.
#[derive(Clone, Debug)]
pub struct MapState {
    pub map: MapSize,
    pub params: SizingParams,
    window: Vec<f64>,
}

impl MapState {
    pub fn new(map: MapSize, params: SizingParams) -> MapState {
        MapState { map, params, window: Vec::new() }
    }

    /// Folds a declared location into the currently valid range. Pure and
    /// total: any (region, zone) byte pair lands on a valid zone.
    pub fn remap(&self, declared: Location) -> Location {
        declared.remap(self.map)
    }

    /// Records one PRIME epoch's mean zone-block fill and, once a full
    /// window agrees, moves the map one step. The window clears after every
    /// step, so oscillation is bounded to one step per `window` epochs.
    pub fn observe_epoch_fill(&mut self, mean_fill: f64) -> ResizeStep {
        self.window.push(mean_fill);
        if self.window.len() < self.params.window {
            return ResizeStep::None;
        }
        if self.window.len() > self.params.window {
            self.window.remove(0);
        }
        let mean = self.window.iter().sum::<f64>() / self.window.len() as f64;
        let step = if mean > self.params.target_fill + self.params.band {
            self.grow()
        } else if mean < self.params.target_fill - self.params.band {
            self.shrink()
        } else {
            ResizeStep::None
        };
        if step != ResizeStep::None {
            self.window.clear();
        }
        step
    }

    /// Grows zones first, then regions once the per-region cap is reached.
    fn grow(&mut self) -> ResizeStep {
        let cap = self.params.zones_per_region_cap.min(256);
        if self.map.zones < cap {
            self.map.zones += 1;
            ResizeStep::Grew
        } else if self.map.regions < 256 {
            self.map.regions += 1;
            ResizeStep::Grew
        } else {
            ResizeStep::None
        }
    }

    /// Exact inverse of the growth path.
    fn shrink(&mut self) -> ResizeStep {
        if self.map.regions > 1 {
            self.map.regions -= 1;
            ResizeStep::Shrank
        } else if self.map.zones > 1 {
            self.map.zones -= 1;
            ResizeStep::Shrank
        } else {
            ResizeStep::None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(regions: u16, zones: u16) -> MapState {
        MapState::new(MapSize::new(regions, zones).unwrap(), SizingParams::default())
    }

    #[test]
    fn remap_examples() {
        let s = state(10, 10);
        assert_eq!(s.remap(Location::new(200, 73)), Location::new(0, 3));
        let full = state(256, 256);
        assert_eq!(full.remap(Location::new(200, 73)), Location::new(200, 73));
    }

    #[test]
    fn remap_total_and_in_range_exhaustive() {
        let maps = [(1u16, 1u16), (10, 10), (3, 7), (255, 2), (256, 256), (1, 256)];
        for (r, z) in maps {
            let s = state(r, z);
            for region in 0..=255u8 {
                for zone in 0..=255u8 {
                    let eff = s.remap(Location::new(region, zone));
                    assert!((eff.region as u16) < r && (eff.zone as u16) < z);
                }
            }
        }
    }

    #[test]
    fn fill_at_target_never_moves() {
        let mut s = state(2, 4);
        for _ in 0..40 {
            assert_eq!(s.observe_epoch_fill(0.8), ResizeStep::None);
        }
        assert_eq!(s.map, MapSize::new(2, 4).unwrap());
    }

    #[test]
    fn sustained_full_blocks_grow_within_window() {
        let mut s = state(1, 1);
        let mut grew_at = None;
        for epoch in 1..=s.params.window {
            if s.observe_epoch_fill(1.0) == ResizeStep::Grew {
                grew_at = Some(epoch);
                break;
            }
        }
        assert_eq!(grew_at, Some(s.params.window));
        assert_eq!(s.map, MapSize::new(1, 2).unwrap());
    }

    #[test]
    fn floor_holds_at_one_by_one() {
        let mut s = state(1, 1);
        for _ in 0..32 {
            assert_eq!(s.observe_epoch_fill(0.2), ResizeStep::None);
        }
        assert_eq!(s.map, MapSize::new(1, 1).unwrap());
    }

    #[test]
    fn growth_path_fills_zones_then_regions() {
        let mut s = state(1, 1);
        for _ in 0..(9 + 2) * s.params.window {
            s.observe_epoch_fill(1.0);
        }
        // Nine zone steps reach the cap, then regions start growing.
        assert_eq!(s.map, MapSize::new(3, 10).unwrap());
    }

    #[test]
    fn shrink_reverses_growth() {
        let mut s = state(3, 10);
        for _ in 0..3 * s.params.window {
            s.observe_epoch_fill(0.1);
        }
        assert_eq!(s.map, MapSize::new(1, 9).unwrap());
    }

    #[test]
    fn straddling_fills_step_at_most_once_per_window() {
        let mut s = state(1, 1);
        let mut steps = 0;
        for i in 0..8 * s.params.window {
            let fill = if i % 2 == 0 { 1.0 } else { 0.95 };
            if s.observe_epoch_fill(fill) != ResizeStep::None {
                steps += 1;
            }
        }
        assert!(steps <= 8, "stepped {steps} times in 8 windows");
    }
}
