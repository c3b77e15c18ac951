use serde::{Deserialize, Serialize};

use super::{Position, RadioEvent};

/// Log-distance path loss: `rssi = p0 - 10 n log10(d / d0)` with `d >= d0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioModel {
    /// Received power at the reference distance, dBm.
    pub p0_dbm: f64,
    /// Reference distance, meters.
    pub d0_m: f64,
    pub exponent: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            p0_dbm: -40.0,
            d0_m: 1.0,
            exponent: 2.5,
        }
    }
}

impl RadioModel {
    pub fn rssi_at_distance(&self, distance: f64) -> f64 {
        let d = distance.max(self.d0_m);
        self.p0_dbm - 10.0 * self.exponent * (d / self.d0_m).log10()
    }

    pub fn rssi_at(&self, listener: Position, event: &RadioEvent) -> f64 {
        self.rssi_at_distance(listener.distance(&event.origin_position))
    }
}
