//! Decision table over per-identity evidence for the five spoofing scenarios.

use serde::{Deserialize, Serialize};

use crate::codec::MacAddress;

/// Observations needed before a scenario is named.
pub const CORROBORATION: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpoofCase {
    /// Marker and address copied; the impostor transmits and fails signature checks.
    CopiedIdChatty,
    /// Marker and address copied; the impostor stays silent.
    CopiedIdSilent,
    /// Marker copied; the impostor transmits under a new, unregistered address.
    CopiedMarkerNewAddr,
    /// Forged marker; the impostor transmits under a copied address.
    ForgedMarkerCopiedAddr,
    /// Both marker and address forged.
    ForgedBoth,
    NoFinding,
}

impl SpoofCase {
    pub fn recommended_action(&self) -> &'static str {
        match self {
            SpoofCase::CopiedIdChatty => {
                "duplicate marker with failing signatures: walk between both placements and follow the RSSI trend of valid traffic to find the legitimate node"
            }
            SpoofCase::CopiedIdSilent => {
                "duplicate marker, one placement silent: walk between both placements; signal strength of this identity peaks at the legitimate node"
            }
            SpoofCase::CopiedMarkerNewAddr => {
                "duplicate marker while an unregistered address transmits: the marker copy belongs to the node sending under the unknown address"
            }
            SpoofCase::ForgedMarkerCopiedAddr => {
                "signatures fail on a known address: look for an optically identical node whose marker shows no traffic and compare signal strength"
            }
            SpoofCase::ForgedBoth => {
                "marker of an unregistered identity while traffic fails key lookup: this node is the likely source of the failing traffic"
            }
            SpoofCase::NoFinding => "none",
        }
    }
}

/// Everything known about one identity, plus network-wide context.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpoofEvidence {
    pub subject: MacAddress,
    /// Distinct physical placements at which a marker embedding `subject` was scanned.
    pub marker_placements: u64,
    pub key_registered: bool,
    pub valid_sig_count: u64,
    pub invalid_sig_count: u64,
    pub unknown_key_count: u64,
    /// Unknown-key transmissions, anywhere, from addresses no marker was scanned for.
    pub orphan_unknown_key_count: u64,
}

impl SpoofEvidence {
    pub fn duplicate_marker(&self) -> bool {
        self.marker_placements > 1
    }

    pub fn scanned(&self) -> bool {
        self.marker_placements > 0
    }

    fn signed_observations(&self) -> u64 {
        self.valid_sig_count + self.invalid_sig_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub subject: MacAddress,
    pub case: SpoofCase,
    pub action: String,
}

pub fn classify(ev: &SpoofEvidence) -> Classification {
    let case = decide(ev);
    Classification {
        subject: ev.subject,
        case,
        action: case.recommended_action().to_string(),
    }
}

fn decide(ev: &SpoofEvidence) -> SpoofCase {
    let corroborated = ev.signed_observations() >= CORROBORATION;
    if ev.duplicate_marker() {
        if ev.invalid_sig_count > 0 && corroborated {
            return SpoofCase::CopiedIdChatty;
        }
        if ev.orphan_unknown_key_count >= CORROBORATION {
            return SpoofCase::CopiedMarkerNewAddr;
        }
        if ev.valid_sig_count >= CORROBORATION {
            return SpoofCase::CopiedIdSilent;
        }
        return SpoofCase::NoFinding;
    }
    if ev.marker_placements == 1 && ev.key_registered && ev.invalid_sig_count > 0 && corroborated {
        return SpoofCase::ForgedMarkerCopiedAddr;
    }
    if ev.scanned()
        && !ev.key_registered
        && ev.valid_sig_count == 0
        && ev.orphan_unknown_key_count >= CORROBORATION
    {
        return SpoofCase::ForgedBoth;
    }
    SpoofCase::NoFinding
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SpoofEvidence {
        SpoofEvidence {
            marker_placements: 1,
            key_registered: true,
            valid_sig_count: 12,
            ..Default::default()
        }
    }

    #[test]
    fn clean_node_has_no_finding() {
        assert_eq!(classify(&base()).case, SpoofCase::NoFinding);
        assert_eq!(
            classify(&SpoofEvidence::default()).case,
            SpoofCase::NoFinding
        );
    }

    #[test]
    fn duplicate_marker_all_valid_is_silent_copy() {
        let ev = SpoofEvidence {
            marker_placements: 2,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::CopiedIdSilent);
        assert!(
            classify(&ev).action.contains("RSSI")
                || classify(&ev).action.contains("signal strength")
        );
    }

    #[test]
    fn duplicate_marker_with_invalid_is_chatty_copy() {
        let ev = SpoofEvidence {
            marker_placements: 2,
            invalid_sig_count: 4,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::CopiedIdChatty);
    }

    #[test]
    fn duplicate_marker_with_orphans_is_new_address() {
        let ev = SpoofEvidence {
            marker_placements: 2,
            orphan_unknown_key_count: 5,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::CopiedMarkerNewAddr);
    }

    #[test]
    fn unique_marker_with_invalid_is_forged_marker() {
        let ev = SpoofEvidence {
            invalid_sig_count: 3,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::ForgedMarkerCopiedAddr);
    }

    #[test]
    fn unregistered_marker_with_orphans_is_forged_both() {
        let ev = SpoofEvidence {
            marker_placements: 1,
            key_registered: false,
            valid_sig_count: 0,
            orphan_unknown_key_count: 6,
            ..Default::default()
        };
        assert_eq!(classify(&ev).case, SpoofCase::ForgedBoth);
    }

    #[test]
    fn transients_are_damped() {
        // one invalid out of two observations is not yet a classification
        let ev = SpoofEvidence {
            valid_sig_count: 1,
            invalid_sig_count: 1,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::NoFinding);
        let ev = SpoofEvidence {
            marker_placements: 2,
            valid_sig_count: 2,
            ..base()
        };
        assert_eq!(classify(&ev).case, SpoofCase::NoFinding);
    }

    #[test]
    fn deterministic() {
        let ev = SpoofEvidence {
            marker_placements: 2,
            invalid_sig_count: 4,
            ..base()
        };
        assert_eq!(classify(&ev), classify(&ev.clone()));
    }
}
