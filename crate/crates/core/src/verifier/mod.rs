//! Signature checks on captured traffic, spoofing classification, and RSSI
//! trend analysis for telling optically identical nodes apart.

mod classify;
mod trend;

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use ed25519_dalek::{Signature, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::payload::split_trailer;
use crate::codec::{ipv6_to_mac, MacAddress};
use crate::sniffer::HopRecord;

pub use classify::{classify, Classification, SpoofCase, SpoofEvidence, CORROBORATION};
pub use trend::{least_squares_slope, rssi_trend, RssiTrend, TooFewSamples, TREND_DEAD_BAND_DB};

/// Bytes covered by a node signature: source address, destination address, UDP body.
pub fn signed_message(src_ip: &Ipv6Addr, dst_ip: &Ipv6Addr, body: &[u8]) -> Vec<u8> {
    let mut msg = Vec::with_capacity(32 + body.len());
    msg.extend_from_slice(&src_ip.octets());
    msg.extend_from_slice(&dst_ip.octets());
    msg.extend_from_slice(body);
    msg
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum SignatureStatus {
    #[default]
    Unchecked,
    Valid,
    Invalid,
    UnknownKey,
    Unsigned,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("a key for {0} is already registered")]
pub struct KeyConflict(pub MacAddress);

/// Operator-provisioned public keys, one per MAC.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    entries: BTreeMap<MacAddress, VerifyingKey>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a key. An existing different key is only overwritten with `replace`.
    pub fn register(
        &mut self,
        mac: MacAddress,
        key: VerifyingKey,
        replace: bool,
    ) -> Result<(), KeyConflict> {
        match self.entries.get(&mac) {
            Some(existing) if *existing != key && !replace => Err(KeyConflict(mac)),
            _ => {
                self.entries.insert(mac, key);
                Ok(())
            }
        }
    }

    pub fn get(&self, mac: &MacAddress) -> Option<&VerifyingKey> {
        self.entries.get(mac)
    }

    pub fn contains(&self, mac: &MacAddress) -> bool {
        self.entries.contains_key(mac)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks the signature trailer of a UDP payload against the key of the
/// node the source address claims to be.
pub fn verify_message(hop: &HopRecord, payload: &[u8], registry: &KeyRegistry) -> SignatureStatus {
    verify_payload(&hop.src_ip, &hop.dst_ip, payload, registry)
}

pub fn verify_payload(
    src_ip: &Ipv6Addr,
    dst_ip: &Ipv6Addr,
    payload: &[u8],
    registry: &KeyRegistry,
) -> SignatureStatus {
    let (body, Some(sig)) = split_trailer(payload) else {
        return SignatureStatus::Unsigned;
    };
    let Some(key) = ipv6_to_mac(*src_ip).ok().and_then(|mac| registry.get(&mac)) else {
        return SignatureStatus::UnknownKey;
    };
    let sig = Signature::from_bytes(sig);
    match key.verify_strict(&signed_message(src_ip, dst_ip, body), &sig) {
        Ok(()) => SignatureStatus::Valid,
        Err(_) => SignatureStatus::Invalid,
    }
}
