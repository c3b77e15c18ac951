//! Duplicate-free transmission storage, the node registry and derived views.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv6Addr;

use ed25519_dalek::VerifyingKey;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_datagram, decode_frame, ipv6_to_mac, MacAddress};
use crate::sniffer::{dedup_digest, Digest, HopRecord, UploadRecord};
use crate::verifier::{
    classify, rssi_trend, verify_payload, Classification, KeyConflict, KeyRegistry, RssiTrend,
    SignatureStatus, SpoofCase, SpoofEvidence,
};

pub const DEFAULT_EPSILON_US: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("unknown node {0}")]
    UnknownNode(MacAddress),
    #[error("node {0} is locked by a duplicate-marker warning")]
    Locked(MacAddress),
    #[error("window start {t0} is after its end {t1}")]
    BadWindow { t0: u64, t1: u64 },
    #[error("timeline step must be positive")]
    BadStep,
    #[error("placement {placement:?} was never scanned for {mac}")]
    UnknownPlacement { mac: MacAddress, placement: String },
    #[error(transparent)]
    KeyConflict(#[from] KeyConflict),
    #[error("record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
}

/// Half-open time range `[t0, t1)` in µs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t0: u64,
    pub t1: u64,
}

impl Window {
    pub const ALL: Window = Window {
        t0: 0,
        t1: u64::MAX,
    };

    pub fn new(t0: u64, t1: u64) -> Result<Self, StoreError> {
        if t0 > t1 {
            return Err(StoreError::BadWindow { t0, t1 });
        }
        Ok(Window { t0, t1 })
    }

    pub fn contains(&self, ts: u64) -> bool {
        self.t0 <= ts && ts < self.t1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub sniffer_id: String,
    pub ts: u64,
    pub rssi: Option<f64>,
}

impl Witness {
    fn key(&self) -> (u64, &str) {
        (self.ts, &self.sniffer_id)
    }
}

/// One radio transmission, stored once however many sniffers saw it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredTransmission {
    pub digest: Digest,
    /// Earliest witness timestamp.
    pub ts: u64,
    pub hop: HopRecord,
    /// Ordered by (ts, sniffer_id).
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Admitted,
    Duplicate,
    /// Undecodable capture; counted, not stored.
    Corrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    DuplicateMarker,
    FailedSignature,
    UnknownKey,
    SpoofClassified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub id: u64,
    pub kind: WarningKind,
    pub subject: MacAddress,
    pub ts: u64,
    pub details: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub case: Option<SpoofCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub mac: MacAddress,
    pub name: String,
    pub location: String,
    /// Hex-encoded Ed25519 public key, when registered.
    pub public_key: Option<String>,
    pub first_seen_visual: Option<u64>,
    pub first_seen_digital: Option<u64>,
    /// Distinct placements at which a marker for this MAC was scanned.
    pub placements: Vec<String>,
    pub locked: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodePatch {
    pub name: Option<String>,
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutcome {
    pub node: NodeRecord,
    pub warning: Option<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Ip,
    Mac,
}

impl std::str::FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ip" => Ok(View::Ip),
            "mac" => Ok(View::Mac),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficEdge {
    pub view: View,
    pub src: String,
    pub dst: String,
    pub count: u64,
    pub t0: u64,
    pub t1: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    #[serde(flatten)]
    pub record: NodeRecord,
    pub sent: u64,
    pub received: u64,
    pub neighbors: Vec<MacAddress>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t0: u64,
    pub t1: u64,
    pub edges: Vec<TrafficEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub ts: u64,
    pub sniffer_id: String,
    pub rssi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssiReport {
    pub mac: MacAddress,
    pub sniffer: Option<String>,
    pub samples: Vec<RssiSample>,
    /// Only for a single sniffer with at least three samples.
    pub trend: Option<RssiTrend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoofReport {
    pub evidence: SpoofEvidence,
    #[serde(flatten)]
    pub classification: Classification,
}

#[derive(Debug, Clone, Default)]
struct NodeEntry {
    name: String,
    location: String,
    first_seen_visual: Option<u64>,
    first_seen_digital: Option<u64>,
    placements: Vec<String>,
    locked: bool,
}

/// In-memory repository. Callers serialize writers; every read sees one consistent state.
#[derive(Debug, Clone)]
pub struct Store {
    epsilon_us: u64,
    transmissions: Vec<StoredTransmission>,
    by_digest: HashMap<Digest, Vec<usize>>,
    nodes: BTreeMap<MacAddress, NodeEntry>,
    keys: KeyRegistry,
    warnings: Vec<Warning>,
    warned: BTreeSet<(WarningKind, MacAddress, Option<SpoofCase>)>,
    corrupt: u64,
}

impl Default for Store {
    fn default() -> Self {
        Store::new(DEFAULT_EPSILON_US)
    }
}

/// Claimed identity of a datagram's originator.
fn claimed_mac(hop: &HopRecord) -> Option<MacAddress> {
    ipv6_to_mac(hop.src_ip).ok()
}

fn is_first_hop(hop: &HopRecord) -> bool {
    claimed_mac(hop) == Some(hop.src_mac)
}

impl Store {
    pub fn new(epsilon_us: u64) -> Self {
        Store {
            epsilon_us,
            transmissions: Vec::new(),
            by_digest: HashMap::new(),
            nodes: BTreeMap::new(),
            keys: KeyRegistry::new(),
            warnings: Vec::new(),
            warned: BTreeSet::new(),
            corrupt: 0,
        }
    }

    pub fn epsilon_us(&self) -> u64 {
        self.epsilon_us
    }

    pub fn corrupt_count(&self) -> u64 {
        self.corrupt
    }

    pub fn transmission_count(&self) -> usize {
        self.transmissions.len()
    }

    pub fn witness_count(&self) -> usize {
        self.transmissions.iter().map(|t| t.witnesses.len()).sum()
    }

    /// Transmissions ordered by (ts, digest), independent of arrival order.
    pub fn transmissions(&self) -> Vec<&StoredTransmission> {
        let mut v: Vec<&StoredTransmission> = self.transmissions.iter().collect();
        v.sort_by_key(|t| (t.ts, t.digest));
        v
    }

    /// Rejects records whose digest does not match their frame bytes.
    pub fn validate(records: &[UploadRecord]) -> Result<(), StoreError> {
        for (index, r) in records.iter().enumerate() {
            if r.frame.is_empty() {
                continue;
            }
            let bytes = hex::decode(&r.frame).map_err(|e| StoreError::BadRecord {
                index,
                reason: format!("frame is not hex: {e}"),
            })?;
            if dedup_digest(&bytes) != r.digest {
                return Err(StoreError::BadRecord {
                    index,
                    reason: "digest does not match frame".into(),
                });
            }
        }
        Ok(())
    }

    /// Admits one sniffer observation. Equal digests within ε of any stored
    /// witness are the same transmission; the observation becomes a witness.
    pub fn admit(&mut self, sniffer_id: &str, rec: &UploadRecord) -> Admission {
        let Some(hop) = &rec.hop else {
            self.corrupt += 1;
            return Admission::Corrupt;
        };
        let witness = Witness {
            sniffer_id: sniffer_id.to_string(),
            ts: rec.ts,
            rssi: rec.rssi,
        };
        let eps = self.epsilon_us;
        let candidates = self
            .by_digest
            .get(&rec.digest)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let hit = candidates.iter().copied().find(|&i| {
            self.transmissions[i]
                .witnesses
                .iter()
                .any(|w| w.ts.abs_diff(rec.ts) < eps)
        });
        if let Some(i) = hit {
            let t = &mut self.transmissions[i];
            if let Err(pos) = t
                .witnesses
                .binary_search_by(|w| w.key().cmp(&witness.key()))
            {
                t.witnesses.insert(pos, witness);
                let first = &t.witnesses[0];
                t.ts = first.ts;
                t.hop.ts = first.ts;
                t.hop.rssi = first.rssi;
            }
            self.touch_digital(hop.src_mac, rec.ts);
            self.touch_digital(hop.dst_mac, rec.ts);
            return Admission::Duplicate;
        }

        let mut hop = hop.clone();
        hop.digest = rec.digest;
        hop.ts = rec.ts;
        hop.rssi = rec.rssi;
        hop.signature_status = self.verify(&rec.frame);
        self.raise_signature_warning(&hop);
        self.touch_digital(hop.src_mac, rec.ts);
        self.touch_digital(hop.dst_mac, rec.ts);
        let idx = self.transmissions.len();
        self.transmissions.push(StoredTransmission {
            digest: rec.digest,
            ts: rec.ts,
            hop,
            witnesses: vec![witness],
        });
        self.by_digest.entry(rec.digest).or_default().push(idx);
        Admission::Admitted
    }

    fn verify(&self, frame_hex: &str) -> SignatureStatus {
        let Ok(bytes) = hex::decode(frame_hex) else {
            return SignatureStatus::Unchecked;
        };
        let Ok(frame) = decode_frame(&bytes) else {
            return SignatureStatus::Unchecked;
        };
        match decode_datagram(&frame.payload, frame.src_mac, frame.dst_mac) {
            Ok(d) => verify_payload(&d.src_ip, &d.dst_ip, &d.payload, &self.keys),
            Err(_) => SignatureStatus::Unchecked,
        }
    }

    fn raise_signature_warning(&mut self, hop: &HopRecord) {
        let kind = match hop.signature_status {
            SignatureStatus::Invalid => WarningKind::FailedSignature,
            SignatureStatus::UnknownKey => WarningKind::UnknownKey,
            _ => return,
        };
        let Some(subject) = claimed_mac(hop) else {
            return;
        };
        let details = match kind {
            WarningKind::FailedSignature => format!(
                "signature from {} does not match its registered key",
                hop.src_ip
            ),
            _ => format!("no public key registered for {}", hop.src_ip),
        };
        self.warn_once(kind, subject, hop.ts, details, None);
    }

    fn warn_once(
        &mut self,
        kind: WarningKind,
        subject: MacAddress,
        ts: u64,
        details: String,
        case: Option<SpoofCase>,
    ) {
        if self.warned.insert((kind, subject, case)) {
            self.push_warning(kind, subject, ts, details, case);
        }
    }

    fn push_warning(
        &mut self,
        kind: WarningKind,
        subject: MacAddress,
        ts: u64,
        details: String,
        case: Option<SpoofCase>,
    ) -> Warning {
        let w = Warning {
            id: self.warnings.len() as u64 + 1,
            kind,
            subject,
            ts,
            details,
            case,
        };
        self.warnings.push(w.clone());
        w
    }

    fn touch_digital(&mut self, mac: MacAddress, ts: u64) {
        let e = self.nodes.entry(mac).or_default();
        e.first_seen_digital = Some(e.first_seen_digital.map_or(ts, |f| f.min(ts)));
    }

    fn record(&self, mac: MacAddress, e: &NodeEntry) -> NodeRecord {
        NodeRecord {
            mac,
            name: e.name.clone(),
            location: e.location.clone(),
            public_key: self.keys.get(&mac).map(|k| hex::encode(k.as_bytes())),
            first_seen_visual: e.first_seen_visual,
            first_seen_digital: e.first_seen_digital,
            placements: e.placements.clone(),
            locked: e.locked,
        }
    }

    pub fn node(&self, mac: MacAddress) -> Result<NodeRecord, StoreError> {
        self.nodes
            .get(&mac)
            .map(|e| self.record(mac, e))
            .ok_or(StoreError::UnknownNode(mac))
    }

    pub fn nodes(&self) -> Vec<NodeRecord> {
        self.nodes.iter().map(|(m, e)| self.record(*m, e)).collect()
    }

    /// Links a scanned marker to its node. A second distinct placement for
    /// the same MAC raises a duplicate-marker warning and locks the node.
    pub fn register_marker_scan(
        &mut self,
        mac: MacAddress,
        placement: &str,
        ts: u64,
    ) -> ScanOutcome {
        let e = self.nodes.entry(mac).or_default();
        e.first_seen_visual.get_or_insert(ts);
        let mut warning = None;
        if !e.placements.iter().any(|p| p == placement) {
            e.placements.push(placement.to_string());
            if e.placements.len() > 1 {
                e.locked = true;
                let details = format!("marker for {mac} scanned at {}", e.placements.join(", "));
                warning =
                    Some(self.push_warning(WarningKind::DuplicateMarker, mac, ts, details, None));
            }
        }
        ScanOutcome {
            node: self.node(mac).expect("just inserted"),
            warning,
        }
    }

    pub fn update_metadata(
        &mut self,
        mac: MacAddress,
        patch: NodePatch,
    ) -> Result<NodeRecord, StoreError> {
        let e = self
            .nodes
            .get_mut(&mac)
            .ok_or(StoreError::UnknownNode(mac))?;
        if e.locked {
            return Err(StoreError::Locked(mac));
        }
        if let Some(name) = patch.name {
            e.name = name;
        }
        if let Some(location) = patch.location {
            e.location = location;
        }
        self.node(mac)
    }

    /// Operator resolution of a duplicate marker: `placement` is the genuine node.
    pub fn resolve(&mut self, mac: MacAddress, placement: &str) -> Result<NodeRecord, StoreError> {
        let e = self
            .nodes
            .get_mut(&mac)
            .ok_or(StoreError::UnknownNode(mac))?;
        if !e.placements.iter().any(|p| p == placement) {
            return Err(StoreError::UnknownPlacement {
                mac,
                placement: placement.to_string(),
            });
        }
        e.placements = vec![placement.to_string()];
        e.locked = false;
        self.node(mac)
    }

    pub fn register_key(
        &mut self,
        mac: MacAddress,
        key: VerifyingKey,
        replace: bool,
    ) -> Result<(), StoreError> {
        Ok(self.keys.register(mac, key, replace)?)
    }

    pub fn keys(&self) -> &KeyRegistry {
        &self.keys
    }

    fn in_window(&self, w: Window) -> impl Iterator<Item = &StoredTransmission> + '_ {
        self.transmissions.iter().filter(move |t| w.contains(t.ts))
    }

    /// Per-hop (MAC) or end-to-end (IP) traffic in a window, sorted by endpoints.
    pub fn edges(&self, view: View, w: Window) -> Vec<TrafficEdge> {
        let make = |(src, dst): (String, String), count: u64| TrafficEdge {
            view,
            src,
            dst,
            count,
            t0: w.t0,
            t1: w.t1,
        };
        match view {
            View::Mac => {
                let mut counts: BTreeMap<(MacAddress, MacAddress), u64> = BTreeMap::new();
                for t in self.in_window(w) {
                    *counts.entry((t.hop.src_mac, t.hop.dst_mac)).or_default() += 1;
                }
                counts
                    .into_iter()
                    .map(|((s, d), c)| make((s.to_string(), d.to_string()), c))
                    .collect()
            }
            View::Ip => {
                let mut digests: BTreeMap<(Ipv6Addr, Ipv6Addr), BTreeSet<Digest>> = BTreeMap::new();
                for t in self.in_window(w).filter(|t| is_first_hop(&t.hop)) {
                    digests
                        .entry((t.hop.src_ip, t.hop.dst_ip))
                        .or_default()
                        .insert(t.digest);
                }
                digests
                    .into_iter()
                    .map(|((s, d), set)| make((s.to_string(), d.to_string()), set.len() as u64))
                    .collect()
            }
        }
    }

    pub fn node_info(&self, mac: MacAddress, w: Window) -> Result<NodeInfo, StoreError> {
        let record = self.node(mac)?;
        let (mut sent, mut received) = (0, 0);
        let mut neighbors = BTreeSet::new();
        for t in self.in_window(w) {
            if t.hop.src_mac == mac {
                sent += 1;
                neighbors.insert(t.hop.dst_mac);
            }
            if t.hop.dst_mac == mac {
                received += 1;
                neighbors.insert(t.hop.src_mac);
            }
        }
        neighbors.remove(&mac);
        Ok(NodeInfo {
            record,
            sent,
            received,
            neighbors: neighbors.into_iter().collect(),
        })
    }

    pub fn warnings(&self, w: Window) -> Vec<Warning> {
        self.warnings
            .iter()
            .filter(|x| w.contains(x.ts))
            .cloned()
            .collect()
    }

    /// Trailing-window snapshots `[origin + (k-1)·step, origin + k·step)` until
    /// the last stored transmission is covered. `origin` defaults to the first.
    pub fn timeline(
        &self,
        view: View,
        step: u64,
        origin: Option<u64>,
    ) -> Result<Vec<Snapshot>, StoreError> {
        if step == 0 {
            return Err(StoreError::BadStep);
        }
        let (Some(min), Some(max)) = (
            self.transmissions.iter().map(|t| t.ts).min(),
            self.transmissions.iter().map(|t| t.ts).max(),
        ) else {
            return Ok(Vec::new());
        };
        let mut t0 = origin.unwrap_or(min);
        let mut out = Vec::new();
        while t0 <= max {
            let w = Window {
                t0,
                t1: t0.saturating_add(step),
            };
            out.push(Snapshot {
                t0: w.t0,
                t1: w.t1,
                edges: self.edges(view, w),
            });
            t0 = w.t1;
            if w.t1 == u64::MAX {
                break;
            }
        }
        Ok(out)
    }

    /// Signal samples of frames transmitted by `mac`, time-ordered.
    pub fn rssi(&self, mac: MacAddress, sniffer: Option<&str>, w: Window) -> RssiReport {
        let mut samples: Vec<RssiSample> = self
            .in_window(w)
            .filter(|t| t.hop.src_mac == mac)
            .flat_map(|t| &t.witnesses)
            .filter(|x| sniffer.is_none_or(|s| x.sniffer_id == s))
            .filter_map(|x| {
                x.rssi.map(|rssi| RssiSample {
                    ts: x.ts,
                    sniffer_id: x.sniffer_id.clone(),
                    rssi,
                })
            })
            .collect();
        samples.sort_by(|a, b| (a.ts, &a.sniffer_id).cmp(&(b.ts, &b.sniffer_id)));
        let trend = sniffer
            .and_then(|_| rssi_trend(&samples.iter().map(|s| s.rssi).collect::<Vec<_>>()).ok());
        RssiReport {
            mac,
            sniffer: sniffer.map(str::to_string),
            samples,
            trend,
        }
    }

    pub fn evidence(&self, mac: MacAddress) -> SpoofEvidence {
        let scanned = |m: &MacAddress| self.nodes.get(m).is_some_and(|e| !e.placements.is_empty());
        let mut ev = SpoofEvidence {
            subject: mac,
            marker_placements: self
                .nodes
                .get(&mac)
                .map_or(0, |e| e.placements.len() as u64),
            key_registered: self.keys.contains(&mac),
            ..Default::default()
        };
        for t in &self.transmissions {
            let claimed = claimed_mac(&t.hop);
            let status = t.hop.signature_status;
            if claimed == Some(mac) {
                match status {
                    SignatureStatus::Valid => ev.valid_sig_count += 1,
                    SignatureStatus::Invalid => ev.invalid_sig_count += 1,
                    SignatureStatus::UnknownKey => ev.unknown_key_count += 1,
                    _ => {}
                }
            }
            if status == SignatureStatus::UnknownKey && claimed.is_some_and(|c| !scanned(&c)) {
                ev.orphan_unknown_key_count += 1;
            }
        }
        ev
    }

    /// Classifies one identity; a spoofing finding is recorded as a warning once.
    pub fn spoof(&mut self, mac: MacAddress) -> Result<SpoofReport, StoreError> {
        if !self.nodes.contains_key(&mac) {
            return Err(StoreError::UnknownNode(mac));
        }
        let evidence = self.evidence(mac);
        let classification = classify(&evidence);
        if classification.case != SpoofCase::NoFinding {
            let ts = self.transmissions.iter().map(|t| t.ts).max().unwrap_or(0);
            let details = format!("{:?}: {}", classification.case, classification.action);
            self.warn_once(
                WarningKind::SpoofClassified,
                mac,
                ts,
                details,
                Some(classification.case),
            );
        }
        Ok(SpoofReport {
            evidence,
            classification,
        })
    }

    /// Runs [`Store::spoof`] for every known node.
    pub fn classify_all(&mut self) -> Vec<SpoofReport> {
        let macs: Vec<MacAddress> = self.nodes.keys().copied().collect();
        macs.into_iter()
            .filter_map(|m| self.spoof(m).ok())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::mac_to_ipv6;

    const A: MacAddress = MacAddress([0, 0x12, 0x4b, 0, 0, 0, 0, 0xa]);
    const B: MacAddress = MacAddress([0, 0x12, 0x4b, 0, 0, 0, 0, 0xb]);
    const S: MacAddress = MacAddress([0, 0x12, 0x4b, 0, 0, 0, 0, 0x1]);

    fn rec(
        tag: u8,
        ts: u64,
        src: MacAddress,
        dst: MacAddress,
        ip_src: MacAddress,
        ip_dst: MacAddress,
    ) -> UploadRecord {
        let digest = Digest([tag; 16]);
        UploadRecord {
            frame: String::new(),
            digest,
            ts,
            rssi: Some(-50.0),
            hop: Some(HopRecord {
                src_mac: src,
                dst_mac: dst,
                src_ip: mac_to_ipv6(ip_src),
                dst_ip: mac_to_ipv6(ip_dst),
                seq_payload: Some(tag as u32),
                digest,
                ts,
                rssi: Some(-50.0),
                signature_status: SignatureStatus::Unchecked,
            }),
        }
    }

    fn direct(tag: u8, ts: u64) -> UploadRecord {
        rec(tag, ts, A, S, A, S)
    }

    #[test]
    fn fresh_digest_is_admitted() {
        let mut s = Store::default();
        assert_eq!(s.admit("s1", &direct(1, 1_000_000)), Admission::Admitted);
        assert_eq!(s.transmission_count(), 1);
    }

    #[test]
    fn within_epsilon_is_duplicate_and_kept_as_witness() {
        let mut s = Store::new(5_000);
        s.admit("s1", &direct(1, 1_000_000));
        assert_eq!(s.admit("s2", &direct(1, 1_002_000)), Admission::Duplicate);
        assert_eq!(s.transmission_count(), 1);
        assert_eq!(s.witness_count(), 2);
    }

    #[test]
    fn beyond_epsilon_is_a_retransmission() {
        let mut s = Store::new(5_000);
        s.admit("s1", &direct(1, 1_000_000));
        assert_eq!(s.admit("s2", &direct(1, 1_050_000)), Admission::Admitted);
        assert_eq!(s.transmission_count(), 2);
    }

    #[test]
    fn epsilon_boundary() {
        let mut s = Store::new(5_000);
        s.admit("s1", &direct(1, 1_000_000));
        assert_eq!(s.admit("s2", &direct(1, 1_004_999)), Admission::Duplicate);
        let mut s = Store::new(5_000);
        s.admit("s1", &direct(1, 1_000_000));
        assert_eq!(s.admit("s2", &direct(1, 1_005_000)), Admission::Admitted);
    }

    #[test]
    fn chained_witnesses_merge() {
        // t, t+4ms, t+8ms with ε = 5ms: the third is within ε of the second
        let mut s = Store::new(5_000);
        s.admit("a", &direct(1, 1_000_000));
        s.admit("b", &direct(1, 1_004_000));
        assert_eq!(s.admit("c", &direct(1, 1_008_000)), Admission::Duplicate);
        assert_eq!(s.transmission_count(), 1);
    }

    #[test]
    fn earliest_witness_wins_regardless_of_order() {
        let mut s = Store::default();
        s.admit("late", &direct(1, 1_001_000));
        s.admit("early", &direct(1, 999_000));
        let t = s.transmissions()[0];
        assert_eq!(t.ts, 999_000);
        assert_eq!(t.hop.ts, 999_000);
        assert_eq!(t.witnesses[0].sniffer_id, "early");
    }

    #[test]
    fn replay_is_idempotent() {
        let mut s = Store::default();
        let log = [
            ("s1", direct(1, 10)),
            ("s2", direct(1, 20)),
            ("s1", direct(2, 5_000_000)),
        ];
        for (id, r) in &log {
            s.admit(id, r);
        }
        let before = s.transmissions().into_iter().cloned().collect::<Vec<_>>();
        for (id, r) in &log {
            assert_eq!(s.admit(id, r), Admission::Duplicate);
        }
        assert_eq!(
            s.transmissions().into_iter().cloned().collect::<Vec<_>>(),
            before
        );
    }

    #[test]
    fn corrupt_records_are_counted_not_stored() {
        let mut s = Store::default();
        let mut r = direct(1, 10);
        r.hop = None;
        assert_eq!(s.admit("s1", &r), Admission::Corrupt);
        assert_eq!((s.transmission_count(), s.corrupt_count()), (0, 1));
    }

    #[test]
    fn digest_must_match_frame() {
        let mut r = direct(1, 10);
        r.frame = "00ff".into();
        assert!(matches!(
            Store::validate(&[r]),
            Err(StoreError::BadRecord { index: 0, .. })
        ));
        let mut r = direct(1, 10);
        r.frame = "zz".into();
        assert!(Store::validate(&[r]).is_err());
    }

    #[test]
    fn ip_view_counts_first_hops_only() {
        let mut s = Store::default();
        // A -> B -> S carrying A's datagram, then S -> B -> A carrying the reply
        s.admit("x", &rec(1, 100, A, B, A, S));
        s.admit("x", &rec(2, 200, B, S, A, S));
        s.admit("x", &rec(3, 300, S, B, S, A));
        s.admit("x", &rec(4, 400, B, A, S, A));
        let ip = s.edges(View::Ip, Window::ALL);
        assert_eq!(ip.len(), 2);
        assert!(ip.iter().all(|e| e.count == 1));
        let mac = s.edges(View::Mac, Window::ALL);
        assert_eq!(mac.len(), 4);
        assert_eq!(mac.iter().map(|e| e.count).sum::<u64>(), 4);
    }

    #[test]
    fn windows_are_half_open() {
        let mut s = Store::default();
        s.admit("x", &direct(1, 100));
        s.admit("x", &direct(2, 200));
        assert_eq!(
            s.edges(View::Mac, Window::new(100, 200).unwrap())[0].count,
            1
        );
        assert_eq!(
            s.edges(View::Mac, Window::new(100, 201).unwrap())[0].count,
            2
        );
        assert!(s
            .edges(View::Mac, Window::new(150, 150).unwrap())
            .is_empty());
        assert_eq!(
            Window::new(2, 1),
            Err(StoreError::BadWindow { t0: 2, t1: 1 })
        );
    }

    #[test]
    fn node_records_from_traffic_and_markers() {
        let mut s = Store::default();
        assert_eq!(s.node(A), Err(StoreError::UnknownNode(A)));
        s.admit("x", &rec(1, 100, A, B, A, S));
        s.admit("x", &rec(2, 200, B, S, A, S));
        assert_eq!(s.node(A).unwrap().first_seen_digital, Some(100));
        let info = s.node_info(B, Window::ALL).unwrap();
        assert_eq!((info.sent, info.received), (1, 1));
        assert_eq!(
            info.neighbors,
            vec![S, A]
                .into_iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect::<Vec<_>>()
        );
        let out = s.register_marker_scan(S, "rack", 5);
        assert_eq!(out.node.first_seen_visual, Some(5));
        assert!(out.warning.is_none());
    }

    #[test]
    fn duplicate_marker_locks_until_resolved() {
        let mut s = Store::default();
        s.register_marker_scan(A, "shelf", 1);
        let again = s.register_marker_scan(A, "shelf", 2);
        assert!(again.warning.is_none());
        let patch = NodePatch {
            name: Some("n1".into()),
            location: None,
        };
        assert_eq!(s.update_metadata(A, patch.clone()).unwrap().name, "n1");

        let dup = s.register_marker_scan(A, "window", 3);
        assert_eq!(
            dup.warning.as_ref().unwrap().kind,
            WarningKind::DuplicateMarker
        );
        assert!(dup.node.locked);
        assert_eq!(
            s.update_metadata(A, patch.clone()),
            Err(StoreError::Locked(A))
        );
        assert!(matches!(
            s.resolve(A, "attic"),
            Err(StoreError::UnknownPlacement { .. })
        ));
        s.resolve(A, "shelf").unwrap();
        assert!(s.update_metadata(A, patch).is_ok());
        assert_eq!(s.warnings(Window::ALL).len(), 1);
    }

    #[test]
    fn timeline_snapshots() {
        let mut s = Store::default();
        assert!(s.timeline(View::Mac, 10, None).unwrap().is_empty());
        s.admit("x", &direct(1, 1_000));
        s.admit("x", &direct(2, 25_000));
        let tl = s.timeline(View::Mac, 10_000, Some(0)).unwrap();
        assert_eq!(tl.len(), 3);
        assert_eq!(tl[0].edges[0].count, 1);
        assert!(tl[1].edges.is_empty());
        assert_eq!(tl[2].edges[0].count, 1);
        let whole = s.timeline(View::Mac, 1_000_000, None).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(
            whole[0].edges[0].count,
            s.edges(View::Mac, Window::ALL)[0].count
        );
        assert_eq!(s.timeline(View::Mac, 0, None), Err(StoreError::BadStep));
        assert_eq!(tl, s.timeline(View::Mac, 10_000, Some(0)).unwrap());
    }

    #[test]
    fn rssi_samples_and_trend() {
        let mut s = Store::default();
        for (i, rssi) in [-80.0, -75.0, -70.0].into_iter().enumerate() {
            let mut r = direct(i as u8, 1_000_000 * (i as u64 + 1));
            r.rssi = Some(rssi);
            s.admit("hand", &r);
        }
        let rep = s.rssi(A, Some("hand"), Window::ALL);
        assert_eq!(rep.samples.len(), 3);
        assert_eq!(rep.trend, Some(RssiTrend::Increasing));
        assert!(s.rssi(A, Some("other"), Window::ALL).samples.is_empty());
        assert_eq!(s.rssi(A, None, Window::ALL).trend, None);
    }

    #[test]
    fn spoof_report_for_unknown_node_fails() {
        let mut s = Store::default();
        assert!(matches!(s.spoof(A), Err(StoreError::UnknownNode(_))));
    }
}
