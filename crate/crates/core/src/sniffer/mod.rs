//! Sniffer Unit pipeline: capture, timestamp on the local clock, digest,
//! dissect into hop records, and upload batches to the backend.

mod pipeline;

use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use md5::{Digest as _, Md5};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::payload::{split_trailer, EchoMessage};
use crate::codec::{
    decode_datagram, decode_frame, CodecError, Datagram6LoWPAN, Frame802154, MacAddress,
};
use crate::verifier::SignatureStatus;

pub use pipeline::{
    BatchPolicy, FlushError, Outbox, PipelineStats, SnifferPipeline, Uplink, UploadAck,
    UploadBatch, UploadRecord,
};

/// MD5 of a captured frame, used as the duplicate-detection index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; 16]);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl FromStr for Digest {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// MD5 over the full captured frame, MAC header through FCS.
pub fn dedup_digest(frame_bytes: &[u8]) -> Digest {
    Digest(Md5::digest(frame_bytes).into())
}

/// A frame as handed over by the radio, timestamped with true time.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCapture {
    pub time_us: u64,
    pub bytes: Vec<u8>,
    pub rssi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedPacket {
    pub sniffer_id: String,
    /// Microseconds on the sniffer's clock.
    pub ts: u64,
    pub rssi: Option<f64>,
    pub bytes: Vec<u8>,
    pub digest: Digest,
    pub frame: Option<Frame802154>,
    pub decoded: Result<Datagram6LoWPAN, CodecError>,
}

impl CapturedPacket {
    pub fn is_corrupt(&self) -> bool {
        self.decoded.is_err()
    }
}

/// One MAC-layer transmission and the end-to-end datagram it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    pub src_ip: Ipv6Addr,
    pub dst_ip: Ipv6Addr,
    pub seq_payload: Option<u32>,
    pub digest: Digest,
    pub ts: u64,
    pub rssi: Option<f64>,
    #[serde(default)]
    pub signature_status: SignatureStatus,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopError {
    #[error("capture could not be decoded: {0}")]
    NotDecodable(CodecError),
    #[error("frame addressed to its own sender {0}")]
    SelfLink(MacAddress),
}

/// Passive capture stage of one Sniffer Unit.
#[derive(Debug, Clone)]
pub struct Sniffer {
    pub id: String,
    /// Offset of the local clock from backend time.
    pub skew_us: i64,
}

impl Sniffer {
    pub fn new(id: impl Into<String>, skew_us: i64) -> Self {
        Sniffer {
            id: id.into(),
            skew_us,
        }
    }

    /// Decodes and digests a frame. Corrupt frames are kept with their error.
    pub fn capture(&self, raw: RawCapture) -> CapturedPacket {
        let ts = (raw.time_us as i64).saturating_add(self.skew_us).max(1) as u64;
        let digest = dedup_digest(&raw.bytes);
        let frame = decode_frame(&raw.bytes);
        let decoded = match &frame {
            Ok(f) => decode_datagram(&f.payload, f.src_mac, f.dst_mac),
            Err(e) => Err(e.clone()),
        };
        CapturedPacket {
            sniffer_id: self.id.clone(),
            ts,
            rssi: raw.rssi,
            bytes: raw.bytes,
            digest,
            frame: frame.ok(),
            decoded,
        }
    }
}

/// Dissects a captured packet into its hop. Stateless per packet.
pub fn extract_hop(p: &CapturedPacket) -> Result<HopRecord, HopError> {
    let datagram = p
        .decoded
        .as_ref()
        .map_err(|e| HopError::NotDecodable(e.clone()))?;
    let frame = p.frame.as_ref().expect("decoded packets carry their frame");
    if frame.src_mac == frame.dst_mac {
        return Err(HopError::SelfLink(frame.src_mac));
    }
    let (body, _) = split_trailer(&datagram.payload);
    Ok(HopRecord {
        src_mac: frame.src_mac,
        dst_mac: frame.dst_mac,
        src_ip: datagram.src_ip,
        dst_ip: datagram.dst_ip,
        seq_payload: EchoMessage::decode(body).map(|m| m.seq),
        digest: p.digest,
        ts: p.ts,
        rssi: p.rssi,
        signature_status: SignatureStatus::Unchecked,
    })
}

/// Wire record for a captured packet: the hop when decodable, the raw bytes always.
pub fn upload_record(p: &CapturedPacket) -> UploadRecord {
    UploadRecord {
        frame: hex::encode(&p.bytes),
        digest: p.digest,
        ts: p.ts,
        rssi: p.rssi,
        hop: extract_hop(p).ok(),
    }
}
