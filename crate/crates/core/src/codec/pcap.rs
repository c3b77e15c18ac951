//! Classic little-endian PCAP files with link type 195 (802.15.4 with FCS).

use super::CodecError;

pub const PCAP_MAGIC: u32 = 0xa1b2c3d4;
pub const LINKTYPE_IEEE802_15_4_WITHFCS: u32 = 195;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
const VERSION_MAJOR: u16 = 2;
const VERSION_MINOR: u16 = 4;
const SNAPLEN: u32 = 65535;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    /// Capture time in microseconds since the epoch of the capture clock.
    pub ts_us: u64,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapCapture {
    pub link_type: u32,
    pub records: Vec<PcapRecord>,
}

impl Default for PcapCapture {
    fn default() -> Self {
        PcapCapture {
            link_type: LINKTYPE_IEEE802_15_4_WITHFCS,
            records: Vec::new(),
        }
    }
}

impl PcapCapture {
    pub fn push(&mut self, ts_us: u64, data: Vec<u8>) {
        self.records.push(PcapRecord { ts_us, data });
    }
}

pub fn write_pcap(capture: &PcapCapture) -> Result<Vec<u8>, CodecError> {
    if capture.link_type != LINKTYPE_IEEE802_15_4_WITHFCS {
        return Err(CodecError::UnsupportedLinkType(capture.link_type));
    }
    let body: usize = capture
        .records
        .iter()
        .map(|r| RECORD_HEADER_LEN + r.data.len())
        .sum();
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + body);
    out.extend_from_slice(&PCAP_MAGIC.to_le_bytes());
    out.extend_from_slice(&VERSION_MAJOR.to_le_bytes());
    out.extend_from_slice(&VERSION_MINOR.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&SNAPLEN.to_le_bytes());
    out.extend_from_slice(&capture.link_type.to_le_bytes());

    let mut last = 0u64;
    for (i, rec) in capture.records.iter().enumerate() {
        if rec.ts_us < last {
            return Err(CodecError::NonMonotonicTimestamps(i));
        }
        last = rec.ts_us;
        let secs = u32::try_from(rec.ts_us / 1_000_000).map_err(|_| CodecError::BadRecord(i))?;
        let len = u32::try_from(rec.data.len()).map_err(|_| CodecError::BadRecord(i))?;
        out.extend_from_slice(&secs.to_le_bytes());
        out.extend_from_slice(&((rec.ts_us % 1_000_000) as u32).to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&rec.data);
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses a capture. Frame contents are not validated here so that corrupt
/// captures can still be counted downstream.
pub fn read_pcap(bytes: &[u8]) -> Result<PcapCapture, CodecError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CodecError::TruncatedPcap);
    }
    if u32_at(bytes, 0) != PCAP_MAGIC {
        return Err(CodecError::BadMagic(u32_at(bytes, 0)));
    }
    let link_type = u32_at(bytes, 20);
    if link_type != LINKTYPE_IEEE802_15_4_WITHFCS {
        return Err(CodecError::UnsupportedLinkType(link_type));
    }

    let mut records = Vec::new();
    let mut pos = GLOBAL_HEADER_LEN;
    let mut last = 0u64;
    while pos < bytes.len() {
        let i = records.len();
        if bytes.len() - pos < RECORD_HEADER_LEN {
            return Err(CodecError::TruncatedPcap);
        }
        let secs = u32_at(bytes, pos) as u64;
        let usecs = u32_at(bytes, pos + 4) as u64;
        let incl = u32_at(bytes, pos + 8) as usize;
        if usecs >= 1_000_000 {
            return Err(CodecError::BadRecord(i));
        }
        pos += RECORD_HEADER_LEN;
        let data = bytes
            .get(pos..pos + incl)
            .ok_or(CodecError::TruncatedPcap)?;
        pos += incl;
        let ts_us = secs * 1_000_000 + usecs;
        if ts_us < last {
            return Err(CodecError::NonMonotonicTimestamps(i));
        }
        last = ts_us;
        records.push(PcapRecord {
            ts_us,
            data: data.to_vec(),
        });
    }
    Ok(PcapCapture { link_type, records })
}
