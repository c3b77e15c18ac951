//! Fixed-layout IEEE 802.15.4 data frames.
//!
//! Every frame uses 64-bit addressing on both ends and carries both PAN ids,
//! so the MAC header has a constant size. Multi-byte fields are little-endian
//! as on air; extended addresses are therefore transmitted octet-reversed.
//!
//! ```text
//! offset  size  field
//!      0     2  frame control, always 0xcc01
//!      2     1  sequence number
//!      3     2  destination PAN id
//!      5     8  destination extended address
//!     13     2  source PAN id (equal to destination PAN id)
//!     15     8  source extended address
//!     23     n  payload, n <= 102
//!   23+n     2  FCS, CRC-16/KERMIT over bytes [0, 23+n)
//! ```

use crc::{Crc, CRC_16_KERMIT};

use super::{CodecError, MacAddress};

/// Data frame, no security, no PAN id compression, extended dst/src addressing.
pub const FRAME_CONTROL: u16 = 0xcc01;
pub const HEADER_LEN: usize = 23;
pub const FCS_LEN: usize = 2;
/// Largest PSDU allowed by the PHY.
pub const MAX_FRAME_LEN: usize = 127;
pub const MAX_PAYLOAD_LEN: usize = MAX_FRAME_LEN - HEADER_LEN - FCS_LEN;

const FCS: Crc<u16> = Crc::<u16>::new(&CRC_16_KERMIT);

pub fn fcs(bytes: &[u8]) -> u16 {
    FCS.checksum(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame802154 {
    pub seq_no: u8,
    pub src_mac: MacAddress,
    pub dst_mac: MacAddress,
    pub pan_id: u16,
    pub payload: Vec<u8>,
    pub fcs: u16,
}

impl Frame802154 {
    /// Builds a frame and fills in its FCS.
    pub fn new(
        seq_no: u8,
        src_mac: MacAddress,
        dst_mac: MacAddress,
        pan_id: u16,
        payload: Vec<u8>,
    ) -> Result<Self, CodecError> {
        if payload.len() > MAX_PAYLOAD_LEN {
            return Err(CodecError::PayloadTooLarge(payload.len()));
        }
        let mut frame = Frame802154 {
            seq_no,
            src_mac,
            dst_mac,
            pan_id,
            payload,
            fcs: 0,
        };
        let mut buf = Vec::with_capacity(HEADER_LEN + frame.payload.len());
        frame.write_unchecked(&mut buf);
        frame.fcs = fcs(&buf);
        Ok(frame)
    }

    fn write_unchecked(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&FRAME_CONTROL.to_le_bytes());
        buf.push(self.seq_no);
        buf.extend_from_slice(&self.pan_id.to_le_bytes());
        buf.extend(self.dst_mac.0.iter().rev());
        buf.extend_from_slice(&self.pan_id.to_le_bytes());
        buf.extend(self.src_mac.0.iter().rev());
        buf.extend_from_slice(&self.payload);
    }
}

/// Serializes a frame, recomputing the FCS from the other fields.
pub fn encode_frame(frame: &Frame802154) -> Result<Vec<u8>, CodecError> {
    if frame.payload.len() > MAX_PAYLOAD_LEN {
        return Err(CodecError::PayloadTooLarge(frame.payload.len()));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + frame.payload.len() + FCS_LEN);
    frame.write_unchecked(&mut buf);
    let crc = fcs(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

fn read_ext_addr(bytes: &[u8]) -> MacAddress {
    let mut out = [0u8; 8];
    for (dst, src) in out.iter_mut().zip(bytes.iter().rev()) {
        *dst = *src;
    }
    MacAddress(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame802154, CodecError> {
    if bytes.len() < HEADER_LEN + FCS_LEN {
        return Err(CodecError::TruncatedFrame(bytes.len()));
    }
    if bytes.len() > MAX_FRAME_LEN {
        return Err(CodecError::FrameTooLong(bytes.len()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - FCS_LEN);
    let found = u16::from_le_bytes([trailer[0], trailer[1]]);
    let expected = fcs(body);
    if found != expected {
        return Err(CodecError::BadChecksum { expected, found });
    }

    let fc = u16::from_le_bytes([body[0], body[1]]);
    if fc != FRAME_CONTROL {
        return Err(CodecError::UnsupportedFrameControl(fc));
    }
    let dst_pan = u16::from_le_bytes([body[3], body[4]]);
    let src_pan = u16::from_le_bytes([body[13], body[14]]);
    if dst_pan != src_pan {
        return Err(CodecError::PanMismatch {
            dst: dst_pan,
            src: src_pan,
        });
    }
    Ok(Frame802154 {
        seq_no: body[2],
        pan_id: dst_pan,
        dst_mac: read_ext_addr(&body[5..13]),
        src_mac: read_ext_addr(&body[15..23]),
        payload: body[HEADER_LEN..].to_vec(),
        fcs: found,
    })
}
