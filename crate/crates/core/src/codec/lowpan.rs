//! Single-profile 6LoWPAN encapsulation of IPv6/UDP datagrams.
//!
//! ```text
//! offset  size   field
//!      0     1   dispatch, always 0x7b
//!      1     1   address modes: bits 0-1 source, bits 2-3 destination
//!      2     1   hop limit
//!      3  0/8/16 source address
//!      .  0/8/16 destination address
//!      .     2   UDP source port (network order)
//!      .     2   UDP destination port (network order)
//!      .     n   UDP payload
//! ```
//!
//! Address modes: `0` full 128-bit address inline, `1` fe80::/64 prefix
//! elided and the 64-bit interface id inline, `2` fully elided because the
//! address is the link-local form of the corresponding MAC header address.
//! The encoder always picks the shortest mode that reproduces the address.

use std::net::Ipv6Addr;

use super::addr::{is_link_local_64, mac_to_ipv6};
use super::{CodecError, MacAddress};

pub const DISPATCH: u8 = 0x7b;
const MODE_INLINE: u8 = 0;
const MODE_IID: u8 = 1;
const MODE_ELIDED: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Datagram6LoWPAN {
    pub src_ip: Ipv6Addr,
    pub dst_ip: Ipv6Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub hop_limit: u8,
    pub payload: Vec<u8>,
}

impl Datagram6LoWPAN {
    fn validate(&self) -> Result<(), CodecError> {
        if self.src_ip.is_unspecified() {
            return Err(CodecError::InvalidDatagram("unspecified source address"));
        }
        if self.src_port == 0 || self.dst_port == 0 {
            return Err(CodecError::InvalidDatagram("zero UDP port"));
        }
        Ok(())
    }
}

fn address_mode(addr: &Ipv6Addr, link: MacAddress) -> u8 {
    if *addr == mac_to_ipv6(link) {
        MODE_ELIDED
    } else if is_link_local_64(addr) {
        MODE_IID
    } else {
        MODE_INLINE
    }
}

fn write_address(buf: &mut Vec<u8>, addr: &Ipv6Addr, mode: u8) {
    match mode {
        MODE_INLINE => buf.extend_from_slice(&addr.octets()),
        MODE_IID => buf.extend_from_slice(&addr.octets()[8..]),
        _ => {}
    }
}

/// Compresses `datagram` for transmission in a frame from `link_src` to `link_dst`.
pub fn encode_datagram(
    datagram: &Datagram6LoWPAN,
    link_src: MacAddress,
    link_dst: MacAddress,
) -> Result<Vec<u8>, CodecError> {
    datagram.validate()?;
    let src_mode = address_mode(&datagram.src_ip, link_src);
    let dst_mode = address_mode(&datagram.dst_ip, link_dst);
    let mut buf = Vec::with_capacity(3 + 32 + 4 + datagram.payload.len());
    buf.push(DISPATCH);
    buf.push(src_mode | (dst_mode << 2));
    buf.push(datagram.hop_limit);
    write_address(&mut buf, &datagram.src_ip, src_mode);
    write_address(&mut buf, &datagram.dst_ip, dst_mode);
    buf.extend_from_slice(&datagram.src_port.to_be_bytes());
    buf.extend_from_slice(&datagram.dst_port.to_be_bytes());
    buf.extend_from_slice(&datagram.payload);
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(CodecError::TruncatedDatagram)?;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or(CodecError::TruncatedDatagram)?;
        self.pos = end;
        Ok(out)
    }

    fn read_address(&mut self, mode: u8, link: MacAddress) -> Result<Ipv6Addr, CodecError> {
        match mode {
            MODE_INLINE => {
                let mut o = [0u8; 16];
                o.copy_from_slice(self.take(16)?);
                Ok(Ipv6Addr::from(o))
            }
            MODE_IID => {
                let mut o = [0u8; 16];
                o[0] = 0xfe;
                o[1] = 0x80;
                o[8..].copy_from_slice(self.take(8)?);
                Ok(Ipv6Addr::from(o))
            }
            MODE_ELIDED => Ok(mac_to_ipv6(link)),
            other => Err(CodecError::ReservedAddressMode(other)),
        }
    }

    fn read_u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }
}

/// Decompresses a frame payload, using the frame's MAC endpoints for elided addresses.
pub fn decode_datagram(
    bytes: &[u8],
    link_src: MacAddress,
    link_dst: MacAddress,
) -> Result<Datagram6LoWPAN, CodecError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let head = cur.take(3)?;
    if head[0] != DISPATCH {
        return Err(CodecError::BadDispatch(head[0]));
    }
    if head[1] & 0xf0 != 0 {
        return Err(CodecError::ReservedAddressMode(head[1]));
    }
    let src_mode = head[1] & 0x03;
    let dst_mode = (head[1] >> 2) & 0x03;
    let hop_limit = head[2];
    let src_ip = cur.read_address(src_mode, link_src)?;
    let dst_ip = cur.read_address(dst_mode, link_dst)?;
    let src_port = cur.read_u16()?;
    let dst_port = cur.read_u16()?;
    let d = Datagram6LoWPAN {
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        hop_limit,
        payload: bytes[cur.pos..].to_vec(),
    };
    d.validate()?;
    Ok(d)
}
