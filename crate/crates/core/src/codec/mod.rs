//! Wire formats: 802.15.4 frames, the 6LoWPAN datagram profile, UDP payload
//! conventions and PCAP files. Everything here is pure and allocation-light.

mod addr;
mod frame;
mod lowpan;
pub mod payload;
mod pcap;

use std::net::Ipv6Addr;

use thiserror::Error;

pub use addr::{ipv6_to_mac, mac_to_ipv6, MacAddress};
pub use frame::{
    decode_frame, encode_frame, fcs, Frame802154, FCS_LEN, FRAME_CONTROL, HEADER_LEN,
    MAX_FRAME_LEN, MAX_PAYLOAD_LEN,
};
pub use lowpan::{decode_datagram, encode_datagram, Datagram6LoWPAN, DISPATCH};
pub use pcap::{
    read_pcap, write_pcap, PcapCapture, PcapRecord, GLOBAL_HEADER_LEN,
    LINKTYPE_IEEE802_15_4_WITHFCS, PCAP_MAGIC,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("frame of {0} bytes is shorter than header and FCS")]
    TruncatedFrame(usize),
    #[error("frame of {0} bytes exceeds the 127-byte PHY limit")]
    FrameTooLong(usize),
    #[error("FCS mismatch: computed {expected:#06x}, frame carries {found:#06x}")]
    BadChecksum { expected: u16, found: u16 },
    #[error("payload of {0} bytes exceeds the frame budget")]
    PayloadTooLarge(usize),
    #[error("unsupported frame control field {0:#06x}")]
    UnsupportedFrameControl(u16),
    #[error("destination PAN {dst:#06x} differs from source PAN {src:#06x}")]
    PanMismatch { dst: u16, src: u16 },
    #[error("datagram truncated")]
    TruncatedDatagram,
    #[error("unknown 6LoWPAN dispatch {0:#04x}")]
    BadDispatch(u8),
    #[error("reserved address mode {0:#04x}")]
    ReservedAddressMode(u8),
    #[error("invalid datagram: {0}")]
    InvalidDatagram(&'static str),
    #[error("{0} has no modified-EUI-64 interface identifier")]
    NonDerivableAddress(Ipv6Addr),
    #[error("malformed MAC address text {0:?}")]
    BadMacText(String),
    #[error("bad PCAP magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported PCAP link type {0}")]
    UnsupportedLinkType(u32),
    #[error("PCAP file truncated")]
    TruncatedPcap,
    #[error("malformed PCAP record {0}")]
    BadRecord(usize),
    #[error("PCAP record {0} goes back in time")]
    NonMonotonicTimestamps(usize),
}
