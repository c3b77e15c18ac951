//! 802.15.4 extended addresses and their modified-EUI-64 link-local IPv6 form.

use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CodecError;

/// Universal/local bit of the first EUI-64 octet.
const UL_BIT: u8 = 0x02;

/// An IEEE 802.15.4 extended (EUI-64) address, most significant octet first.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddress(pub [u8; 8]);

impl MacAddress {
    pub const fn new(bytes: [u8; 8]) -> Self {
        MacAddress(bytes)
    }

    pub fn octets(&self) -> [u8; 8] {
        self.0
    }

    /// Link-local IPv6 address carrying this MAC as a modified-EUI-64 interface id.
    pub fn to_link_local(&self) -> Ipv6Addr {
        mac_to_ipv6(*self)
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacAddress({self})")
    }
}

impl FromStr for MacAddress {
    type Err = CodecError;

    /// Accepts the canonical colon-grouped form as well as 16 bare hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        if digits.len() != 16 {
            return Err(CodecError::BadMacText(s.to_string()));
        }
        let mut out = [0u8; 8];
        hex::decode_to_slice(&digits, &mut out)
            .map_err(|_| CodecError::BadMacText(s.to_string()))?;
        Ok(MacAddress(out))
    }
}

impl Serialize for MacAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Builds `fe80::/64` + modified-EUI-64 interface identifier.
pub fn mac_to_ipv6(mac: MacAddress) -> Ipv6Addr {
    let mut bytes = [0u8; 16];
    bytes[0] = 0xfe;
    bytes[1] = 0x80;
    bytes[8..].copy_from_slice(&mac.0);
    bytes[8] ^= UL_BIT;
    Ipv6Addr::from(bytes)
}

/// Recovers the MAC from an address whose interface identifier is a
/// modified EUI-64.
///
/// Multicast, unspecified and loopback addresses carry no device identity.
/// Global unicast addresses are accepted as long as they are not one of
/// those; their lower 64 bits are taken as the interface identifier.
pub fn ipv6_to_mac(addr: Ipv6Addr) -> Result<MacAddress, CodecError> {
    if addr.is_multicast() || addr.is_unspecified() || addr.is_loopback() {
        return Err(CodecError::NonDerivableAddress(addr));
    }
    let octets = addr.octets();
    let mut mac = [0u8; 8];
    mac.copy_from_slice(&octets[8..]);
    mac[0] ^= UL_BIT;
    Ok(MacAddress(mac))
}

/// True when `addr` is in `fe80::/64`, i.e. only the interface id needs to be carried.
pub(crate) fn is_link_local_64(addr: &Ipv6Addr) -> bool {
    let o = addr.octets();
    o[0] == 0xfe && o[1] == 0x80 && o[2..8].iter().all(|b| *b == 0)
}
