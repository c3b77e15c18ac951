//! UDP payload conventions: the echo workload message and the signature trailer.
//!
//! A signed payload is `body || len (u16, big-endian) || signature`, where
//! `len` is the signature length. Unsigned payloads are the bare body.

/// Ed25519 signature length.
pub const SIGNATURE_LEN: usize = 64;
pub const TRAILER_LEN: usize = 2 + SIGNATURE_LEN;

const ECHO_MAGIC: [u8; 2] = *b"EC";
pub const ECHO_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EchoKind {
    Request,
    Reply,
}

/// Application message of the UDP echo workload: a counter the server sends back unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EchoMessage {
    pub kind: EchoKind,
    pub seq: u32,
}

impl EchoMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ECHO_LEN);
        out.extend_from_slice(&ECHO_MAGIC);
        out.push(match self.kind {
            EchoKind::Request => 1,
            EchoKind::Reply => 2,
        });
        out.extend_from_slice(&self.seq.to_be_bytes());
        out
    }

    /// Parses the leading bytes of an (unsigned) body.
    pub fn decode(body: &[u8]) -> Option<EchoMessage> {
        if body.len() != ECHO_LEN || body[..2] != ECHO_MAGIC {
            return None;
        }
        let kind = match body[2] {
            1 => EchoKind::Request,
            2 => EchoKind::Reply,
            _ => return None,
        };
        let seq = u32::from_be_bytes([body[3], body[4], body[5], body[6]]);
        Some(EchoMessage { kind, seq })
    }
}

pub fn append_trailer(body: &[u8], signature: &[u8; SIGNATURE_LEN]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + TRAILER_LEN);
    out.extend_from_slice(body);
    out.extend_from_slice(&(SIGNATURE_LEN as u16).to_be_bytes());
    out.extend_from_slice(signature);
    out
}

/// Splits a UDP payload into its body and optional signature.
pub fn split_trailer(payload: &[u8]) -> (&[u8], Option<&[u8; SIGNATURE_LEN]>) {
    if payload.len() < TRAILER_LEN {
        return (payload, None);
    }
    let at = payload.len() - TRAILER_LEN;
    let len = u16::from_be_bytes([payload[at], payload[at + 1]]) as usize;
    if len != SIGNATURE_LEN {
        return (payload, None);
    }
    let sig: &[u8; SIGNATURE_LEN] = payload[at + 2..].try_into().expect("length checked");
    (&payload[..at], Some(sig))
}
