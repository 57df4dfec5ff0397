//! Discovery beacon: `"SDTN"`, version byte, u16 length-prefixed endpoint
//! id, u16 session port. All integers big-endian.

use oppdtn_core::EndpointId;

pub const MAGIC: &[u8; 4] = b"SDTN";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Beacon {
    pub eid: EndpointId,
    pub port: u16,
}

impl Beacon {
    pub fn encode(&self) -> Vec<u8> {
        let eid = self.eid.as_str().as_bytes();
        let mut out = Vec::with_capacity(9 + eid.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(eid.len() as u16).to_be_bytes());
        out.extend_from_slice(eid);
        out.extend_from_slice(&self.port.to_be_bytes());
        out
    }

    /// `None` for anything that is not exactly one well-formed beacon.
    pub fn decode(bytes: &[u8]) -> Option<Beacon> {
        if bytes.len() < 9 || &bytes[..4] != MAGIC || bytes[4] != VERSION {
            return None;
        }
        let len = u16::from_be_bytes([bytes[5], bytes[6]]) as usize;
        if bytes.len() != 9 + len {
            return None;
        }
        let eid = std::str::from_utf8(&bytes[7..7 + len]).ok()?;
        let eid = EndpointId::parse(eid).ok()?;
        let port = u16::from_be_bytes([bytes[7 + len], bytes[8 + len]]);
        Some(Beacon { eid, port })
    }
}
