//! Session frames: u32 big-endian length (of type byte + body), u8 type,
//! body. The same codec is used for store snapshots.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use oppdtn_core::routing::RoutingMeta;
use oppdtn_core::{Bundle, BundleId, EndpointId, RouterKind};
use thiserror::Error;

pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

pub const HELLO: u8 = 0x01;
pub const ROUTING_META: u8 = 0x02;
pub const SUMMARY: u8 = 0x03;
pub const REQUEST: u8 = 0x04;
pub const BUNDLE: u8 = 0x05;
pub const BYE: u8 = 0x06;

/// One stored bundle as advertised in a summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offer {
    pub id: BundleId,
    pub dest: EndpointId,
    pub ttl_s: u64,
}

impl Offer {
    pub fn expiry_ms(&self) -> u64 {
        self.id.creation_ms.saturating_add(self.ttl_s.saturating_mul(1000))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Summary {
    pub offers: Vec<Offer>,
    pub delivered: Vec<BundleId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Hello(EndpointId),
    Meta(RoutingMeta<EndpointId>),
    Summary(Summary),
    Request(Vec<BundleId>),
    Bundle(Bundle),
    Bye,
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame length {0} out of range")]
    BadLength(u32),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownType(u8),
    #[error("malformed {frame} body: {reason}")]
    Malformed { frame: &'static str, reason: &'static str },
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        match self {
            Frame::Hello(_) => HELLO,
            Frame::Meta(_) => ROUTING_META,
            Frame::Summary(_) => SUMMARY,
            Frame::Request(_) => REQUEST,
            Frame::Bundle(_) => BUNDLE,
            Frame::Bye => BYE,
        }
    }

    pub fn name(&self) -> &'static str {
        type_name(self.type_byte())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Frame::Hello(eid) => put_eid(&mut body, eid),
            Frame::Meta(meta) => put_meta(&mut body, meta),
            Frame::Summary(s) => {
                put_u32(&mut body, s.offers.len() as u32);
                for o in &s.offers {
                    put_id(&mut body, &o.id);
                    put_eid(&mut body, &o.dest);
                    body.extend_from_slice(&o.ttl_s.to_be_bytes());
                }
                put_u32(&mut body, s.delivered.len() as u32);
                for id in &s.delivered {
                    put_id(&mut body, id);
                }
            }
            Frame::Request(ids) => {
                put_u32(&mut body, ids.len() as u32);
                for id in ids {
                    put_id(&mut body, id);
                }
            }
            Frame::Bundle(b) => {
                put_eid(&mut body, &b.id.source);
                put_eid(&mut body, &b.dest);
                body.extend_from_slice(&b.id.creation_ms.to_be_bytes());
                put_u32(&mut body, b.id.seq);
                body.extend_from_slice(&b.ttl_s.to_be_bytes());
                let payload = b.payload.as_deref().unwrap_or(&[]);
                put_u32(&mut body, payload.len() as u32);
                body.extend_from_slice(payload);
            }
            Frame::Bye => {}
        }
        let mut out = Vec::with_capacity(5 + body.len());
        put_u32(&mut out, body.len() as u32 + 1);
        out.push(self.type_byte());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(ty: u8, body: &[u8]) -> Result<Frame, WireError> {
        let name = type_name(ty);
        if name == "?" {
            return Err(WireError::UnknownType(ty));
        }
        let mut c = Cursor { buf: body, frame: name };
        let frame = match ty {
            HELLO => Frame::Hello(c.eid()?),
            ROUTING_META => Frame::Meta(c.meta()?),
            SUMMARY => {
                let n = c.count(8)?;
                let mut offers = Vec::with_capacity(n);
                for _ in 0..n {
                    offers.push(Offer {
                        id: c.id()?,
                        dest: c.eid()?,
                        ttl_s: c.u64()?,
                    });
                }
                let n = c.count(8)?;
                let mut delivered = Vec::with_capacity(n);
                for _ in 0..n {
                    delivered.push(c.id()?);
                }
                Frame::Summary(Summary { offers, delivered })
            }
            REQUEST => {
                let n = c.count(8)?;
                let mut ids = Vec::with_capacity(n);
                for _ in 0..n {
                    ids.push(c.id()?);
                }
                Frame::Request(ids)
            }
            BUNDLE => {
                let source = c.eid()?;
                let dest = c.eid()?;
                let creation_ms = c.u64()?;
                let seq = c.u32()?;
                let ttl_s = c.u64()?;
                let len = c.u32()? as usize;
                if len != c.buf.len() {
                    return Err(c.bad("payload length does not match body"));
                }
                if len == 0 {
                    return Err(c.bad("empty payload"));
                }
                let payload = c.take(len)?.to_vec();
                if ttl_s == 0 {
                    return Err(c.bad("zero ttl"));
                }
                if ttl_s
                    .checked_mul(1000)
                    .and_then(|t| t.checked_add(creation_ms))
                    .is_none()
                {
                    return Err(c.bad("expiry overflows"));
                }
                let id = BundleId {
                    source,
                    creation_ms,
                    seq,
                };
                Frame::Bundle(Bundle::with_payload(id, dest, ttl_s, payload))
            }
            _ => Frame::Bye,
        };
        if !c.buf.is_empty() {
            return Err(c.bad("trailing bytes"));
        }
        Ok(frame)
    }
}

fn type_name(ty: u8) -> &'static str {
    match ty {
        HELLO => "HELLO",
        ROUTING_META => "ROUTING_META",
        SUMMARY => "SUMMARY",
        REQUEST => "REQUEST",
        BUNDLE => "BUNDLE",
        BYE => "BYE",
        _ => "?",
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())
}

/// Reads one frame. A clean end of stream before the length prefix is
/// reported as `UnexpectedEof`.
pub fn read_frame(r: &mut impl Read) -> Result<Frame, WireError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(WireError::BadLength(len));
    }
    let mut ty = [0u8; 1];
    r.read_exact(&mut ty)?;
    if type_name(ty[0]) == "?" {
        return Err(WireError::UnknownType(ty[0]));
    }
    let mut body = vec![0u8; len as usize - 1];
    r.read_exact(&mut body)?;
    Frame::decode(ty[0], &body)
}

/// Splits a byte buffer holding back-to-back frames.
pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Frame>, WireError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        out.push(read_frame(&mut bytes)?);
    }
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_eid(out: &mut Vec<u8>, eid: &EndpointId) {
    let b = eid.as_str().as_bytes();
    out.extend_from_slice(&(b.len() as u16).to_be_bytes());
    out.extend_from_slice(b);
}

pub(crate) fn put_id(out: &mut Vec<u8>, id: &BundleId) {
    put_eid(out, &id.source);
    out.extend_from_slice(&id.creation_ms.to_be_bytes());
    put_u32(out, id.seq);
}

fn put_table(out: &mut Vec<u8>, table: &BTreeMap<EndpointId, f64>) {
    put_u32(out, table.len() as u32);
    for (eid, v) in table {
        put_eid(out, eid);
        out.extend_from_slice(&v.to_be_bytes());
    }
}

fn put_meta(out: &mut Vec<u8>, meta: &RoutingMeta<EndpointId>) {
    out.push(meta.kind().wire_tag());
    match meta {
        RoutingMeta::Dlife { importance, weights } => {
            out.extend_from_slice(&importance.to_be_bytes());
            put_table(out, weights);
        }
        RoutingMeta::Prophet { predictability } => put_table(out, predictability),
        RoutingMeta::Epidemic => {}
    }
}

pub(crate) struct Cursor<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) frame: &'static str,
}

impl<'a> Cursor<'a> {
    fn bad(&self, reason: &'static str) -> WireError {
        WireError::Malformed {
            frame: self.frame,
            reason,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(self.bad("truncated"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        let v = f64::from_bits(self.u64()?);
        if !v.is_finite() || v < 0.0 {
            return Err(self.bad("value must be finite and non-negative"));
        }
        Ok(v)
    }

    /// A count whose items take at least `min_item` bytes each.
    fn count(&mut self, min_item: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() {
            return Err(self.bad("count exceeds body"));
        }
        Ok(n)
    }

    pub(crate) fn string(&mut self) -> Result<String, WireError> {
        let len = u16::from_be_bytes(self.take(2)?.try_into().unwrap()) as usize;
        let raw = self.take(len)?;
        std::str::from_utf8(raw)
            .map(str::to_string)
            .map_err(|_| self.bad("string is not UTF-8"))
    }

    fn eid(&mut self) -> Result<EndpointId, WireError> {
        let text = self.string()?;
        EndpointId::parse(&text).map_err(|_| self.bad("malformed endpoint"))
    }

    pub(crate) fn id(&mut self) -> Result<BundleId, WireError> {
        Ok(BundleId {
            source: self.eid()?,
            creation_ms: self.u64()?,
            seq: self.u32()?,
        })
    }

    fn table(&mut self) -> Result<BTreeMap<EndpointId, f64>, WireError> {
        let n = self.count(10)?;
        let mut out = BTreeMap::new();
        for _ in 0..n {
            let eid = self.eid()?;
            let v = self.f64()?;
            out.insert(eid, v);
        }
        Ok(out)
    }

    fn meta(&mut self) -> Result<RoutingMeta<EndpointId>, WireError> {
        let tag = self.take(1)?[0];
        match RouterKind::from_wire_tag(tag) {
            Some(RouterKind::Dlife) => {
                let importance = self.f64()?;
                Ok(RoutingMeta::Dlife {
                    importance,
                    weights: self.table()?,
                })
            }
            Some(RouterKind::Prophet) => {
                let predictability = self.table()?;
                if predictability.values().any(|p| *p >= 1.0) {
                    return Err(self.bad("predictability must be below 1"));
                }
                Ok(RoutingMeta::Prophet { predictability })
            }
            Some(RouterKind::Epidemic) => Ok(RoutingMeta::Epidemic),
            None => Err(self.bad("unknown router kind")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eid(name: &str) -> EndpointId {
        EndpointId::parse(&format!("dtn://{name}")).unwrap()
    }

    fn id(src: &str, ms: u64, seq: u32) -> BundleId {
        BundleId {
            source: eid(src),
            creation_ms: ms,
            seq,
        }
    }

    #[test]
    fn bundle_frame_layout() {
        let b = Bundle::with_payload(id("a", 5, 7), eid("b"), 60, vec![0xAA, 0xBB]);
        let bytes = Frame::Bundle(b.clone()).encode();
        let mut expected = vec![0, 0, 0, 45, BUNDLE];
        expected.extend_from_slice(&[0, 7]);
        expected.extend_from_slice(b"dtn://a");
        expected.extend_from_slice(&[0, 7]);
        expected.extend_from_slice(b"dtn://b");
        expected.extend_from_slice(&5u64.to_be_bytes());
        expected.extend_from_slice(&7u32.to_be_bytes());
        expected.extend_from_slice(&60u64.to_be_bytes());
        expected.extend_from_slice(&[0, 0, 0, 2, 0xAA, 0xBB]);
        assert_eq!(bytes, expected);
        assert_eq!(decode_all(&bytes).unwrap(), vec![Frame::Bundle(b)]);
    }

    #[test]
    fn meta_layout() {
        let meta = RoutingMeta::Dlife {
            importance: 0.5,
            weights: [(eid("x"), 2.0)].into_iter().collect(),
        };
        let bytes = Frame::Meta(meta).encode();
        let mut expected = vec![0, 0, 0, 31, ROUTING_META, 0x01];
        expected.extend_from_slice(&0.5f64.to_be_bytes());
        expected.extend_from_slice(&[0, 0, 0, 1, 0, 7]);
        expected.extend_from_slice(b"dtn://x");
        expected.extend_from_slice(&2.0f64.to_be_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(Frame::Meta(RoutingMeta::Epidemic).encode(), vec![0, 0, 0, 2, ROUTING_META, 0x03]);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(matches!(read_frame(&mut &[0u8, 0, 0, 1, 0x09][..]), Err(WireError::UnknownType(9))));
        let huge = (MAX_FRAME_LEN + 1).to_be_bytes();
        assert!(matches!(read_frame(&mut &huge[..]), Err(WireError::BadLength(_))));
        let full = Frame::Bundle(Bundle::with_payload(id("a", 1, 1), eid("b"), 1, vec![1; 10])).encode();
        assert!(matches!(read_frame(&mut &full[..full.len() - 1]), Err(WireError::Io(_))));
        let mut wrong_len = full.clone();
        let n = wrong_len.len();
        wrong_len[n - 11] = 9;
        assert!(read_frame(&mut &wrong_len[..]).is_err());
        assert!(matches!(
            read_frame(&mut &[0u8, 0, 0, 2, BYE, 0][..]),
            Err(WireError::Malformed { reason: "trailing bytes", .. })
        ));
    }

    fn frames() -> impl Strategy<Value = Frame> {
        let name = "[a-z0-9]{1,8}";
        let bid = (name, any::<u64>(), any::<u32>()).prop_map(|(s, ms, q)| id(&s, ms, q));
        let table = proptest::collection::btree_map(name.prop_map(|n| eid(&n)), 0.0f64..0.999, 0..5);
        prop_oneof![
            name.prop_map(|n| Frame::Hello(eid(&n))),
            Just(Frame::Bye),
            Just(Frame::Meta(RoutingMeta::Epidemic)),
            table.clone().prop_map(|t| Frame::Meta(RoutingMeta::Prophet { predictability: t })),
            (0.0f64..10.0, table).prop_map(|(i, t)| Frame::Meta(RoutingMeta::Dlife { importance: i, weights: t })),
            proptest::collection::vec(bid.clone(), 0..5).prop_map(Frame::Request),
            (
                proptest::collection::vec((bid.clone(), name, any::<u32>()), 0..5),
                proptest::collection::vec(bid.clone(), 0..5)
            )
                .prop_map(|(o, d)| Frame::Summary(Summary {
                    offers: o.into_iter().map(|(id, n, t)| Offer { id, dest: eid(&n), ttl_s: t as u64 }).collect(),
                    delivered: d,
                })),
            (bid, name, 1..u32::MAX, proptest::collection::vec(any::<u8>(), 1..64)).prop_map(|(mut id, n, ttl, p)| {
                id.creation_ms %= 1 << 40;
                Frame::Bundle(Bundle::with_payload(id, eid(&n), ttl as u64, p))
            }),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_identity(fs in proptest::collection::vec(frames(), 0..6)) {
            let bytes: Vec<u8> = fs.iter().flat_map(|f| f.encode()).collect();
            prop_assert_eq!(decode_all(&bytes).unwrap(), fs);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_all(&bytes);
        }

        #[test]
        fn truncation_is_an_error(f in frames(), cut in any::<prop::sample::Index>()) {
            let bytes = f.encode();
            let at = cut.index(bytes.len());
            prop_assert!(read_frame(&mut &bytes[..at]).is_err());
        }
    }
}
