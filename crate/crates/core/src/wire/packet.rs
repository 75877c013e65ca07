use bytes::Bytes;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::name::{Component, Name, NameError};

/// Fixed segment payload size; also the Data content limit.
pub const SEGMENT_SIZE: usize = 8192;
pub const DEFAULT_LIFETIME_MS: u32 = 4000;
pub const DEFAULT_HOP_LIMIT: u8 = 32;
pub const DEFAULT_FRESHNESS_MS: u32 = 60_000;

pub(crate) mod tlv {
    pub const INTEREST: u8 = 0x05;
    pub const DATA: u8 = 0x06;
    pub const NAME: u8 = 0x07;
    pub const COMPONENT: u8 = 0x08;
    pub const NONCE: u8 = 0x0A;
    pub const LIFETIME: u8 = 0x0C;
    pub const CONTENT: u8 = 0x15;
    pub const SIGNATURE: u8 = 0x16;
    pub const FINAL_SEGMENT: u8 = 0x1A;
    pub const HOP_LIMIT: u8 = 0x22;
    pub const FRESHNESS: u8 = 0x25;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated packet")]
    Truncated,
    #[error("unexpected TLV type 0x{0:02x}")]
    UnknownCriticalType(u8),
    #[error("TLV length mismatch")]
    LengthMismatch,
    #[error("invalid name: {0}")]
    InvalidName(#[from] NameError),
    #[error("content of {0} bytes exceeds the segment size")]
    ContentTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interest {
    pub name: Name,
    pub nonce: u32,
    pub lifetime_ms: u32,
    pub hop_limit: u8,
}

impl Interest {
    pub fn new(name: Name, nonce: u32) -> Self {
        Self {
            name,
            nonce,
            lifetime_ms: DEFAULT_LIFETIME_MS,
            hop_limit: DEFAULT_HOP_LIMIT,
        }
    }

    pub fn with_lifetime(mut self, lifetime_ms: u32) -> Self {
        self.lifetime_ms = lifetime_ms;
        self
    }

    pub fn with_hop_limit(mut self, hop_limit: u8) -> Self {
        self.hop_limit = hop_limit;
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(self.name.encoded_len() + 18);
        put_name(&mut body, &self.name);
        put_tlv(&mut body, tlv::NONCE, &self.nonce.to_be_bytes());
        put_tlv(&mut body, tlv::LIFETIME, &self.lifetime_ms.to_be_bytes());
        put_tlv(&mut body, tlv::HOP_LIMIT, &[self.hop_limit]);
        wrap(tlv::INTEREST, &body)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut outer = Reader::new(bytes);
        let body = outer.expect(tlv::INTEREST)?;
        outer.finish()?;
        let mut r = Reader::new(body);
        let name = read_name(r.expect(tlv::NAME)?)?;
        let nonce = u32::from_be_bytes(fixed(r.expect(tlv::NONCE)?)?);
        let lifetime_ms = u32::from_be_bytes(fixed(r.expect(tlv::LIFETIME)?)?);
        let [hop_limit] = fixed(r.expect(tlv::HOP_LIMIT)?)?;
        r.finish()?;
        Ok(Self {
            name,
            nonce,
            lifetime_ms,
            hop_limit,
        })
    }
}

/// A named, digest-signed chunk of content.
///
/// The signature is the SHA-256 of the canonical TLV encoding of every field
/// that precedes it (name, optional final segment, freshness, content).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Data {
    pub name: Name,
    pub content: Bytes,
    pub final_segment: Option<u64>,
    pub freshness_ms: u32,
    pub signature: [u8; 32],
}

impl Data {
    /// Unsigned Data with default freshness; call [`Data::signed`] before sending.
    pub fn new(name: Name, content: impl Into<Bytes>) -> Self {
        Self {
            name,
            content: content.into(),
            final_segment: None,
            freshness_ms: DEFAULT_FRESHNESS_MS,
            signature: [0; 32],
        }
    }

    pub fn with_final_segment(mut self, final_segment: u64) -> Self {
        self.final_segment = Some(final_segment);
        self
    }

    pub fn with_freshness(mut self, freshness_ms: u32) -> Self {
        self.freshness_ms = freshness_ms;
        self
    }

    pub fn signed(mut self) -> Self {
        self.signature = self.digest();
        self
    }

    /// Recomputes the digest and compares; never fails loudly.
    pub fn verify(&self) -> bool {
        self.content.len() <= SEGMENT_SIZE && self.digest() == self.signature
    }

    fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.signed_portion()).into()
    }

    fn signed_portion(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(self.name.encoded_len() + self.content.len() + 24);
        put_name(&mut body, &self.name);
        if let Some(fs) = self.final_segment {
            put_tlv(&mut body, tlv::FINAL_SEGMENT, &fs.to_be_bytes());
        }
        put_tlv(&mut body, tlv::FRESHNESS, &self.freshness_ms.to_be_bytes());
        put_tlv(&mut body, tlv::CONTENT, &self.content);
        body
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = self.signed_portion();
        put_tlv(&mut body, tlv::SIGNATURE, &self.signature);
        wrap(tlv::DATA, &body)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut outer = Reader::new(bytes);
        let body = outer.expect(tlv::DATA)?;
        outer.finish()?;
        let mut r = Reader::new(body);
        let name = read_name(r.expect(tlv::NAME)?)?;
        let final_segment = match r.peek_type()? {
            tlv::FINAL_SEGMENT => Some(u64::from_be_bytes(fixed(r.expect(tlv::FINAL_SEGMENT)?)?)),
            _ => None,
        };
        let freshness_ms = u32::from_be_bytes(fixed(r.expect(tlv::FRESHNESS)?)?);
        let content = r.expect(tlv::CONTENT)?;
        if content.len() > SEGMENT_SIZE {
            return Err(WireError::ContentTooLarge(content.len()));
        }
        let signature = fixed(r.expect(tlv::SIGNATURE)?)?;
        r.finish()?;
        Ok(Self {
            name,
            content: Bytes::copy_from_slice(content),
            final_segment,
            freshness_ms,
            signature,
        })
    }
}

/// Either packet type, as it travels on a face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(Data),
}

impl Packet {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Packet::Interest(i) => i.encode(),
            Packet::Data(d) => d.encode(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        match bytes.first() {
            None => Err(WireError::Truncated),
            Some(&tlv::INTEREST) => Interest::decode(bytes).map(Packet::Interest),
            Some(&tlv::DATA) => Data::decode(bytes).map(Packet::Data),
            Some(&other) => Err(WireError::UnknownCriticalType(other)),
        }
    }

    pub fn name(&self) -> &Name {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
        }
    }
}

impl From<Interest> for Packet {
    fn from(i: Interest) -> Self {
        Packet::Interest(i)
    }
}

impl From<Data> for Packet {
    fn from(d: Data) -> Self {
        Packet::Data(d)
    }
}

fn put_tlv(out: &mut Vec<u8>, ty: u8, value: &[u8]) {
    // Callers stay far below u16::MAX: names are capped at 2048 bytes and
    // content at one segment.
    debug_assert!(value.len() <= u16::MAX as usize);
    out.push(ty);
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
}

fn put_name(out: &mut Vec<u8>, name: &Name) {
    let mut value = Vec::with_capacity(name.encoded_len() - 3);
    for c in name.components() {
        put_tlv(&mut value, tlv::COMPONENT, c.as_bytes());
    }
    put_tlv(out, tlv::NAME, &value);
}

fn wrap(ty: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 3);
    put_tlv(&mut out, ty, body);
    out
}

fn read_name(value: &[u8]) -> Result<Name, WireError> {
    let mut r = Reader::new(value);
    let mut components = Vec::new();
    while !r.is_empty() {
        components.push(Component::new(r.expect(tlv::COMPONENT)?)?);
        if components.len() > super::name::MAX_COMPONENTS {
            return Err(NameError::TooManyComponents(components.len()).into());
        }
    }
    Ok(Name::from_components(components)?)
}

fn fixed<const N: usize>(value: &[u8]) -> Result<[u8; N], WireError> {
    value.try_into().map_err(|_| WireError::LengthMismatch)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn peek_type(&self) -> Result<u8, WireError> {
        self.buf.first().copied().ok_or(WireError::Truncated)
    }

    /// Reads one TLV of type `ty` and returns its value.
    fn expect(&mut self, ty: u8) -> Result<&'a [u8], WireError> {
        if self.buf.len() < 3 {
            return Err(WireError::Truncated);
        }
        if self.buf[0] != ty {
            return Err(WireError::UnknownCriticalType(self.buf[0]));
        }
        let len = u16::from_be_bytes([self.buf[1], self.buf[2]]) as usize;
        let rest = &self.buf[3..];
        if rest.len() < len {
            return Err(WireError::Truncated);
        }
        let (value, tail) = rest.split_at(len);
        self.buf = tail;
        Ok(value)
    }

    fn finish(&self) -> Result<(), WireError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(WireError::LengthMismatch)
        }
    }
}
