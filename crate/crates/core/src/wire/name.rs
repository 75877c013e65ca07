use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Longest allowed name component, in bytes.
pub const MAX_COMPONENT_LEN: usize = 255;
/// Most components a name may carry.
pub const MAX_COMPONENTS: usize = 32;
/// Upper bound on the encoded Name TLV, header included.
pub const MAX_NAME_ENCODED_LEN: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("malformed uri: {0}")]
    MalformedUri(String),
    #[error("empty name component")]
    EmptyComponent,
    #[error("name component \"..\" is not allowed")]
    DotDot,
    #[error("component of {0} bytes exceeds {MAX_COMPONENT_LEN}")]
    ComponentTooLong(usize),
    #[error("{0} components exceeds {MAX_COMPONENTS}")]
    TooManyComponents(usize),
    #[error("encoded name of {0} bytes exceeds {MAX_NAME_ENCODED_LEN}")]
    TooLong(usize),
}

/// One opaque name component.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Component(Vec<u8>);

impl Component {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, NameError> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(NameError::EmptyComponent);
        }
        if bytes.len() > MAX_COMPONENT_LEN {
            return Err(NameError::ComponentTooLong(bytes.len()));
        }
        if bytes == b".." {
            return Err(NameError::DotDot);
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// The component as UTF-8 text, if it is valid UTF-8.
    pub fn as_str(&self) -> Option<&str> {
        std::str::from_utf8(&self.0).ok()
    }

    fn write_escaped(&self, out: &mut String) {
        for &b in &self.0 {
            if is_unreserved(b) {
                out.push(b as char);
            } else {
                out.push('%');
                out.push(char::from(HEX[(b >> 4) as usize]));
                out.push(char::from(HEX[(b & 0x0f) as usize]));
            }
        }
    }
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_escaped(&mut s);
        f.write_str(&s)
    }
}

const HEX: &[u8; 16] = b"0123456789ABCDEF";

fn is_unreserved(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~')
}

// pchar minus unreserved and '%': accepted literally when parsing.
fn is_literal_subdelim(b: u8) -> bool {
    matches!(
        b,
        b'!' | b'$' | b'&' | b'\'' | b'(' | b')' | b'*' | b'+' | b',' | b';' | b'=' | b':' | b'@'
    )
}

/// A hierarchical name: an ordered list of components.
///
/// The canonical text form is a URI path where every byte outside
/// `[A-Za-z0-9._~-]` is percent-escaped, so `Name::from_uri(&n.to_uri())`
/// always gives back `n`.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    components: Vec<Component>,
}

impl Name {
    /// The empty (root) name, `/`.
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_components(components: Vec<Component>) -> Result<Self, NameError> {
        if components.len() > MAX_COMPONENTS {
            return Err(NameError::TooManyComponents(components.len()));
        }
        let name = Self { components };
        let len = name.encoded_len();
        if len > MAX_NAME_ENCODED_LEN {
            return Err(NameError::TooLong(len));
        }
        Ok(name)
    }

    pub fn from_uri(uri: &str) -> Result<Self, NameError> {
        let rest = uri
            .strip_prefix('/')
            .ok_or_else(|| NameError::MalformedUri("must begin with '/'".into()))?;
        if rest.is_empty() {
            return Ok(Self::root());
        }
        let mut components = Vec::new();
        for segment in rest.split('/') {
            components.push(Component::new(unescape(segment)?)?);
            if components.len() > MAX_COMPONENTS {
                return Err(NameError::TooManyComponents(components.len()));
            }
        }
        Self::from_components(components)
    }

    pub fn to_uri(&self) -> String {
        if self.components.is_empty() {
            return "/".to_string();
        }
        let mut out = String::new();
        for c in &self.components {
            out.push('/');
            c.write_escaped(&mut out);
        }
        out
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Component> {
        self.components.get(i)
    }

    pub fn last(&self) -> Option<&Component> {
        self.components.last()
    }

    /// Component-wise prefix test; `/` is a prefix of everything.
    pub fn is_prefix_of(&self, other: &Name) -> bool {
        self.len() <= other.len() && self.components[..] == other.components[..self.len()]
    }

    /// The first `n` components (clamped to the name length).
    pub fn prefix(&self, n: usize) -> Name {
        Name {
            components: self.components[..n.min(self.len())].to_vec(),
        }
    }

    /// Appends one component, re-checking the name limits.
    pub fn child(&self, component: impl Into<Vec<u8>>) -> Result<Name, NameError> {
        let mut components = self.components.clone();
        components.push(Component::new(component)?);
        Name::from_components(components)
    }

    /// Size of the Name TLV (type, 2-byte length, nested component TLVs).
    pub fn encoded_len(&self) -> usize {
        3 + self
            .components
            .iter()
            .map(|c| 3 + c.as_bytes().len())
            .sum::<usize>()
    }
}

fn unescape(segment: &str) -> Result<Vec<u8>, NameError> {
    let bytes = segment.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or_else(|| NameError::MalformedUri(format!("truncated escape in {segment:?}")))?;
            let hi = hex_val(hex[0]);
            let lo = hex_val(hex[1]);
            match (hi, lo) {
                (Some(hi), Some(lo)) => out.push(hi << 4 | lo),
                _ => {
                    return Err(NameError::MalformedUri(format!(
                        "bad escape in {segment:?}"
                    )))
                }
            }
            i += 3;
        } else if is_unreserved(b) || is_literal_subdelim(b) {
            out.push(b);
            i += 1;
        } else {
            return Err(NameError::MalformedUri(format!(
                "byte 0x{b:02x} must be percent-escaped"
            )));
        }
    }
    Ok(out)
}

fn hex_val(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_uri())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({})", self.to_uri())
    }
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Name::from_uri(s)
    }
}

impl serde::Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_uri())
    }
}

impl<'de> serde::Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Name::from_uri(&s).map_err(serde::de::Error::custom)
    }
}
