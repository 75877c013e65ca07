//! Names, the two packet types, their TLV encoding and digest signatures.
//!
//! Layout (1-byte type, 2-byte big-endian length, value; field order fixed,
//! every type critical):
//!
//! ```text
//! 0x05 Interest { 0x07 Name { 0x08 Component* }, 0x0A Nonce(4), 0x0C LifetimeMs(4), 0x22 HopLimit(1) }
//! 0x06 Data     { 0x07 Name { 0x08 Component* }, [0x1A FinalSegment(8)], 0x25 FreshnessMs(4),
//!                 0x15 Content, 0x16 Signature(32) }
//! ```

mod name;
mod packet;

pub use name::{
    Component, Name, NameError, MAX_COMPONENTS, MAX_COMPONENT_LEN, MAX_NAME_ENCODED_LEN,
};
pub use packet::{
    Data, Interest, Packet, WireError, DEFAULT_FRESHNESS_MS, DEFAULT_HOP_LIMIT,
    DEFAULT_LIFETIME_MS, SEGMENT_SIZE,
};

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn component() -> impl Strategy<Value = Component> {
        proptest::collection::vec(any::<u8>(), 1..=24)
            .prop_filter_map("dotdot", |b| Component::new(b).ok())
    }

    fn name() -> impl Strategy<Value = Name> {
        proptest::collection::vec(component(), 0..=8)
            .prop_map(|c| Name::from_components(c).unwrap())
    }

    proptest! {
        #[test]
        fn uri_round_trip(n in name()) {
            prop_assert_eq!(Name::from_uri(&n.to_uri()).unwrap(), n);
        }

        #[test]
        fn prefix_order_laws(a in name(), b in name(), c in name()) {
            prop_assert!(a.is_prefix_of(&a));
            if a.len() == b.len() && a.is_prefix_of(&b) && b.is_prefix_of(&a) {
                prop_assert_eq!(&a, &b);
            }
            if a.is_prefix_of(&b) && b.is_prefix_of(&c) {
                prop_assert!(a.is_prefix_of(&c));
            }
            // every truncation of b is a prefix of b
            let k = a.len().min(b.len());
            prop_assert!(b.prefix(k).is_prefix_of(&b));
        }

        #[test]
        fn decoding_accepts_only_canonical_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..96)) {
            if let Ok(p) = Packet::decode(&bytes) {
                prop_assert_eq!(p.encode(), bytes);
            }
        }
    }
}
