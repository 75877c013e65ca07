//! Shared fixtures for the criterion benches.

use icn_dl::wire::Name;

/// `/bench/<a>/<b>/.../seg=<i>` with `depth` components before the segment.
pub fn segment_name(depth: usize, i: u64) -> Name {
    let mut name: Name = "/bench".parse().expect("valid uri");
    for d in 1..depth {
        name = name.child(format!("c{}", (i as usize + d) % 7)).expect("short name");
    }
    name.child(format!("seg={i}")).expect("short name")
}

/// `count` distinct prefixes of one to four components.
pub fn prefixes(count: usize) -> Vec<Name> {
    (0..count)
        .map(|i| {
            let mut name: Name = "/bench".parse().expect("valid uri");
            for d in 0..(i % 4) {
                name = name.child(format!("p{}", (i >> (d * 3)) % 8)).expect("short name");
            }
            name.child(format!("x{i}")).expect("short name")
        })
        .collect()
}
