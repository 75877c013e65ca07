//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::fs;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, UdpSocket};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use icn_dl::consumer::{fetch_object, fetch_via};
use icn_dl::fileserver::ObjectMeta;
use icn_dl::forwarder::Forwarder;
use icn_dl::forwarder::FaceRemote;
use icn_dl::harness::{load_topology, ClusterHandle, NodeRole, Topology};
use icn_dl::loader::{compute_range, run_loader, LocalFetcher, Manifest};
use icn_dl::tables::Fib;
use icn_dl::transport::Link;
use icn_dl::wire::{Data, Interest, Name, Packet, SEGMENT_SIZE};
use icn_dl::{FaceId, FetchError, FetchOptions};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn n(uri: &str) -> Name {
    uri.parse().unwrap()
}

fn random_name(rng: &mut StdRng, alphabet: Option<&[&str]>) -> Name {
    let mut name = Name::root();
    for _ in 0..rng.random_range(1..=8) {
        let comp: Vec<u8> = match alphabet {
            Some(a) => a[rng.random_range(0..a.len())].as_bytes().to_vec(),
            None => (0..rng.random_range(1..=20)).map(|_| rng.random()).collect(),
        };
        if let Ok(next) = name.child(comp) {
            name = next;
        }
    }
    name
}

fn random_packet(rng: &mut StdRng) -> Packet {
    let name = random_name(rng, None);
    if rng.random_bool(0.5) {
        Packet::Interest(
            Interest::new(name, rng.random())
                .with_lifetime(rng.random())
                .with_hop_limit(rng.random_range(1..=255)),
        )
    } else {
        let len = rng.random_range(0..=SEGMENT_SIZE);
        let content: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let mut d = Data::new(name, content).with_freshness(rng.random());
        if rng.random_bool(0.5) {
            d = d.with_final_segment(rng.random());
        }
        Packet::Data(d.signed())
    }
}

fn c1_wire_round_trip() -> Outcome {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(1);
    let mut samples = Vec::new();
    for i in 0..10_000 {
        let p = random_packet(&mut rng);
        let bytes = p.encode();
        let back = Packet::decode(&bytes).map_err(|e| format!("packet {i}: {e}"))?;
        ensure!(back == p, "packet {i} changed in a round trip");
        if let Packet::Data(d) = &back {
            ensure!(d.verify(), "packet {i} does not verify after decoding");
        }
        if i % 100 == 0 {
            samples.push(bytes);
        }
    }
    let mut accepted = 0;
    let fuzz = panic::catch_unwind(AssertUnwindSafe(|| {
        for i in 0..100_000 {
            let bytes: Vec<u8> = if i % 2 == 0 {
                (0..rng.random_range(0..=300)).map(|_| rng.random()).collect()
            } else {
                // Valid frames with random damage exercise the deeper paths.
                let mut b = samples[i % samples.len()].clone();
                for _ in 0..rng.random_range(1..=4) {
                    let k = rng.random_range(0..b.len());
                    b[k] = rng.random();
                }
                if rng.random_bool(0.3) {
                    b.truncate(rng.random_range(0..b.len()));
                }
                b
            };
            let got = Packet::decode(&bytes);
            let _ = Interest::decode(&bytes);
            let _ = Data::decode(&bytes);
            if let Ok(p) = got {
                accepted += 1;
                assert_eq!(p.encode(), bytes, "accepted a non-canonical encoding");
            }
        }
    }));
    ensure!(fuzz.is_ok(), "a decoder panicked on fuzz input");
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "10000 round trips, 100000 fuzz inputs ({accepted} canonical), {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_lpm_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(2);
    let alphabet = ["a", "b", "c", "d"];
    let mut hits = 0;
    for fib_no in 0..1000 {
        let mut fib = Fib::new();
        let mut prefixes: Vec<Name> = Vec::new();
        for _ in 0..rng.random_range(0..=64) {
            let depth = rng.random_range(0..=4);
            let p = random_name(&mut rng, Some(&alphabet)).prefix(depth);
            fib.insert(&p, FaceId(rng.random_range(1..=8)), rng.random_range(0..4));
            if !prefixes.contains(&p) {
                prefixes.push(p);
            }
        }
        ensure!(fib.len() == prefixes.len(), "fib {fib_no}: {} entries, expected {}", fib.len(), prefixes.len());
        for _ in 0..100 {
            let name = random_name(&mut rng, Some(&alphabet));
            let oracle = prefixes
                .iter()
                .filter(|p| p.is_prefix_of(&name))
                .max_by_key(|p| p.len());
            let got = fib.longest_prefix_match(&name).map(|e| &e.prefix);
            ensure!(got == oracle, "fib {fib_no}: {name} matched {got:?}, oracle {oracle:?}");
            hits += oracle.is_some() as u32;
        }
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("100000 lookups ({hits} matched) agree with the oracle, {:.2}s", elapsed.as_secs_f64()))
}

fn c3_partition_law() -> Outcome {
    let t0 = Instant::now();
    for total in 0..=200u64 {
        for count in 1..=16u64 {
            let mut owner = vec![0u64; total as usize + 1];
            for id in 1..=count {
                let r = compute_range(id, count, total).map_err(|e| e.to_string())?;
                if r.is_empty() {
                    continue;
                }
                ensure!(r.end <= total, "N={total} P={count}: replica {id} ends past N");
                for k in r.indices() {
                    ensure!(owner[k as usize] == 0, "N={total} P={count}: entry {k} owned twice");
                    owner[k as usize] = id;
                }
            }
            ensure!(owner[1..].iter().all(|&o| o != 0), "N={total} P={count}: not covering");
        }
    }
    for id in 1..=10 {
        let r = compute_range(id, 10, 100).map_err(|e| e.to_string())?;
        ensure!(
            (r.start, r.end) == ((id - 1) * 10 + 1, id * 10),
            "replica {id} of 10 got ({}, {})",
            r.start,
            r.end
        );
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("N 0..=200 x P 1..=16 partition exactly; (100,10) -> (1,10)..(91,100), {:.3}s", elapsed.as_secs_f64()))
}

/// The shipped three-node fixture with store roots under `base` and the
/// gateway on `udp`.
fn three_node(base: &Path, udp: SocketAddr, cs_capacity: Option<usize>) -> Topology {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/three-node.json");
    let mut t = load_topology(&fs::read_to_string(fixture).unwrap(), base).unwrap();
    for (_, spec) in t.fileservers() {
        fs::create_dir_all(&spec.root).unwrap();
    }
    let gw = t.gateway_config_mut();
    gw.listen_udp = Some(udp);
    gw.mgmt_socket = None;
    if let Some(c) = cs_capacity {
        gw.cs_capacity = c;
    }
    t
}

fn ephemeral() -> SocketAddr {
    SocketAddr::from((Ipv4Addr::LOCALHOST, 0))
}

fn store_root(t: &Topology, node: &str) -> std::path::PathBuf {
    match &t.node(node).unwrap().role {
        NodeRole::Fileserver(fs) => fs.root.clone(),
        NodeRole::Forwarder(_) => unreachable!(),
    }
}

fn prefix_of(t: &Topology, node: &str) -> Name {
    match &t.node(node).unwrap().role {
        NodeRole::Fileserver(fs) => fs.prefix.clone(),
        NodeRole::Forwarder(_) => unreachable!(),
    }
}

fn quick() -> FetchOptions {
    FetchOptions {
        rto_ms: 250,
        max_retries: 3,
        ..FetchOptions::default()
    }
}

fn c4_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let base = TempDir::new().unwrap();
    let src = base.path().join("source");
    fs::create_dir(&src).unwrap();
    let mut rng = StdRng::seed_from_u64(4);
    let mut manifest = String::new();
    let mut originals = Vec::new();
    for i in 1..=100 {
        let size = if i <= 3 { [0, 1, 8192][i - 1] } else { rng.random_range(0..=65536) };
        let bytes: Vec<u8> = (0..size).map(|_| rng.random()).collect();
        let rel = format!("run{i:03}/reads.fastq");
        fs::create_dir_all(src.join(format!("run{i:03}"))).unwrap();
        fs::write(src.join(&rel), &bytes).unwrap();
        manifest.push_str(&format!("{rel} {rel}\n"));
        originals.push((rel, bytes));
    }
    let manifest = Manifest::parse(&manifest).map_err(|e| e.to_string())?;
    let topo = three_node(base.path(), ephemeral(), None);
    let producers = ["producer-a", "producer-b"];
    let mut ranges = Vec::new();
    for (k, p) in producers.iter().enumerate() {
        let range = compute_range(k as u64 + 1, 2, manifest.len()).map_err(|e| e.to_string())?;
        let report = run_loader(&manifest, &range, &LocalFetcher::new(&src), &store_root(&topo, p), 2)
            .map_err(|e| e.to_string())?;
        ensure!(report.is_success() && report.entries.len() == 50, "loader for {p}: {report:?}");
        ranges.push(range);
    }

    let cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let opts = FetchOptions {
        gateway: cluster.gateway_udp_addr(),
        ..quick()
    };
    for (i, (rel, bytes)) in originals.iter().enumerate() {
        let index = i as u64 + 1;
        let owner = if ranges[0].contains(index) { producers[0] } else { producers[1] };
        let mut name = prefix_of(&topo, owner);
        for part in rel.split('/') {
            name = name.child(part).unwrap();
        }
        let (got, report) = fetch_object(&name, &opts).map_err(|e| format!("{name}: {e}"))?;
        ensure!(&got == bytes, "{name}: bytes differ");
        let meta = ObjectMeta::of_file(name.clone(), &store_root(&topo, owner).join(rel)).unwrap();
        ensure!(report.digest == hex::encode(meta.content_digest), "{name}: digest differs from meta");
        ensure!(
            report.digest == hex::encode(Sha256::digest(bytes)),
            "{name}: digest differs from source"
        );
    }
    let stats = cluster.stats();
    let served: Vec<u64> = producers.iter().map(|p| stats.fileservers[*p].meta_interests).collect();
    ensure!(served == [50, 50], "meta requests per producer {served:?}");
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("100 objects (50/50 across producers) bit-exact over UDP, {:.1}s", elapsed.as_secs_f64()))
}

fn c5_cache_offload() -> Outcome {
    let base = TempDir::new().unwrap();
    let topo = three_node(base.path(), ephemeral(), None);
    let segments = 40u64;
    fs::write(store_root(&topo, "producer-a").join("obj"), vec![5u8; segments as usize * SEGMENT_SIZE - 17]).unwrap();
    let cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let capacity = 4096u64;
    ensure!(segments < capacity, "object does not fit the cache");
    let name = prefix_of(&topo, "producer-a").child("obj").unwrap();
    let mut link = cluster.attach_consumer(Duration::ZERO).map_err(|e| e.to_string())?;

    let s0 = cluster.stats().fileservers["producer-a"];
    let (cold, report) = fetch_via(&mut link, &name, &quick()).map_err(|e| e.to_string())?;
    let s1 = cluster.stats().fileservers["producer-a"];
    let (warm, _) = fetch_via(&mut link, &name, &quick()).map_err(|e| e.to_string())?;
    let s2 = cluster.stats().fileservers["producer-a"];
    ensure!(cold == warm, "warm bytes differ");
    ensure!(report.segments == segments, "{} segments", report.segments);
    let cold_seg = s1.segment_interests - s0.segment_interests;
    let warm_all = s2.interests - s1.interests;
    ensure!(cold_seg == segments, "cold fetch sent {cold_seg} segment Interests to the producer");
    ensure!(warm_all == 0, "warm fetch sent {warm_all} Interests to the producer");
    Ok(format!("producer segment Interests cold:warm = {cold_seg}:{warm_all}"))
}

fn recv_data(link: &mut dyn Link, name: &Name, within: Duration) -> Option<Data> {
    let deadline = Instant::now() + within;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        let frame = link.recv_timeout(left).ok()??;
        if let Ok(Packet::Data(d)) = Packet::decode(&frame) {
            if &d.name == name {
                return Some(d);
            }
        }
    }
}

fn c6_aggregation() -> Outcome {
    let base = TempDir::new().unwrap();
    let mut topo = three_node(base.path(), ephemeral(), None);
    topo.set_memory_delay(25);
    fs::write(store_root(&topo, "producer-a").join("obj"), vec![6u8; 3 * SEGMENT_SIZE]).unwrap();
    let cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let seg = prefix_of(&topo, "producer-a").child("obj").unwrap().child("seg=1").unwrap();
    let mut c1 = cluster.attach_consumer(Duration::ZERO).map_err(|e| e.to_string())?;
    let mut c2 = cluster.attach_consumer(Duration::ZERO).map_err(|e| e.to_string())?;
    let before = cluster.stats().fileservers["producer-a"];
    c1.send(&Interest::new(seg.clone(), 11).encode()).unwrap();
    c2.send(&Interest::new(seg.clone(), 22).encode()).unwrap();
    let d1 = recv_data(&mut c1, &seg, Duration::from_secs(2));
    let d2 = recv_data(&mut c2, &seg, Duration::from_secs(2));
    ensure!(d1.is_some() && d2.is_some(), "a consumer got no Data");
    ensure!(d1 == d2, "the two deliveries differ");
    let after = cluster.stats();
    let upstream = after.fileservers["producer-a"].interests - before.interests;
    let gw = &after.forwarders["gateway"];
    let deliveries: u64 = [c1.face(), c2.face()]
        .iter()
        .map(|f| gw.face(*f).map(|s| s.counters.out_data).unwrap_or(0))
        .sum();
    ensure!(upstream == 1, "{upstream} Interests reached the producer");
    ensure!(deliveries == 2, "{deliveries} Data deliveries to consumers");
    Ok("2 consumer Interests -> 1 upstream Interest, 2 Data deliveries".into())
}

fn c7_failure_survival() -> Outcome {
    let base = TempDir::new().unwrap();
    let topo = three_node(base.path(), ephemeral(), None);
    let root = store_root(&topo, "producer-b");
    fs::write(root.join("hot"), vec![7u8; 5 * SEGMENT_SIZE + 3]).unwrap();
    fs::write(root.join("cold"), vec![8u8; 100]).unwrap();
    let mut cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let prefix = prefix_of(&topo, "producer-b");
    let opts = FetchOptions {
        gateway: cluster.gateway_udp_addr(),
        ..quick()
    };
    let hot = prefix.child("hot").unwrap();
    let (first, _) = fetch_object(&hot, &opts).map_err(|e| e.to_string())?;
    let fetched_at = Instant::now();
    cluster.kill("producer-b").map_err(|e| e.to_string())?;
    let (again, _) = fetch_object(&hot, &opts).map_err(|e| format!("re-fetch after kill: {e}"))?;
    ensure!(fetched_at.elapsed() < Duration::from_secs(60), "outside the freshness window");
    ensure!(again == first, "re-fetched bytes differ");
    match fetch_object(&prefix.child("cold").unwrap(), &opts) {
        Err(FetchError::MetaTimeout { .. }) => {}
        other => return Err(format!("never-fetched object on the dead producer: {other:?}")),
    }
    Ok("cached object survives producer death; uncached object times out".into())
}

fn c8_pipelining() -> Outcome {
    let base = TempDir::new().unwrap();
    let mut topo = three_node(base.path(), ephemeral(), Some(0));
    topo.set_memory_delay(5);
    fs::write(store_root(&topo, "producer-a").join("obj"), vec![9u8; 64 * SEGMENT_SIZE]).unwrap();
    let cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let name = prefix_of(&topo, "producer-a").child("obj").unwrap();
    let median = |window: usize| -> Result<u64, String> {
        let mut times = Vec::new();
        for _ in 0..5 {
            let mut link = cluster.attach_consumer(Duration::from_millis(5)).map_err(|e| e.to_string())?;
            let before = cluster.producer_interests();
            let (_, r) = fetch_via(&mut link, &name, &quick().window(window)).map_err(|e| e.to_string())?;
            ensure!(r.segments == 64, "{} segments", r.segments);
            ensure!(
                cluster.producer_interests() - before == 65,
                "run was not cold"
            );
            times.push(r.elapsed_ms);
        }
        times.sort();
        Ok(times[2])
    };
    let w1 = median(1)?;
    let w8 = median(8)?;
    let ratio = w8 as f64 / w1 as f64;
    ensure!(ratio < 0.25, "window 8 took {w8} ms vs {w1} ms at window 1 ({:.1}%)", ratio * 100.0);
    Ok(format!("median {w8} ms at window 8 vs {w1} ms at window 1 ({:.1}%)", ratio * 100.0))
}

fn c9_tamper() -> Outcome {
    // Every single-byte flip of a Data frame is rejected by the pipeline.
    let data = Data::new(n("/t/obj/seg=0"), vec![1u8, 2, 3, 4, 5, 6, 7, 8])
        .with_final_segment(0)
        .signed();
    let frame = data.encode();
    let mut checked = 0;
    for offset in 0..frame.len() {
        for flip in 1..=255u8 {
            let mut fwd = Forwarder::new(16);
            let down = fwd.add_face(FaceRemote::Memory("down".into()));
            let up = fwd.add_face(FaceRemote::Memory("up".into()));
            fwd.add_route(&n("/t"), up, 0);
            fwd.on_interest(down, Interest::new(data.name.clone(), 1), 0);
            let mut bad = frame.clone();
            bad[offset] ^= flip;
            let out = fwd.on_frame(up, &bad, 1);
            ensure!(out.is_empty(), "flip {flip:#04x} at {offset} was forwarded");
            ensure!(fwd.cs().is_empty(), "flip {flip:#04x} at {offset} was cached");
            checked += 1;
        }
    }

    // In transit: corrupt one Data on the producer link and fetch through it.
    let base = TempDir::new().unwrap();
    let topo = three_node(base.path(), ephemeral(), None);
    let root = store_root(&topo, "producer-a");
    let prefix = prefix_of(&topo, "producer-a");
    let cluster = ClusterHandle::up(&topo).map_err(|e| e.to_string())?;
    let mut link = cluster.attach_consumer(Duration::ZERO).map_err(|e| e.to_string())?;
    let opts = FetchOptions {
        rto_ms: 150,
        ..quick()
    };
    let seg_frame = SEGMENT_SIZE + 60;
    let offsets: Vec<usize> = (0..12).chain((20..seg_frame).step_by(seg_frame / 20)).chain([seg_frame - 1, seg_frame - 20]).collect();
    let mut trials = 0;
    for (k, &offset) in offsets.iter().enumerate() {
        for target_meta in [false, true] {
            let bytes: Vec<u8> = (0..2 * SEGMENT_SIZE + 100).map(|i| (i * 31 + k) as u8).collect();
            let obj = format!("obj{k}-{target_meta}");
            fs::write(root.join(&obj), &bytes).unwrap();
            let name = prefix.child(obj.as_str()).unwrap();
            if !target_meta {
                // Cache the meta first so the next Data on the link is segment 0.
                let meta = name.child("32=meta").unwrap();
                link.send(&Interest::new(meta.clone(), k as u32).encode()).unwrap();
                ensure!(recv_data(&mut link, &meta, Duration::from_secs(2)).is_some(), "meta for {obj}");
            }
            let drops = |c: &ClusterHandle| c.stats().forwarders["gateway"].totals.drops;
            let d0 = drops(&cluster);
            let applied = cluster.applied_faults("producer-a", "gateway").len();
            cluster.corrupt_next_data("producer-a", "gateway", offset).map_err(|e| e.to_string())?;
            let (got, report) = fetch_via(&mut link, &name, &opts).map_err(|e| format!("{obj} offset {offset}: {e}"))?;
            ensure!(got == bytes, "{obj}: bytes differ");
            ensure!(report.retransmits >= 1, "{obj}: no retransmission");
            ensure!(
                cluster.applied_faults("producer-a", "gateway").len() == applied + 1,
                "{obj}: fault not applied"
            );
            ensure!(drops(&cluster) > d0, "{obj}: gateway did not drop the tampered Data");
            trials += 1;
        }
    }
    Ok(format!(
        "{checked} single-byte flips rejected; {trials} in-transit corruptions recovered with digest intact"
    ))
}

fn free_port() -> SocketAddr {
    let s = UdpSocket::bind(ephemeral()).unwrap();
    s.local_addr().unwrap()
}

fn c10_teardown() -> Outcome {
    let base = TempDir::new().unwrap();
    let udp = free_port();
    let mgmt = TcpListener::bind(ephemeral()).unwrap().local_addr().unwrap();
    let mut topo = three_node(base.path(), udp, None);
    topo.gateway_config_mut().mgmt_socket = Some(mgmt);
    fs::write(store_root(&topo, "producer-a").join("f"), b"cycle").unwrap();
    let name = prefix_of(&topo, "producer-a").child("f").unwrap();
    for cycle in 1..=20 {
        let mut cluster = ClusterHandle::up(&topo).map_err(|e| format!("cycle {cycle}: {e}"))?;
        ensure!(cluster.gateway_udp_addr() == Some(udp), "cycle {cycle}: gateway moved");
        let opts = FetchOptions {
            gateway: Some(udp),
            ..quick()
        };
        let (got, _) = fetch_object(&name, &opts).map_err(|e| format!("cycle {cycle}: {e}"))?;
        ensure!(got == b"cycle", "cycle {cycle}: bytes differ");
        cluster.down();
        cluster.down();
    }
    ensure!(UdpSocket::bind(udp).is_ok(), "udp port still bound after down");
    ensure!(TcpListener::bind(mgmt).is_ok(), "mgmt port still bound after down");
    Ok(format!("20 up/down cycles on udp {udp} and mgmt {mgmt}"))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("1 wire round-trip and fuzz", c1_wire_round_trip),
        ("2 LPM oracle equivalence", c2_lpm_oracle),
        ("3 loader partition law", c3_partition_law),
        ("4 end-to-end bit-exactness", c4_end_to_end),
        ("5 cache offload", c5_cache_offload),
        ("6 Interest aggregation", c6_aggregation),
        ("7 failure survival", c7_failure_survival),
        ("8 pipelining speedup", c8_pipelining),
        ("9 tamper rejection", c9_tamper),
        ("10 teardown hygiene", c10_teardown),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (label, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {label}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {label}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
