use std::collections::{BTreeMap, HashMap};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{mpsc, Arc, OnceLock};
use std::time::Duration;

use serde::Serialize;

use super::topology::{LinkKind, LinkSpec, RouteSpec, Topology};
use super::HarnessError;
use crate::fileserver::{FileserverNode, FileserverStats, MgmtChannel, ProducerTransport, StoreMount};
use crate::forwarder::mgmt::parse_final;
use crate::forwarder::node::ForwarderStats;
use crate::forwarder::{ForwarderHandle, ForwarderNode, DEFAULT_UDP_PORT};
use crate::tables::FaceId;
use crate::transport::{Endpoint, Fault, FaultInjector, Link, Outlet};

enum NodeProc {
    Forwarder(ForwarderNode),
    Fileserver(FileserverNode),
}

/// Cluster-wide counter snapshot.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterStats {
    pub forwarders: BTreeMap<String, ForwarderStats>,
    pub fileservers: BTreeMap<String, FileserverStats>,
}

impl ClusterStats {
    /// Interests that reached any producer.
    pub fn producer_interests(&self) -> u64 {
        self.fileservers.values().map(|s| s.interests).sum()
    }

    pub fn producer_data(&self) -> u64 {
        self.fileservers.values().map(|s| s.data_sent).sum()
    }
}

/// A running cluster. Dropping it is the same as [`ClusterHandle::down`].
pub struct ClusterHandle {
    topology: Topology,
    /// Start order; torn down in reverse.
    nodes: Vec<(String, NodeProc)>,
    faults: HashMap<(String, String), FaultInjector>,
    faces: HashMap<(String, String), FaceId>,
    last_fileserver_stats: BTreeMap<String, FileserverStats>,
    consumers: AtomicU32,
}

fn late_outlet() -> (Outlet, Arc<OnceLock<Outlet>>) {
    let cell: Arc<OnceLock<Outlet>> = Arc::new(OnceLock::new());
    let c = cell.clone();
    (
        Outlet::new(move |frame| c.get().is_some_and(|o| o.send(frame))),
        cell,
    )
}

fn startup(node: &str, reason: impl ToString) -> HarnessError {
    HarnessError::StartupFailure {
        node: node.to_string(),
        reason: reason.to_string(),
    }
}

fn loopback(mut addr: SocketAddr) -> SocketAddr {
    if addr.ip().is_unspecified() {
        addr.set_ip(IpAddr::V4(Ipv4Addr::LOCALHOST));
    }
    addr
}

fn run_ok(fwd: &mut ForwarderHandle, line: &str) -> Result<Option<String>, String> {
    let reply = fwd.command(line).map_err(|e| e.to_string())?;
    parse_final(&reply).map_err(|e| format!("`{line}` -> err {e}"))
}

impl ClusterHandle {
    /// Starts forwarders, wires links, installs static routes, then starts
    /// fileservers. On any failure everything already started is stopped.
    pub fn up(topology: &Topology) -> Result<Self, HarnessError> {
        let mut cluster = Self {
            topology: topology.clone(),
            nodes: Vec::new(),
            faults: HashMap::new(),
            faces: HashMap::new(),
            last_fileserver_stats: BTreeMap::new(),
            consumers: AtomicU32::new(0),
        };
        match cluster.start() {
            Ok(()) => Ok(cluster),
            Err(e) => {
                cluster.down();
                Err(e)
            }
        }
    }

    fn start(&mut self) -> Result<(), HarnessError> {
        let topo = self.topology.clone();
        for (name, cfg) in topo.forwarders() {
            let mut cfg = cfg.clone();
            let needs_udp = topo
                .links
                .iter()
                .any(|l| l.kind == LinkKind::Udp && l.touches(name));
            if cfg.listen_udp.is_none() {
                if name == topo.gateway {
                    cfg.listen_udp = Some(SocketAddr::from((Ipv4Addr::UNSPECIFIED, DEFAULT_UDP_PORT)));
                } else if needs_udp {
                    cfg.listen_udp = Some(SocketAddr::from((Ipv4Addr::LOCALHOST, 0)));
                }
            }
            let node = ForwarderNode::spawn(&cfg).map_err(|e| startup(name, e))?;
            tracing::info!(node = name, udp = ?node.handle().udp_addr(), "forwarder up");
            self.nodes.push((name.to_string(), NodeProc::Forwarder(node)));
        }

        for link in topo.links.iter() {
            let a_fwd = topo.node(&link.a).is_some_and(|n| n.is_forwarder());
            let b_fwd = topo.node(&link.b).is_some_and(|n| n.is_forwarder());
            if a_fwd && b_fwd {
                self.wire_forwarders(link)?;
            }
        }

        // Routes over producer links wait until the producer has its face.
        let (now, later): (Vec<_>, Vec<_>) = topo
            .routes
            .iter()
            .partition(|r| self.faces.contains_key(&(r.via.clone(), r.at.clone())));
        self.install_routes(&now)?;

        for (name, spec) in topo.fileservers() {
            let link = topo
                .links
                .iter()
                .find(|l| l.touches(name))
                .expect("validated")
                .clone();
            let fwd_name = link.other(name).to_string();
            let mut fwd = self.forwarder(&fwd_name).expect("validated");
            let mount = StoreMount::new(spec.prefix.clone(), &spec.root).map_err(|e| startup(name, e))?;
            let transport = match link.kind {
                LinkKind::Memory => {
                    let (to_fs_tx, to_fs_rx) = mpsc::channel();
                    let delay = Duration::from_millis(link.delay_ms);
                    let down = Outlet::channel(to_fs_tx)
                        .delayed(delay)
                        .with_faults(self.injector(&fwd_name, name));
                    let (face, up) = fwd
                        .attach_memory(&format!("{}:{name}", link.id), down)
                        .map_err(|e| startup(&fwd_name, e))?;
                    let up = up.delayed(delay).with_faults(self.injector(name, &fwd_name));
                    ProducerTransport::Memory {
                        endpoint: Endpoint::new(to_fs_rx, up),
                        face,
                    }
                }
                LinkKind::Udp => ProducerTransport::Udp {
                    bind: SocketAddr::from((Ipv4Addr::LOCALHOST, 0)),
                },
            };
            let node = FileserverNode::spawn(mount, transport, &mut fwd).map_err(|e| startup(name, e))?;
            self.faces.insert((link.id.clone(), fwd_name), node.face());
            tracing::info!(node = name, face = %node.face(), "fileserver up");
            self.nodes.push((name.to_string(), NodeProc::Fileserver(node)));
        }
        self.install_routes(&later)
    }

    fn install_routes(&self, routes: &[&RouteSpec]) -> Result<(), HarnessError> {
        for r in routes {
            let face = self.faces[&(r.via.clone(), r.at.clone())];
            let mut fwd = self.forwarder(&r.at).expect("validated");
            run_ok(&mut fwd, &format!("route add {} {} {}", r.prefix, face, r.cost))
                .map_err(|e| startup(&r.at, e))?;
        }
        Ok(())
    }

    fn wire_forwarders(&mut self, link: &LinkSpec) -> Result<(), HarnessError> {
        let mut a = self.forwarder(&link.a).expect("started");
        let mut b = self.forwarder(&link.b).expect("started");
        let (face_a, face_b) = match link.kind {
            LinkKind::Memory => {
                let delay = Duration::from_millis(link.delay_ms);
                let (to_b, b_in) = late_outlet();
                let (to_a, a_in) = late_outlet();
                let to_b = to_b.delayed(delay).with_faults(self.injector(&link.a, &link.b));
                let to_a = to_a.delayed(delay).with_faults(self.injector(&link.b, &link.a));
                let (fa, a_ingress) = a
                    .attach_memory(&format!("{}:{}", link.id, link.b), to_b)
                    .map_err(|e| startup(&link.a, e))?;
                let (fb, b_ingress) = b
                    .attach_memory(&format!("{}:{}", link.id, link.a), to_a)
                    .map_err(|e| startup(&link.b, e))?;
                let _ = a_in.set(a_ingress);
                let _ = b_in.set(b_ingress);
                (fa, fb)
            }
            LinkKind::Udp => {
                let ua = a.udp_addr().map(loopback).ok_or_else(|| startup(&link.a, "no udp listener"))?;
                let ub = b.udp_addr().map(loopback).ok_or_else(|| startup(&link.b, "no udp listener"))?;
                let id = |fwd: &mut ForwarderHandle, peer: SocketAddr, node: &str| {
                    run_ok(fwd, &format!("face add udp {peer}"))
                        .map_err(|e| startup(node, e))?
                        .and_then(|s| s.parse().ok())
                        .map(FaceId)
                        .ok_or_else(|| startup(node, "face add returned no id"))
                };
                (id(&mut a, ub, &link.a)?, id(&mut b, ua, &link.b)?)
            }
        };
        self.faces.insert((link.id.clone(), link.a.clone()), face_a);
        self.faces.insert((link.id.clone(), link.b.clone()), face_b);
        Ok(())
    }

    fn injector(&mut self, from: &str, to: &str) -> FaultInjector {
        self.faults
            .entry((from.to_string(), to.to_string()))
            .or_default()
            .clone()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn gateway(&self) -> &str {
        &self.topology.gateway
    }

    /// Handle to a running forwarder.
    pub fn forwarder(&self, name: &str) -> Option<ForwarderHandle> {
        self.nodes.iter().find_map(|(n, p)| match p {
            NodeProc::Forwarder(f) if n == name && f.is_running() => Some(f.handle()),
            _ => None,
        })
    }

    /// The gateway's UDP endpoint, with a wildcard bind mapped to loopback.
    pub fn gateway_udp_addr(&self) -> Option<SocketAddr> {
        self.forwarder(&self.topology.gateway)?.udp_addr().map(loopback)
    }

    /// Face on `node` for link `link`.
    pub fn face(&self, link: &str, node: &str) -> Option<FaceId> {
        self.faces.get(&(link.to_string(), node.to_string())).copied()
    }

    pub fn is_running(&self, node: &str) -> bool {
        self.nodes.iter().any(|(n, p)| {
            n == node
                && match p {
                    NodeProc::Forwarder(f) => f.is_running(),
                    NodeProc::Fileserver(f) => f.is_running(),
                }
        })
    }

    /// Attaches an in-process consumer to the gateway over a memory face with
    /// `delay` in each direction.
    pub fn attach_consumer(&self, delay: Duration) -> Result<ConsumerLink, HarnessError> {
        self.attach_consumer_with(delay, FaultInjector::new())
    }

    /// As [`attach_consumer`](Self::attach_consumer); `faults` applies to
    /// frames travelling from the gateway to the consumer.
    pub fn attach_consumer_with(
        &self,
        delay: Duration,
        faults: FaultInjector,
    ) -> Result<ConsumerLink, HarnessError> {
        let gw = self
            .forwarder(&self.topology.gateway)
            .ok_or_else(|| HarnessError::UnknownNode(self.topology.gateway.clone()))?;
        let k = self.consumers.fetch_add(1, Ordering::Relaxed) + 1;
        let (tx, rx) = mpsc::channel();
        let down = Outlet::channel(tx).delayed(delay).with_faults(faults);
        let (face, up) = gw.attach_memory(&format!("consumer-{k}"), down)?;
        Ok(ConsumerLink {
            endpoint: Endpoint::new(rx, up.delayed(delay)),
            face,
            gateway: gw,
        })
    }

    /// Queues a fault on the next Data frame sent from `from` to `to`.
    pub fn inject_fault(&self, from: &str, to: &str, fault: Fault) -> Result<(), HarnessError> {
        let injector = self
            .faults
            .get(&(from.to_string(), to.to_string()))
            .ok_or_else(|| HarnessError::UnknownReference(format!("no memory link {from} -> {to}")))?;
        injector.push(fault);
        Ok(())
    }

    pub fn corrupt_next_data(&self, from: &str, to: &str, offset: usize) -> Result<(), HarnessError> {
        self.inject_fault(from, to, Fault::CorruptData { offset })
    }

    /// Faults already applied on the `from -> to` direction.
    pub fn applied_faults(&self, from: &str, to: &str) -> Vec<Fault> {
        self.faults
            .get(&(from.to_string(), to.to_string()))
            .map(|f| f.applied())
            .unwrap_or_default()
    }

    /// Stops one node immediately; its links go silent.
    pub fn kill(&mut self, node: &str) -> Result<(), HarnessError> {
        let Some((_, proc_)) = self.nodes.iter_mut().find(|(n, _)| n == node) else {
            return Err(HarnessError::UnknownNode(node.to_string()));
        };
        match proc_ {
            NodeProc::Forwarder(f) => f.shutdown(),
            NodeProc::Fileserver(f) => {
                self.last_fileserver_stats.insert(node.to_string(), f.stats());
                f.shutdown()
            }
        }
        tracing::info!(node, "killed");
        Ok(())
    }

    /// Counters of every node; dead fileservers report their final values.
    pub fn stats(&self) -> ClusterStats {
        let mut forwarders = BTreeMap::new();
        let mut fileservers = self.last_fileserver_stats.clone();
        for (name, p) in &self.nodes {
            match p {
                NodeProc::Forwarder(f) if f.is_running() => {
                    if let Ok(s) = f.handle().stats() {
                        forwarders.insert(name.clone(), s);
                    }
                }
                NodeProc::Fileserver(f) if f.is_running() => {
                    fileservers.insert(name.clone(), f.stats());
                }
                _ => {}
            }
        }
        ClusterStats {
            forwarders,
            fileservers,
        }
    }

    pub fn producer_interests(&self) -> u64 {
        self.stats().producer_interests()
    }

    /// Stops every node in reverse start order. Idempotent.
    pub fn down(&mut self) {
        while let Some((name, mut p)) = self.nodes.pop() {
            match &mut p {
                NodeProc::Forwarder(f) => f.shutdown(),
                NodeProc::Fileserver(f) => f.shutdown(),
            }
            tracing::debug!(node = name, "stopped");
        }
    }

    pub fn is_up(&self) -> bool {
        !self.nodes.is_empty()
    }
}

impl Drop for ClusterHandle {
    fn drop(&mut self) {
        self.down();
    }
}

/// A consumer's memory attachment to the gateway. The gateway face is
/// removed when this is dropped.
pub struct ConsumerLink {
    endpoint: Endpoint,
    face: FaceId,
    gateway: ForwarderHandle,
}

impl ConsumerLink {
    pub fn face(&self) -> FaceId {
        self.face
    }
}

impl Link for ConsumerLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        self.endpoint.send(frame)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.endpoint.recv_timeout(timeout)
    }
}

impl Drop for ConsumerLink {
    fn drop(&mut self) {
        self.gateway.detach(self.face);
    }
}
