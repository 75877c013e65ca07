use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::forwarder::ForwarderConfig;
use crate::wire::Name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Memory,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileserverSpec {
    pub prefix: Name,
    /// Store directory, already resolved against the document's directory.
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeRole {
    Forwarder(ForwarderConfig),
    Fileserver(FileserverSpec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub name: String,
    pub role: NodeRole,
}

impl NodeSpec {
    pub fn is_forwarder(&self) -> bool {
        matches!(self.role, NodeRole::Forwarder(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: String,
    pub a: String,
    pub b: String,
    pub kind: LinkKind,
    /// One-way delivery delay, memory links only.
    pub delay_ms: u64,
}

impl LinkSpec {
    pub fn touches(&self, node: &str) -> bool {
        self.a == node || self.b == node
    }

    pub fn other(&self, node: &str) -> &str {
        if self.a == node {
            &self.b
        } else {
            &self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub at: String,
    pub prefix: Name,
    pub via: String,
    #[serde(default)]
    pub cost: u32,
}

/// A validated cluster description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    pub gateway: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    nodes: Vec<RawNode>,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    routes: Vec<RouteSpec>,
    gateway: Gateways,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Gateways {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    kind: RawKind,
    #[serde(default)]
    config: serde_json::Value,
}

#[derive(Deserialize, PartialEq, Eq, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Forwarder,
    Fileserver,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFileserver {
    prefix: Name,
    root: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    #[serde(default)]
    id: Option<String>,
    a: String,
    b: String,
    #[serde(default = "default_link_kind")]
    kind: LinkKind,
    #[serde(default)]
    delay_ms: u64,
}

fn default_link_kind() -> LinkKind {
    LinkKind::Memory
}

fn schema(msg: impl Into<String>) -> HarnessError {
    HarnessError::Schema(msg.into())
}

fn unknown(msg: impl Into<String>) -> HarnessError {
    HarnessError::UnknownReference(msg.into())
}

/// Parses and validates a topology document. Relative store roots resolve
/// against `base_dir`.
pub fn load_topology(text: &str, base_dir: &Path) -> Result<Topology, HarnessError> {
    let raw: RawTopology = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;

    let mut nodes = Vec::with_capacity(raw.nodes.len());
    let mut names = HashSet::new();
    for n in raw.nodes {
        if n.name.is_empty() || n.name.contains(char::is_whitespace) {
            return Err(schema(format!("node name {:?} must be non-empty without spaces", n.name)));
        }
        if !names.insert(n.name.clone()) {
            return Err(schema(format!("node {} is defined twice", n.name)));
        }
        let config = if n.config.is_null() {
            serde_json::Value::Object(Default::default())
        } else {
            n.config
        };
        let role = match n.kind {
            RawKind::Forwarder => {
                let cfg: ForwarderConfig = serde_json::from_value(config)
                    .map_err(|e| schema(format!("node {}: {e}", n.name)))?;
                cfg.validate()
                    .map_err(|e| schema(format!("node {}: {e}", n.name)))?;
                NodeRole::Forwarder(cfg)
            }
            RawKind::Fileserver => {
                let fs: RawFileserver = serde_json::from_value(config)
                    .map_err(|e| schema(format!("node {}: {e}", n.name)))?;
                NodeRole::Fileserver(FileserverSpec {
                    prefix: fs.prefix,
                    root: base_dir.join(fs.root),
                })
            }
        };
        nodes.push(NodeSpec { name: n.name, role });
    }
    let kind_of: HashMap<&str, bool> = nodes
        .iter()
        .map(|n| (n.name.as_str(), n.is_forwarder()))
        .collect();

    let mut links = Vec::with_capacity(raw.links.len());
    let mut ids = HashSet::new();
    for l in raw.links {
        for end in [&l.a, &l.b] {
            if !kind_of.contains_key(end.as_str()) {
                return Err(unknown(format!("link {}-{} names unknown node {end}", l.a, l.b)));
            }
        }
        if l.a == l.b {
            return Err(schema(format!("link {}-{} is a self-loop", l.a, l.b)));
        }
        if !kind_of[l.a.as_str()] && !kind_of[l.b.as_str()] {
            return Err(schema(format!("link {}-{} joins two fileservers", l.a, l.b)));
        }
        if l.kind == LinkKind::Udp && l.delay_ms > 0 {
            return Err(schema(format!("link {}-{}: delay applies to memory links only", l.a, l.b)));
        }
        let id = l.id.unwrap_or_else(|| format!("{}-{}", l.a, l.b));
        if !ids.insert(id.clone()) {
            return Err(schema(format!("link id {id} is used twice")));
        }
        links.push(LinkSpec {
            id,
            a: l.a,
            b: l.b,
            kind: l.kind,
            delay_ms: l.delay_ms,
        });
    }

    for n in nodes.iter().filter(|n| !n.is_forwarder()) {
        let count = links.iter().filter(|l| l.touches(&n.name)).count();
        if count != 1 {
            return Err(schema(format!(
                "fileserver {} must link to exactly one forwarder, found {count}",
                n.name
            )));
        }
    }

    for r in &raw.routes {
        match kind_of.get(r.at.as_str()) {
            None => return Err(unknown(format!("route for {} at unknown node {}", r.prefix, r.at))),
            Some(false) => return Err(schema(format!("route for {} installed at fileserver {}", r.prefix, r.at))),
            Some(true) => {}
        }
        match links.iter().find(|l| l.id == r.via) {
            None => return Err(unknown(format!("route for {} via unknown link {}", r.prefix, r.via))),
            Some(l) if !l.touches(&r.at) => {
                return Err(unknown(format!("route for {}: link {} does not touch {}", r.prefix, r.via, r.at)))
            }
            Some(_) => {}
        }
    }

    let gateway = match raw.gateway {
        Gateways::One(g) => g,
        Gateways::Many(gs) if gs.len() == 1 => gs.into_iter().next().expect("one"),
        Gateways::Many(gs) if gs.is_empty() => return Err(schema("no gateway")),
        Gateways::Many(gs) => return Err(HarnessError::MultipleGateways(gs)),
    };
    match kind_of.get(gateway.as_str()) {
        None => return Err(unknown(format!("gateway {gateway} is not a node"))),
        Some(false) => return Err(schema(format!("gateway {gateway} must be a forwarder"))),
        Some(true) => {}
    }

    let topo = Topology {
        nodes,
        links,
        routes: raw.routes,
        gateway,
    };
    let unreachable = topo.unreachable_from_gateway();
    if !unreachable.is_empty() {
        return Err(HarnessError::DisconnectedGraph(unreachable));
    }
    Ok(topo)
}

impl Topology {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        load_topology(&text, base)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn forwarders(&self) -> impl Iterator<Item = (&str, &ForwarderConfig)> {
        self.nodes.iter().filter_map(|n| match &n.role {
            NodeRole::Forwarder(cfg) => Some((n.name.as_str(), cfg)),
            NodeRole::Fileserver(_) => None,
        })
    }

    pub fn fileservers(&self) -> impl Iterator<Item = (&str, &FileserverSpec)> {
        self.nodes.iter().filter_map(|n| match &n.role {
            NodeRole::Fileserver(fs) => Some((n.name.as_str(), fs)),
            NodeRole::Forwarder(_) => None,
        })
    }

    pub fn gateway_config_mut(&mut self) -> &mut ForwarderConfig {
        let gw = self.gateway.clone();
        self.forwarder_config_mut(&gw).expect("validated gateway")
    }

    pub fn forwarder_config_mut(&mut self, name: &str) -> Option<&mut ForwarderConfig> {
        self.nodes.iter_mut().find(|n| n.name == name).and_then(|n| match &mut n.role {
            NodeRole::Forwarder(cfg) => Some(cfg),
            NodeRole::Fileserver(_) => None,
        })
    }

    /// Sets every delay on memory links to `delay_ms`.
    pub fn set_memory_delay(&mut self, delay_ms: u64) {
        for l in self.links.iter_mut().filter(|l| l.kind == LinkKind::Memory) {
            l.delay_ms = delay_ms;
        }
    }

    fn unreachable_from_gateway(&self) -> Vec<String> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue = VecDeque::from([self.gateway.as_str()]);
        seen.insert(&self.gateway);
        while let Some(n) = queue.pop_front() {
            for l in self.links.iter().filter(|l| l.touches(n)) {
                let m = l.other(n);
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        self.nodes
            .iter()
            .filter(|n| !seen.contains(n.name.as_str()))
            .map(|n| n.name.clone())
            .collect()
    }
}
