use std::fmt;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tables::DEFAULT_CS_CAPACITY;
use crate::wire::Name;

pub const DEFAULT_UDP_PORT: u16 = 6363;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("route {prefix} uses a udp face but listen_udp is not set")]
    UdpRouteWithoutListener { prefix: Name },
}

/// Where a static route points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaceSpec {
    /// `udp://host:port`
    Udp(SocketAddr),
}

impl FromStr for FaceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let target = s
            .strip_prefix("udp://")
            .ok_or_else(|| format!("face spec {s:?} must look like udp://host:port"))?;
        let addr = target
            .to_socket_addrs()
            .map_err(|e| format!("face spec {s:?}: {e}"))?
            .next()
            .ok_or_else(|| format!("face spec {s:?} resolves to nothing"))?;
        Ok(FaceSpec::Udp(addr))
    }
}

impl fmt::Display for FaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaceSpec::Udp(a) => write!(f, "udp://{a}"),
        }
    }
}

impl Serialize for FaceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FaceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteConfig {
    pub prefix: Name,
    pub face: FaceSpec,
    #[serde(default)]
    pub cost: u32,
}

/// Forwarder configuration file.
///
/// ```json
/// {
///   "listen_udp": "0.0.0.0:6363",
///   "cs_capacity": 4096,
///   "routes": [{ "prefix": "/genomics/data", "face": "udp://10.0.0.7:6363", "cost": 0 }],
///   "mgmt_socket": "127.0.0.1:6364"
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwarderConfig {
    #[serde(default)]
    pub listen_udp: Option<SocketAddr>,
    #[serde(default = "default_cs_capacity")]
    pub cs_capacity: usize,
    #[serde(default)]
    pub routes: Vec<RouteConfig>,
    #[serde(default)]
    pub mgmt_socket: Option<SocketAddr>,
}

fn default_cs_capacity() -> usize {
    DEFAULT_CS_CAPACITY
}

impl Default for ForwarderConfig {
    fn default() -> Self {
        Self {
            listen_udp: None,
            cs_capacity: DEFAULT_CS_CAPACITY,
            routes: Vec::new(),
            mgmt_socket: None,
        }
    }
}

impl ForwarderConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ForwarderConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen_udp.is_none() {
            if let Some(r) = self.routes.iter().find(|r| matches!(r.face, FaceSpec::Udp(_))) {
                return Err(ConfigError::UdpRouteWithoutListener {
                    prefix: r.prefix.clone(),
                });
            }
        }
        Ok(())
    }
}
