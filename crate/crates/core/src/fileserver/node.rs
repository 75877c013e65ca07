use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::{Fileserver, FileserverCounters, FileserverError, FileserverStats, StoreMount};
use crate::forwarder::mgmt::{parse_final, MgmtClient};
use crate::forwarder::ForwarderHandle;
use crate::tables::FaceId;
use crate::transport::{is_timeout, Endpoint, Link, MAX_DATAGRAM};

const POLL: Duration = Duration::from_millis(20);

/// Something that executes forwarder management commands.
pub trait MgmtChannel {
    /// Sends one command; returns the final `ok`/`err` line.
    fn command(&mut self, line: &str) -> io::Result<String>;
}

impl MgmtChannel for ForwarderHandle {
    fn command(&mut self, line: &str) -> io::Result<String> {
        let reply = self.mgmt(line)?;
        Ok(reply.lines().last().unwrap_or_default().to_string())
    }
}

impl MgmtChannel for MgmtClient {
    fn command(&mut self, line: &str) -> io::Result<String> {
        Ok(self.request(line)?.pop().unwrap_or_default())
    }
}

/// How the producer reaches its forwarder.
pub enum ProducerTransport {
    /// A memory face already attached on the forwarder as `face`.
    Memory { endpoint: Endpoint, face: FaceId },
    /// A UDP socket bound at `bind`; the forwarder is told to add a face for it.
    Udp { bind: SocketAddr },
}

/// A running producer.
pub struct FileserverNode {
    counters: Arc<FileserverCounters>,
    face: FaceId,
    udp_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

fn expect_ok(reply: io::Result<String>) -> Result<Option<String>, FileserverError> {
    parse_final(&reply?).map_err(FileserverError::Registration)
}

impl FileserverNode {
    /// Registers the mount's prefix on the forwarder and starts serving.
    pub fn spawn(
        mount: StoreMount,
        transport: ProducerTransport,
        mgmt: &mut dyn MgmtChannel,
    ) -> Result<Self, FileserverError> {
        let server = Fileserver::new(mount);
        let counters = server.counters();
        let stop = Arc::new(AtomicBool::new(false));
        let prefix = server.mount().prefix.clone();
        let (face, udp_addr, serve): (FaceId, Option<SocketAddr>, Box<dyn FnOnce() + Send>) =
            match transport {
                ProducerTransport::Memory { endpoint, face } => {
                    let stop = stop.clone();
                    (face, None, Box::new(move || serve_link(server, endpoint, stop)))
                }
                ProducerTransport::Udp { bind } => {
                    let socket = UdpSocket::bind(bind)?;
                    socket.set_read_timeout(Some(POLL))?;
                    let mut local = socket.local_addr()?;
                    if local.ip().is_unspecified() {
                        local.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
                    }
                    let id = expect_ok(mgmt.command(&format!("face add udp {local}")))?
                        .and_then(|s| s.parse().ok())
                        .map(FaceId)
                        .ok_or_else(|| FileserverError::Registration("no face id in reply".into()))?;
                    let stop = stop.clone();
                    (id, Some(local), Box::new(move || serve_udp(server, socket, stop)))
                }
            };
        expect_ok(mgmt.command(&format!("route add {prefix} {face}")))?;
        tracing::info!(%prefix, %face, "fileserver registered");
        let thread = thread::Builder::new()
            .name("fileserver".into())
            .spawn(serve)?;
        Ok(Self {
            counters,
            face,
            udp_addr,
            stop,
            thread: Some(thread),
        })
    }

    /// Forwarder face the prefix is routed to.
    pub fn face(&self) -> FaceId {
        self.face
    }

    pub fn udp_addr(&self) -> Option<SocketAddr> {
        self.udp_addr
    }

    pub fn stats(&self) -> FileserverStats {
        self.counters.snapshot()
    }

    pub fn is_running(&self) -> bool {
        self.thread.is_some()
    }

    /// Stops serving. Idempotent.
    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FileserverNode {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_link(server: Fileserver, mut link: Endpoint, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match link.recv_timeout(POLL) {
            Ok(Some(frame)) => {
                if let Some(reply) = server.handle_frame(&frame) {
                    let _ = link.send(&reply);
                }
            }
            Ok(None) => {}
            Err(e) => {
                tracing::warn!(error = %e, "fileserver receive failed");
                thread::sleep(POLL);
            }
        }
    }
}

fn serve_udp(server: Fileserver, socket: UdpSocket, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    while !stop.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                if let Some(reply) = server.handle_frame(&buf[..n]) {
                    if let Err(e) = socket.send_to(&reply, from) {
                        tracing::debug!(%from, error = %e, "reply failed");
                    }
                }
            }
            Err(e) if is_timeout(&e) || e.kind() == io::ErrorKind::ConnectionRefused => {}
            Err(e) => {
                tracing::warn!(error = %e, "fileserver receive failed");
                thread::sleep(POLL);
            }
        }
    }
}
