//! Threaded runtime around [`Forwarder`].
//!
//! One event-loop thread owns the forwarder. Transports (UDP receive, memory
//! outlets, management connections) only ever push events into its queue,
//! so every table mutation is serialized.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::{FaceCounters, FaceKind, FaceRemote, Forwarder, ForwarderConfig};
use crate::clock::{Clock, WallClock};
use crate::tables::FaceId;
use crate::transport::{is_timeout, Outlet, MAX_DATAGRAM};

const TICK: Duration = Duration::from_millis(100);
const POLL: Duration = Duration::from_millis(20);

enum Event {
    Frame { face: FaceId, frame: Vec<u8> },
    Udp { from: SocketAddr, frame: Vec<u8> },
    Mgmt { line: String, reply: Sender<String> },
    Attach { label: String, outlet: Outlet, reply: Sender<FaceId> },
    Detach { face: FaceId },
    Stats { reply: Sender<ForwarderStats> },
    Shutdown,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaceStats {
    pub id: FaceId,
    pub kind: FaceKind,
    pub remote: String,
    pub counters: FaceCounters,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForwarderStats {
    pub faces: Vec<FaceStats>,
    pub totals: FaceCounters,
    pub cs_entries: usize,
    pub pit_entries: usize,
    pub fib_entries: usize,
}

impl ForwarderStats {
    fn of(fwd: &Forwarder) -> Self {
        Self {
            faces: fwd
                .faces()
                .map(|f| FaceStats {
                    id: f.id,
                    kind: f.kind(),
                    remote: f.remote.to_string(),
                    counters: f.counters,
                })
                .collect(),
            totals: fwd.totals(),
            cs_entries: fwd.cs().len(),
            pit_entries: fwd.pit().len(),
            fib_entries: fwd.fib().len(),
        }
    }

    pub fn face(&self, id: FaceId) -> Option<&FaceStats> {
        self.faces.iter().find(|f| f.id == id)
    }
}

/// Cheap, cloneable access to a running forwarder.
#[derive(Clone)]
pub struct ForwarderHandle {
    tx: Sender<Event>,
    udp_addr: Option<SocketAddr>,
    mgmt_addr: Option<SocketAddr>,
}

fn gone() -> io::Error {
    io::Error::new(io::ErrorKind::BrokenPipe, "forwarder is not running")
}

impl ForwarderHandle {
    /// Bound UDP address, if the forwarder listens on UDP.
    pub fn udp_addr(&self) -> Option<SocketAddr> {
        self.udp_addr
    }

    pub fn mgmt_addr(&self) -> Option<SocketAddr> {
        self.mgmt_addr
    }

    /// Runs a management command through the event loop.
    pub fn mgmt(&self, line: &str) -> io::Result<String> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Event::Mgmt {
                line: line.to_string(),
                reply,
            })
            .map_err(|_| gone())?;
        rx.recv().map_err(|_| gone())
    }

    /// Creates a memory face. Frames the forwarder emits on it go to
    /// `to_peer`; the returned outlet feeds frames into the forwarder on it.
    pub fn attach_memory(&self, label: &str, to_peer: Outlet) -> io::Result<(FaceId, Outlet)> {
        let (reply, rx) = mpsc::channel();
        self.tx
            .send(Event::Attach {
                label: label.to_string(),
                outlet: to_peer,
                reply,
            })
            .map_err(|_| gone())?;
        let face = rx.recv().map_err(|_| gone())?;
        let tx = self.tx.clone();
        Ok((
            face,
            Outlet::new(move |frame| tx.send(Event::Frame { face, frame }).is_ok()),
        ))
    }

    /// Removes a face and its routes.
    pub fn detach(&self, face: FaceId) {
        let _ = self.tx.send(Event::Detach { face });
    }

    pub fn stats(&self) -> io::Result<ForwarderStats> {
        let (reply, rx) = mpsc::channel();
        self.tx.send(Event::Stats { reply }).map_err(|_| gone())?;
        rx.recv().map_err(|_| gone())
    }
}

pub struct ForwarderNode {
    handle: ForwarderHandle,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    conns: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl ForwarderNode {
    pub fn spawn(cfg: &ForwarderConfig) -> io::Result<Self> {
        Self::spawn_with_clock(cfg, Arc::new(WallClock::new()))
    }

    pub fn spawn_with_clock(cfg: &ForwarderConfig, clock: Arc<dyn Clock>) -> io::Result<Self> {
        let mut fwd = Forwarder::new(cfg.cs_capacity);
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let conns = Arc::new(Mutex::new(Vec::new()));
        let mut threads = Vec::new();

        let socket = match cfg.listen_udp {
            Some(addr) => {
                let s = UdpSocket::bind(addr)?;
                s.set_read_timeout(Some(POLL))?;
                fwd.enable_udp();
                Some(Arc::new(s))
            }
            None => None,
        };
        let udp_addr = socket.as_ref().map(|s| s.local_addr()).transpose()?;
        let listener = match cfg.mgmt_socket {
            Some(addr) => {
                let l = TcpListener::bind(addr)?;
                l.set_nonblocking(true)?;
                Some(l)
            }
            None => None,
        };
        let mgmt_addr = listener.as_ref().map(|l| l.local_addr()).transpose()?;

        for route in &cfg.routes {
            let super::FaceSpec::Udp(addr) = route.face;
            let face = fwd.udp_face(addr);
            fwd.add_route(&route.prefix, face, route.cost);
        }

        if let Some(sock) = &socket {
            let sock = sock.clone();
            let tx = tx.clone();
            let stop = stop.clone();
            threads.push(
                thread::Builder::new()
                    .name("fwd-udp".into())
                    .spawn(move || udp_receive(sock, tx, stop))?,
            );
        }
        if let Some(listener) = listener {
            let tx = tx.clone();
            let stop = stop.clone();
            let conns = conns.clone();
            threads.push(
                thread::Builder::new()
                    .name("fwd-mgmt".into())
                    .spawn(move || mgmt_accept(listener, tx, stop, conns))?,
            );
        }
        let event_loop = EventLoop {
            fwd,
            clock,
            socket,
            outlets: HashMap::new(),
        };
        threads.insert(
            0,
            thread::Builder::new()
                .name("fwd-loop".into())
                .spawn(move || event_loop.run(rx))?,
        );
        Ok(Self {
            handle: ForwarderHandle {
                tx,
                udp_addr,
                mgmt_addr,
            },
            stop,
            threads,
            conns,
        })
    }

    pub fn handle(&self) -> ForwarderHandle {
        self.handle.clone()
    }

    pub fn is_running(&self) -> bool {
        !self.threads.is_empty()
    }

    /// Stops every thread and releases the sockets. Idempotent.
    pub fn shutdown(&mut self) {
        if self.threads.is_empty() {
            return;
        }
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.handle.tx.send(Event::Shutdown);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let conns: Vec<_> = self.conns.lock().unwrap().drain(..).collect();
        for t in conns {
            let _ = t.join();
        }
    }
}

impl Drop for ForwarderNode {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct EventLoop {
    fwd: Forwarder,
    clock: Arc<dyn Clock>,
    socket: Option<Arc<UdpSocket>>,
    outlets: HashMap<FaceId, Outlet>,
}

impl EventLoop {
    fn run(mut self, rx: Receiver<Event>) {
        let mut next_tick = Instant::now() + TICK;
        loop {
            let wait = next_tick.saturating_duration_since(Instant::now());
            match rx.recv_timeout(wait) {
                Ok(Event::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Ok(event) => self.handle(event),
                Err(RecvTimeoutError::Timeout) => {}
            }
            if Instant::now() >= next_tick {
                self.fwd.tick(self.clock.now_ms());
                next_tick = Instant::now() + TICK;
            }
        }
    }

    fn handle(&mut self, event: Event) {
        let now = self.clock.now_ms();
        let egress = match event {
            Event::Frame { face, frame } => self.fwd.on_frame(face, &frame, now),
            Event::Udp { from, frame } => {
                let face = self.fwd.udp_face(from);
                self.fwd.on_frame(face, &frame, now)
            }
            Event::Mgmt { line, reply } => {
                let _ = reply.send(self.fwd.mgmt(&line));
                return;
            }
            Event::Attach {
                label,
                outlet,
                reply,
            } => {
                let face = self.fwd.add_face(FaceRemote::Memory(label));
                self.outlets.insert(face, outlet);
                let _ = reply.send(face);
                return;
            }
            Event::Detach { face } => {
                self.fwd.remove_face(face);
                self.outlets.remove(&face);
                return;
            }
            Event::Stats { reply } => {
                let _ = reply.send(ForwarderStats::of(&self.fwd));
                return;
            }
            Event::Shutdown => return,
        };
        for e in egress {
            let frame = e.packet.encode();
            match self.fwd.face(e.face).map(|f| &f.remote) {
                Some(FaceRemote::Udp(addr)) => {
                    if let Some(sock) = &self.socket {
                        if let Err(err) = sock.send_to(&frame, addr) {
                            tracing::debug!(%addr, %err, "udp send failed");
                        }
                    }
                }
                Some(FaceRemote::Memory(_)) => {
                    if let Some(out) = self.outlets.get(&e.face) {
                        out.send(frame);
                    }
                }
                None => {}
            }
        }
    }
}

fn udp_receive(sock: Arc<UdpSocket>, tx: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    while !stop.load(Ordering::SeqCst) {
        match sock.recv_from(&mut buf) {
            Ok((n, from)) => {
                if tx
                    .send(Event::Udp {
                        from,
                        frame: buf[..n].to_vec(),
                    })
                    .is_err()
                {
                    break;
                }
            }
            Err(e) if is_timeout(&e) => {}
            // Linux reports ICMP errors from earlier sends here.
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
            Err(e) => {
                tracing::warn!(error = %e, "udp receive failed");
                thread::sleep(POLL);
            }
        }
    }
}

fn mgmt_accept(
    listener: TcpListener,
    tx: Sender<Event>,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<JoinHandle<()>>>>,
) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let tx = tx.clone();
                let stop = stop.clone();
                match thread::Builder::new()
                    .name("fwd-mgmt-conn".into())
                    .spawn(move || serve_mgmt_conn(stream, tx, stop))
                {
                    Ok(t) => {
                        let mut conns = conns.lock().unwrap();
                        conns.retain(|t| !t.is_finished());
                        conns.push(t);
                    }
                    Err(e) => tracing::warn!(error = %e, "cannot spawn mgmt connection"),
                }
            }
            Err(e) if is_timeout(&e) => thread::sleep(POLL),
            Err(e) => {
                tracing::warn!(error = %e, "mgmt accept failed");
                thread::sleep(POLL);
            }
        }
    }
}

fn serve_mgmt_conn(mut stream: TcpStream, tx: Sender<Event>, stop: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let mut pending = Vec::new();
    let mut buf = [0u8; 1024];
    while !stop.load(Ordering::SeqCst) {
        match stream.read(&mut buf) {
            Ok(0) => return,
            Ok(n) => pending.extend_from_slice(&buf[..n]),
            Err(e) if is_timeout(&e) => continue,
            Err(_) => return,
        }
        while let Some(pos) = pending.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = pending.drain(..=pos).collect();
            let line = String::from_utf8_lossy(&line).trim().to_string();
            if line.is_empty() {
                continue;
            }
            let (reply_tx, reply_rx) = mpsc::channel();
            if tx
                .send(Event::Mgmt {
                    line,
                    reply: reply_tx,
                })
                .is_err()
            {
                return;
            }
            let Ok(mut reply) = reply_rx.recv() else {
                return;
            };
            reply.push('\n');
            if stream.write_all(reply.as_bytes()).is_err() {
                return;
            }
        }
    }
}
