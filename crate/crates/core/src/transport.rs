//! Packet transports between nodes.
//!
//! An [`Outlet`] is the sending half of a one-way channel into some node.
//! Memory links are lossless FIFO outlets, optionally wrapped with a fixed
//! delivery delay or a one-shot corruption fault. [`Link`] is the consumer's
//! view of a bidirectional attachment (a memory [`Endpoint`] or a UDP
//! socket).

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Largest datagram we ever expect: one full segment plus headers.
pub const MAX_DATAGRAM: usize = 65_535;

/// Sending half of a packet channel. Returns `false` once the receiver is gone.
#[derive(Clone)]
pub struct Outlet(Arc<dyn Fn(Vec<u8>) -> bool + Send + Sync>);

impl Outlet {
    pub fn new(f: impl Fn(Vec<u8>) -> bool + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn channel(tx: Sender<Vec<u8>>) -> Self {
        Self::new(move |frame| tx.send(frame).is_ok())
    }

    /// An outlet that delivers nowhere.
    pub fn dead() -> Self {
        Self::new(|_| false)
    }

    pub fn send(&self, frame: Vec<u8>) -> bool {
        (self.0)(frame)
    }

    /// Delivers every frame `delay` after it was sent, preserving order.
    ///
    /// A worker thread holds the frames; it exits once every clone of the
    /// returned outlet has been dropped.
    pub fn delayed(self, delay: Duration) -> Outlet {
        if delay.is_zero() {
            return self;
        }
        let (tx, rx) = mpsc::channel::<(Instant, Vec<u8>)>();
        thread::Builder::new()
            .name("delay-line".into())
            .spawn(move || {
                while let Ok((due, frame)) = rx.recv() {
                    let now = Instant::now();
                    if due > now {
                        thread::sleep(due - now);
                    }
                    self.send(frame);
                }
            })
            .expect("spawn delay line");
        Outlet::new(move |frame| tx.send((Instant::now() + delay, frame)).is_ok())
    }

    /// Applies queued faults from `faults` to frames passing through.
    pub fn with_faults(self, faults: FaultInjector) -> Outlet {
        Outlet::new(move |mut frame| {
            if faults.apply(&mut frame) {
                self.send(frame)
            } else {
                true
            }
        })
    }
}

impl fmt::Debug for Outlet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Outlet")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// XOR the byte at `offset` (modulo frame length) of the next Data frame.
    CorruptData { offset: usize },
    /// Silently discard the next Data frame.
    DropData,
}

/// Shared queue of one-shot faults for one link direction.
#[derive(Debug, Clone, Default)]
pub struct FaultInjector {
    queue: Arc<Mutex<VecDeque<Fault>>>,
    applied: Arc<Mutex<Vec<Fault>>>,
}

impl FaultInjector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, fault: Fault) {
        self.queue.lock().unwrap().push_back(fault);
    }

    /// Faults that have already hit a frame.
    pub fn applied(&self) -> Vec<Fault> {
        self.applied.lock().unwrap().clone()
    }

    // Returns false when the frame must be discarded.
    fn apply(&self, frame: &mut [u8]) -> bool {
        if frame.first() != Some(&0x06) {
            return true;
        }
        let Some(fault) = self.queue.lock().unwrap().pop_front() else {
            return true;
        };
        self.applied.lock().unwrap().push(fault);
        match fault {
            Fault::CorruptData { offset } => {
                let i = offset % frame.len();
                frame[i] ^= 0xFF;
                true
            }
            Fault::DropData => false,
        }
    }
}

/// A bidirectional packet attachment as seen by an application.
pub trait Link: Send {
    /// Best effort: a dead peer swallows frames like a network would.
    fn send(&mut self, frame: &[u8]) -> io::Result<()>;
    /// Waits up to `timeout` for the next frame.
    fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

/// In-process side of a memory face.
#[derive(Debug)]
pub struct Endpoint {
    rx: Receiver<Vec<u8>>,
    out: Outlet,
}

impl Endpoint {
    pub fn new(rx: Receiver<Vec<u8>>, out: Outlet) -> Self {
        Self { rx, out }
    }

    /// Two endpoints wired back to back.
    pub fn pair() -> (Endpoint, Endpoint) {
        let (a_tx, a_rx) = mpsc::channel();
        let (b_tx, b_rx) = mpsc::channel();
        (
            Endpoint::new(a_rx, Outlet::channel(b_tx)),
            Endpoint::new(b_rx, Outlet::channel(a_tx)),
        )
    }

    pub fn outlet(&self) -> &Outlet {
        &self.out
    }
}

impl Link for Endpoint {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        self.out.send(frame.to_vec());
        Ok(())
    }

    fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        match self.rx.recv_timeout(timeout) {
            Ok(frame) => Ok(Some(frame)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                // The peer is gone; behave like a silent network.
                thread::sleep(timeout);
                Ok(None)
            }
        }
    }
}

/// A UDP socket connected to one remote (typically the gateway).
#[derive(Debug)]
pub struct UdpLink {
    socket: UdpSocket,
}

impl UdpLink {
    pub fn connect(remote: impl ToSocketAddrs) -> io::Result<Self> {
        let remote = remote
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let bind: SocketAddr = if remote.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind)?;
        socket.connect(remote)?;
        Ok(Self { socket })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl Link for UdpLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        match self.socket.send(frame) {
            Ok(_) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        let deadline = Instant::now() + timeout;
        let mut buf = vec![0u8; MAX_DATAGRAM];
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.socket
                .set_read_timeout(Some(left.max(Duration::from_millis(1))))?;
            match self.socket.recv(&mut buf) {
                Ok(n) => return Ok(Some(buf[..n].to_vec())),
                Err(e) if is_timeout(&e) => return Ok(None),
                // ICMP port unreachable from an earlier send; keep waiting.
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

pub(crate) fn is_timeout(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_pair_is_fifo() {
        let (mut a, mut b) = Endpoint::pair();
        for i in 0..10u8 {
            a.send(&[i]).unwrap();
        }
        for i in 0..10u8 {
            assert_eq!(b.recv_timeout(Duration::from_millis(100)).unwrap(), Some(vec![i]));
        }
        assert_eq!(b.recv_timeout(Duration::from_millis(5)).unwrap(), None);
    }

    #[test]
    fn delayed_outlet_holds_frames_and_keeps_order() {
        let (tx, rx) = mpsc::channel();
        let out = Outlet::channel(tx).delayed(Duration::from_millis(30));
        let t0 = Instant::now();
        out.send(vec![1]);
        out.send(vec![2]);
        assert_eq!(rx.recv().unwrap(), vec![1]);
        assert!(t0.elapsed() >= Duration::from_millis(30));
        assert_eq!(rx.recv().unwrap(), vec![2]);
    }

    #[test]
    fn faults_hit_only_data_frames() {
        let (tx, rx) = mpsc::channel();
        let faults = FaultInjector::new();
        let out = Outlet::channel(tx).with_faults(faults.clone());
        faults.push(Fault::CorruptData { offset: 1 });
        faults.push(Fault::DropData);
        out.send(vec![0x05, 0, 0]);
        out.send(vec![0x06, 0, 0]);
        out.send(vec![0x06, 1, 1]);
        out.send(vec![0x06, 2, 2]);
        let got: Vec<Vec<u8>> = rx.try_iter().collect();
        assert_eq!(got, vec![vec![0x05, 0, 0], vec![0x06, 0xFF, 0], vec![0x06, 2, 2]]);
        assert_eq!(faults.applied().len(), 2);
    }

    #[test]
    fn dead_peer_looks_like_silence() {
        let (mut a, b) = Endpoint::pair();
        drop(b);
        a.send(&[1]).unwrap();
        let t0 = Instant::now();
        assert_eq!(a.recv_timeout(Duration::from_millis(20)).unwrap(), None);
        assert!(t0.elapsed() >= Duration::from_millis(20));
    }

    #[test]
    fn udp_link_round_trip() {
        let server = UdpSocket::bind("127.0.0.1:0").unwrap();
        let mut link = UdpLink::connect(server.local_addr().unwrap()).unwrap();
        link.send(b"ping").unwrap();
        let mut buf = [0u8; 16];
        let (n, from) = server.recv_from(&mut buf).unwrap();
        assert_eq!(&buf[..n], b"ping");
        server.send_to(b"pong", from).unwrap();
        assert_eq!(
            link.recv_timeout(Duration::from_secs(1)).unwrap(),
            Some(b"pong".to_vec())
        );
        assert_eq!(link.recv_timeout(Duration::from_millis(10)).unwrap(), None);
    }
}
