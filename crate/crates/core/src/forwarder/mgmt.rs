//! Line-oriented management protocol.
//!
//! ```text
//! face add udp <host:port>              -> ok <faceId>
//! face list                             -> face=<id> kind=<k> remote=<r> ... ok
//! route add <name-uri> <faceId> [cost]  -> ok
//! route del <name-uri> <faceId>         -> ok
//! stats                                 -> face=<id> kind=<k> in_interests=.. ... ok
//! ```
//!
//! Failures reply `err <reason>`. A reply is complete once a line starting
//! with `ok` or `err` has been read.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use crate::tables::FaceId;
use crate::wire::Name;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    FaceAddUdp(String),
    FaceList,
    RouteAdd { prefix: Name, face: FaceId, cost: u32 },
    RouteDel { prefix: Name, face: FaceId },
    Stats,
}

impl Command {
    /// Parses one line; the error is the `err` reason token.
    pub fn parse(line: &str) -> Result<Command, &'static str> {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["face", "add", "udp", addr] => Ok(Command::FaceAddUdp(addr.to_string())),
            ["face", "list"] => Ok(Command::FaceList),
            ["route", "add", prefix, face] => Ok(Command::RouteAdd {
                prefix: parse_name(prefix)?,
                face: parse_face(face)?,
                cost: 0,
            }),
            ["route", "add", prefix, face, cost] => Ok(Command::RouteAdd {
                prefix: parse_name(prefix)?,
                face: parse_face(face)?,
                cost: cost.parse().map_err(|_| "bad-cost")?,
            }),
            ["route", "del", prefix, face] => Ok(Command::RouteDel {
                prefix: parse_name(prefix)?,
                face: parse_face(face)?,
            }),
            ["stats"] => Ok(Command::Stats),
            _ => Err("unknown-command"),
        }
    }
}

fn parse_name(s: &str) -> Result<Name, &'static str> {
    Name::from_uri(s).map_err(|_| "malformed-name")
}

fn parse_face(s: &str) -> Result<FaceId, &'static str> {
    s.parse().map(FaceId).map_err(|_| "unknown-face")
}

/// True for the line that terminates a reply.
pub fn is_final_line(line: &str) -> bool {
    line == "ok" || line.starts_with("ok ") || line == "err" || line.starts_with("err ")
}

/// A management connection to a forwarder.
pub struct MgmtClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl MgmtClient {
    pub fn connect(addr: SocketAddr) -> io::Result<Self> {
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends one command and returns every reply line, final line last.
    pub fn request(&mut self, line: &str) -> io::Result<Vec<String>> {
        self.writer.write_all(line.trim_end().as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut lines = Vec::new();
        loop {
            let mut buf = String::new();
            if self.reader.read_line(&mut buf)? == 0 {
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "management connection closed",
                ));
            }
            let l = buf.trim_end().to_string();
            let done = is_final_line(&l);
            lines.push(l);
            if done {
                return Ok(lines);
            }
        }
    }
}

/// Parses the final line of a reply: `Ok(Some(n))` for `ok <n>`, `Ok(None)`
/// for bare `ok`, `Err(reason)` for `err <reason>`.
pub fn parse_final(line: &str) -> Result<Option<String>, String> {
    if let Some(rest) = line.strip_prefix("err") {
        return Err(rest.trim().to_string());
    }
    match line.strip_prefix("ok") {
        Some(rest) if rest.trim().is_empty() => Ok(None),
        Some(rest) => Ok(Some(rest.trim().to_string())),
        None => Err(format!("unexpected reply {line:?}")),
    }
}
