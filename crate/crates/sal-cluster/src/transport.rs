//! Message plumbing between nodes: bounded in-process queues, or framed
//! TCP connections feeding the same queues.

use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use crossbeam_channel::Sender;
use sal_engine::Row;

use crate::envelope::{write_tuple, Envelope, FrameError};
use crate::error::ClusterError;

/// What a node's worker receives.
#[derive(Debug)]
pub(crate) enum Inbound {
    /// A tuple kept by its ingesting node, never serialized.
    Row(Row),
    /// A tuple pushed by a peer, as its CSV line.
    Line(String),
    /// One sender has finished.
    Terminate,
    /// A sender's connection ended without TERMINATE.
    Broken(ClusterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 12,
            initial_backoff: Duration::from_millis(20),
            max_backoff: Duration::from_secs(1),
        }
    }
}

/// Connect to `addr`, retrying with exponential backoff.
pub fn connect_with_retry(addr: &str, policy: &RetryPolicy) -> Result<TcpStream, ClusterError> {
    let mut delay = policy.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if attempt >= policy.attempts.max(1) => {
                return Err(ClusterError::Unreachable {
                    addr: addr.to_string(),
                    attempts: attempt,
                    last: e,
                })
            }
            Err(_) => {
                thread::sleep(delay);
                delay = (delay * 2).min(policy.max_backoff);
            }
        }
    }
}

/// The sending half a router uses for one peer.
pub(crate) enum Outbox {
    Queue(Sender<Inbound>),
    Tcp {
        peer: String,
        writer: BufWriter<TcpStream>,
    },
}

impl Outbox {
    pub(crate) fn push(&mut self, line: &str) -> Result<(), ClusterError> {
        match self {
            Outbox::Queue(tx) => {
                Envelope::tuple(line).map_err(|source| ClusterError::Transport {
                    peer: "local queue".into(),
                    source,
                })?;
                // A closed queue means the receiving node already failed;
                // its error is reported when it is joined.
                let _ = tx.send(Inbound::Line(line.to_string()));
                Ok(())
            }
            Outbox::Tcp { peer, writer } => {
                write_tuple(writer, line).map_err(|source| ClusterError::Transport {
                    peer: peer.clone(),
                    source,
                })
            }
        }
    }

    pub(crate) fn terminate(&mut self) -> Result<(), ClusterError> {
        match self {
            Outbox::Queue(tx) => {
                let _ = tx.send(Inbound::Terminate);
                Ok(())
            }
            Outbox::Tcp { peer, writer } => Envelope::Terminate
                .write_to(writer)
                .and_then(|_| Ok(writer.flush()?))
                .map_err(|source| ClusterError::Transport {
                    peer: peer.clone(),
                    source,
                }),
        }
    }
}

/// Forward frames from one accepted connection into `inbox` until
/// TERMINATE or the connection ends.
pub(crate) fn pump(stream: TcpStream, inbox: &Sender<Inbound>) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "peer".into());
    let mut r = BufReader::with_capacity(1 << 16, stream);
    loop {
        let msg = match Envelope::read_from(&mut r) {
            Ok(Some(Envelope::Tuple(line))) => Inbound::Line(line),
            Ok(Some(Envelope::Terminate)) => Inbound::Terminate,
            Ok(None) => Inbound::Broken(ClusterError::Transport {
                peer: peer.clone(),
                source: FrameError::Io(std::io::ErrorKind::UnexpectedEof.into()),
            }),
            Err(source) => Inbound::Broken(ClusterError::Transport {
                peer: peer.clone(),
                source,
            }),
        };
        let last = !matches!(msg, Inbound::Line(_));
        if inbox.send(msg).is_err() || last {
            return;
        }
    }
}

/// Accept exactly `count` connections on `listener`, giving up when
/// `abort` is raised.
pub(crate) fn accept_n(
    listener: &TcpListener,
    count: usize,
    abort: &std::sync::atomic::AtomicBool,
) -> std::io::Result<Vec<TcpStream>> {
    listener.set_nonblocking(true)?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                out.push(s);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if abort.load(std::sync::atomic::Ordering::Relaxed) {
                    return Err(std::io::Error::other("cluster run aborted"));
                }
                thread::sleep(Duration::from_millis(2));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_peer_fails_after_retries() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        drop(listener);
        let policy = RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(5),
            max_backoff: Duration::from_millis(10),
        };
        match connect_with_retry(&addr, &policy) {
            Err(ClusterError::Unreachable { attempts: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn late_listener_is_reached() {
        let probe = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = probe.local_addr().unwrap();
        drop(probe);
        let t = thread::spawn(move || {
            thread::sleep(Duration::from_millis(60));
            let l = TcpListener::bind(addr).unwrap();
            l.accept().unwrap();
        });
        connect_with_retry(&addr.to_string(), &RetryPolicy::default()).unwrap();
        t.join().unwrap();
    }

    #[test]
    fn pump_forwards_until_terminate() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let sender = thread::spawn(move || {
            let mut w = TcpStream::connect(addr).unwrap();
            for l in ["a,b", "c,d"] {
                Envelope::tuple(l).unwrap().write_to(&mut w).unwrap();
            }
            Envelope::Terminate.write_to(&mut w).unwrap();
        });
        let (s, _) = listener.accept().unwrap();
        let (tx, rx) = crossbeam_channel::bounded(10);
        pump(s, &tx);
        sender.join().unwrap();
        let got: Vec<String> = rx
            .try_iter()
            .map(|m| match m {
                Inbound::Line(l) => l,
                Inbound::Terminate => "TERMINATE".into(),
                other => panic!("{other:?}"),
            })
            .collect();
        assert_eq!(got, ["a,b", "c,d", "TERMINATE"]);
    }
}
