//! Reading netflow tuples from CSV files and framed sockets.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use sal_cluster::{connect_with_retry, Envelope, Ingest, RetryPolicy};
use sal_engine::NetflowTuple;

/// Malformed lines above this share of all lines abort the run.
pub const MALFORMED_LIMIT: f64 = 0.01;

/// Lines read before the malformed share is checked mid-stream.
const MALFORMED_SAMPLE: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSource {
    Csv(PathBuf),
    Stdin,
    /// Connect to `host:port` and read framed lines.
    Connect(String),
    /// Accept one connection on `host:port` and read framed lines.
    Listen(String),
}

impl FromStr for InputSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "-" {
            return Ok(InputSource::Stdin);
        }
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err("tcp:// input needs host:port".into());
            }
            return Ok(InputSource::Connect(addr.to_string()));
        }
        Ok(InputSource::Csv(PathBuf::from(s)))
    }
}

pub type Lines = Box<dyn Iterator<Item = io::Result<String>> + Send>;

struct FrameLines<R> {
    reader: R,
    done: bool,
}

impl<R: Read> Iterator for FrameLines<R> {
    type Item = io::Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match Envelope::read_from(&mut self.reader) {
            Ok(Some(Envelope::Tuple(line))) => Some(Ok(line)),
            Ok(Some(Envelope::Terminate)) | Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(io::Error::new(io::ErrorKind::InvalidData, e)))
            }
        }
    }
}

fn frames(stream: TcpStream) -> Lines {
    Box::new(FrameLines {
        reader: BufReader::new(stream),
        done: false,
    })
}

impl InputSource {
    pub fn open(&self) -> Result<Lines> {
        Ok(match self {
            InputSource::Csv(path) => {
                let f =
                    File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
                Box::new(BufReader::with_capacity(1 << 16, f).lines())
            }
            InputSource::Stdin => Box::new(BufReader::new(io::stdin()).lines()),
            InputSource::Connect(addr) => {
                frames(connect_with_retry(addr, &RetryPolicy::default())?)
            }
            InputSource::Listen(addr) => {
                let listener =
                    TcpListener::bind(addr).with_context(|| format!("cannot listen on {addr}"))?;
                eprintln!("listening on {}", listener.local_addr()?);
                let (stream, peer) = listener.accept()?;
                eprintln!("reading tuples from {peer}");
                frames(stream)
            }
        })
    }
}

/// Counters shared between the reader (on the ingest thread) and the
/// command that reports them.
#[derive(Debug, Default)]
pub struct IngestStats {
    pub lines: AtomicU64,
    pub malformed: AtomicU64,
    pub aborted: AtomicBool,
    pub first_malformed: Mutex<Option<String>>,
    pub io_error: Mutex<Option<String>>,
}

impl IngestStats {
    pub fn lines(&self) -> u64 {
        self.lines.load(Ordering::Relaxed)
    }

    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    fn over_limit(&self) -> bool {
        self.malformed() as f64 > MALFORMED_LIMIT * self.lines() as f64
    }

    /// Error for an aborted or failed read, if any.
    pub fn check(&self) -> Result<()> {
        if let Some(e) = self.io_error.lock().expect("lock").as_ref() {
            bail!("reading input: {e}");
        }
        if self.aborted.load(Ordering::Relaxed) || self.over_limit() {
            let first = self
                .first_malformed
                .lock()
                .expect("lock")
                .clone()
                .unwrap_or_default();
            bail!(
                "{} of {} input lines are malformed (limit {}%); first: {first}",
                self.malformed(),
                self.lines(),
                MALFORMED_LIMIT * 100.0
            );
        }
        Ok(())
    }
}

/// Tuples from CSV lines after a header row. Malformed lines are counted
/// and skipped; too many of them stop the stream.
pub struct TupleReader {
    lines: Lines,
    labeled: bool,
    empty: bool,
    stats: Arc<IngestStats>,
    line_no: u64,
}

impl TupleReader {
    /// Read and check the header. An input with no lines at all is an
    /// empty stream.
    pub fn new(mut lines: Lines) -> Result<Self> {
        let header = lines.next().transpose().context("reading header")?;
        let labeled = match &header {
            None => false,
            Some(h) => NetflowTuple::check_header(h).context("input header")?,
        };
        Ok(Self {
            lines,
            labeled,
            empty: header.is_none(),
            stats: Arc::new(IngestStats::default()),
            line_no: 1,
        })
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    /// Whether the input had no lines at all, not even a header.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn stats(&self) -> Arc<IngestStats> {
        self.stats.clone()
    }

    fn malformed(&self, detail: String) {
        self.stats.malformed.fetch_add(1, Ordering::Relaxed);
        let mut first = self.stats.first_malformed.lock().expect("lock");
        if first.is_none() {
            *first = Some(format!("line {}: {detail}", self.line_no));
        }
    }

    /// Next valid tuple with its verbatim line.
    pub fn next_tuple(&mut self) -> Option<(NetflowTuple, String)> {
        loop {
            if self.stats.aborted.load(Ordering::Relaxed) {
                return None;
            }
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    *self.stats.io_error.lock().expect("lock") = Some(e.to_string());
                    return None;
                }
            };
            self.line_no += 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let lines = self.stats.lines.fetch_add(1, Ordering::Relaxed) + 1;
            match NetflowTuple::from_csv_line(line) {
                Ok(t) if t.label.is_some() == self.labeled => return Some((t, line.to_string())),
                Ok(_) => self.malformed(format!("expected {} fields", 14 + self.labeled as usize)),
                Err(e) => self.malformed(e.to_string()),
            }
            if lines >= MALFORMED_SAMPLE && self.stats.over_limit() {
                self.stats.aborted.store(true, Ordering::Relaxed);
                return None;
            }
        }
    }
}

impl Iterator for TupleReader {
    type Item = Ingest;

    fn next(&mut self) -> Option<Ingest> {
        self.next_tuple().map(|(t, line)| Ingest {
            row: t.to_row(),
            label: t.label,
            line,
        })
    }
}
