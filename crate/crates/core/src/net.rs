//! Length-prefixed binary transport for running the store as a separate,
//! untrusted process.
//!
//! Every frame is `length u32 LE | opcode u8 | body` where `length` counts
//! the opcode byte plus the body. Bodies reuse the cipher-vector and
//! stored-record encodings.
//!
//! | opcode | direction | body |
//! |---|---|---|
//! | 1 upload | c→s | `n u32`, n stored records |
//! | 2 search | c→s | `k u32`, cipher vector |
//! | 3 hits   | s→c | `n u32`, n × (`distance f64`, stored record) |
//! | 4 error  | s→c | `code u8`, UTF-8 message |
//! | 5 ok     | s→c | `dim u32`, `count u64`, `n u32`, n × (`id u64`, `reason u8`) |
//!
//! An upload with zero records doubles as a status probe.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use parking_lot::Mutex;

use crate::codec::Reader;
use crate::error::{Error, RejectReason, Result};
use crate::scheme::CipherVector;
use crate::store::{IngestReport, RecordStore, SearchHit, SharedStore, StoredRecord, VectorStore};

pub const DEFAULT_MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Upload = 1,
    Search = 2,
    Hits = 3,
    Error = 4,
    Ok = 5,
}

impl Opcode {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Upload),
            2 => Some(Self::Search),
            3 => Some(Self::Hits),
            4 => Some(Self::Error),
            5 => Some(Self::Ok),
            _ => None,
        }
    }
}

const ERR_PARAM: u8 = 1;
const ERR_INPUT: u8 = 2;
const ERR_OTHER: u8 = 255;

/// Encodes one frame.
pub fn encode_frame(opcode: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + body.len());
    out.extend_from_slice(&((body.len() + 1) as u32).to_le_bytes());
    out.push(opcode);
    out.extend_from_slice(body);
    out
}

pub fn encode_upload(records: &[StoredRecord]) -> Vec<u8> {
    let mut body = (records.len() as u32).to_le_bytes().to_vec();
    for r in records {
        r.write_to(&mut body);
    }
    encode_frame(Opcode::Upload as u8, &body)
}

pub fn encode_search(query: &CipherVector, k: usize) -> Vec<u8> {
    let mut body = (k as u32).to_le_bytes().to_vec();
    query.write_to(&mut body);
    encode_frame(Opcode::Search as u8, &body)
}

pub fn encode_hits(hits: &[SearchHit]) -> Vec<u8> {
    let mut body = (hits.len() as u32).to_le_bytes().to_vec();
    for h in hits {
        body.extend_from_slice(&h.distance.to_le_bytes());
        h.record.write_to(&mut body);
    }
    encode_frame(Opcode::Hits as u8, &body)
}

fn encode_ok(dim: usize, report: &IngestReport) -> Vec<u8> {
    let mut body = (dim as u32).to_le_bytes().to_vec();
    body.extend_from_slice(&report.count.to_le_bytes());
    body.extend_from_slice(&(report.rejected.len() as u32).to_le_bytes());
    for (id, reason) in &report.rejected {
        body.extend_from_slice(&id.to_le_bytes());
        body.push(*reason as u8);
    }
    encode_frame(Opcode::Ok as u8, &body)
}

fn encode_error(err: &Error) -> Vec<u8> {
    let code = match err {
        Error::Param(_) => ERR_PARAM,
        Error::Input(_) => ERR_INPUT,
        _ => ERR_OTHER,
    };
    let msg = match err {
        Error::Param(m) | Error::Input(m) => m.clone(),
        other => other.to_string(),
    };
    let mut body = vec![code];
    body.extend_from_slice(msg.as_bytes());
    encode_frame(Opcode::Error as u8, &body)
}

fn decode_error(body: &[u8]) -> Error {
    let Some((&code, msg)) = body.split_first() else {
        return Error::Remote("empty error reply".into());
    };
    let msg = String::from_utf8_lossy(msg).into_owned();
    match code {
        ERR_PARAM => Error::Param(msg),
        ERR_INPUT => Error::Input(msg),
        _ => Error::Remote(msg),
    }
}

fn decode_hits(body: &[u8]) -> Result<Vec<SearchHit>> {
    let mut r = Reader::with_base(body, 5);
    let n = r.u32("hit count")? as usize;
    let mut hits = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let distance = r.f64("hit distance")?;
        let record = StoredRecord::read(&mut r)?;
        hits.push(SearchHit {
            id: record.id,
            distance,
            record,
        });
    }
    r.finish("hits")?;
    Ok(hits)
}

fn decode_ok(body: &[u8]) -> Result<(usize, IngestReport)> {
    let mut r = Reader::with_base(body, 5);
    let dim = r.u32("dim")? as usize;
    let count = r.u64("count")?;
    let n = r.u32("rejection count")? as usize;
    let mut rejected = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let id = r.u64("rejected id")?;
        let at = r.offset();
        let reason = RejectReason::from_u8(r.u8("reason")?)
            .ok_or_else(|| Error::format(at, "unknown rejection reason"))?;
        rejected.push((id, reason));
    }
    r.finish("ok reply")?;
    Ok((
        dim,
        IngestReport {
            accepted: 0,
            rejected,
            count,
        },
    ))
}

/// Reads exactly `buf.len()` bytes, retrying across read timeouts so the
/// caller can poll `stop`. Returns `Ok(false)` on EOF before the first byte.
fn read_full(stream: &mut TcpStream, buf: &mut [u8], stop: &AtomicBool) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match stream.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                if stop.load(Ordering::Relaxed) {
                    return Err(io::ErrorKind::Interrupted.into());
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub max_frame: usize,
    /// Poll interval for idle connections and the accept loop.
    pub poll: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            max_frame: DEFAULT_MAX_FRAME,
            poll: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Default)]
pub struct ServerStats {
    pub uploads: AtomicU64,
    pub searches: AtomicU64,
    pub errors: AtomicU64,
    pub connections: AtomicU64,
}

/// Store server. Holds no key material.
pub struct Server {
    listener: TcpListener,
    store: SharedStore,
    config: ServerConfig,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
}

impl Server {
    pub fn bind(
        store: SharedStore,
        addr: impl ToSocketAddrs,
        config: ServerConfig,
    ) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            listener,
            store,
            config,
            stop: Arc::new(AtomicBool::new(false)),
            stats: Arc::new(ServerStats::default()),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Setting the flag makes [`Server::run`] return after flushing.
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn stats(&self) -> Arc<ServerStats> {
        self.stats.clone()
    }

    /// Accepts connections until the stop flag is set, then waits for open
    /// connections and flushes the store file.
    pub fn run(self) -> Result<()> {
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        while !self.stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("connection from {peer}");
                    self.stats.connections.fetch_add(1, Ordering::Relaxed);
                    let store = self.store.clone();
                    let config = self.config.clone();
                    let stop = self.stop.clone();
                    let stats = self.stats.clone();
                    workers.push(thread::spawn(move || {
                        if let Err(e) = handle_connection(stream, &store, &config, &stop, &stats) {
                            log::debug!("connection {peer} closed: {e}");
                        }
                    }));
                    workers.retain(|w| !w.is_finished());
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(self.config.poll),
                Err(e) => return Err(e.into()),
            }
        }
        for w in workers {
            let _ = w.join();
        }
        log::info!(
            "shutting down: {} uploads, {} searches, {} errors over {} connections",
            self.stats.uploads.load(Ordering::Relaxed),
            self.stats.searches.load(Ordering::Relaxed),
            self.stats.errors.load(Ordering::Relaxed),
            self.stats.connections.load(Ordering::Relaxed),
        );
        self.store.flush()
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = self.stop_flag();
        let stats = self.stats();
        let join = thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            stop,
            stats,
            join: Some(join),
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
    join: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &ServerStats {
        &self.stats
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.stop.store(true, Ordering::Relaxed);
        match self.join.take() {
            Some(j) => j
                .join()
                .map_err(|_| Error::Transport("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(j) = self.join.take() {
            let _ = j.join();
        }
    }
}

/// Loads (or, with `create_dim`, creates) the store at `store_path` and
/// serves it on `addr` until `stop` is set.
pub fn serve(
    store_path: &Path,
    addr: impl ToSocketAddrs,
    create_dim: Option<usize>,
    stop: Arc<AtomicBool>,
) -> Result<()> {
    let store = match (store_path.exists(), create_dim) {
        (true, _) => VectorStore::open(store_path)?,
        (false, Some(dim)) => VectorStore::create(store_path, dim)?,
        (false, None) => {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::NotFound,
                format!("store file {} not found", store_path.display()),
            )))
        }
    };
    let mut server = Server::bind(SharedStore::new(store), addr, ServerConfig::default())?;
    server.stop = stop;
    log::info!(
        "serving {} on {}",
        store_path.display(),
        server.local_addr()?
    );
    server.run()
}

fn handle_connection(
    mut stream: TcpStream,
    store: &SharedStore,
    config: &ServerConfig,
    stop: &AtomicBool,
    stats: &ServerStats,
) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(config.poll))?;
    stream.set_nodelay(true)?;
    loop {
        let mut len = [0u8; 4];
        if !read_full(&mut stream, &mut len, stop)? {
            return Ok(());
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > config.max_frame {
            stats.errors.fetch_add(1, Ordering::Relaxed);
            let _ = stream.shutdown(Shutdown::Both);
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("frame of {len} bytes exceeds limit"),
            ));
        }
        let mut frame = vec![0u8; len];
        if !read_full(&mut stream, &mut frame, stop)? && len > 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        let reply = dispatch(&frame, store, stats);
        stream.write_all(&reply)?;
    }
}

fn dispatch(frame: &[u8], store: &SharedStore, stats: &ServerStats) -> Vec<u8> {
    let result = match frame.split_first() {
        None => Err(Error::Input("empty frame".into())),
        Some((&op, body)) => match Opcode::from_u8(op) {
            Some(Opcode::Upload) => {
                stats.uploads.fetch_add(1, Ordering::Relaxed);
                handle_upload(body, store)
            }
            Some(Opcode::Search) => {
                stats.searches.fetch_add(1, Ordering::Relaxed);
                handle_search(body, store)
            }
            _ => Err(Error::Input(format!("unsupported opcode {op}"))),
        },
    };
    result.unwrap_or_else(|e| {
        stats.errors.fetch_add(1, Ordering::Relaxed);
        encode_error(&e)
    })
}

fn handle_upload(body: &[u8], store: &SharedStore) -> Result<Vec<u8>> {
    let mut r = Reader::with_base(body, 5);
    let n = r.u32("record count")? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        records.push(StoredRecord::read(&mut r)?);
    }
    r.finish("upload")?;
    let report = store.ingest(records)?;
    Ok(encode_ok(store.dim()?, &report))
}

fn handle_search(body: &[u8], store: &SharedStore) -> Result<Vec<u8>> {
    let mut r = Reader::with_base(body, 5);
    let k = r.u32("k")? as usize;
    let query = CipherVector::read(&mut r)?;
    r.finish("search")?;
    Ok(encode_hits(&store.topk_search(&query, k)?))
}

/// Client for a remote store. Connections are pooled, so one instance can
/// be shared across threads.
pub struct RemoteStore {
    addr: SocketAddr,
    timeout: Duration,
    max_frame: usize,
    pool: Mutex<Vec<TcpStream>>,
}

impl RemoteStore {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        Self::with_timeout(addr, Duration::from_secs(30))
    }

    /// Resolves `addr` and verifies it is reachable.
    pub fn with_timeout(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("resolving address: {e}")))?
            .next()
            .ok_or_else(|| Error::Transport("address resolved to nothing".into()))?;
        let client = Self {
            addr,
            timeout,
            max_frame: DEFAULT_MAX_FRAME,
            pool: Mutex::new(Vec::new()),
        };
        let conn = client.open()?;
        client.pool.lock().push(conn);
        Ok(client)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    fn open(&self) -> Result<TcpStream> {
        let s = TcpStream::connect_timeout(&self.addr, self.timeout)
            .map_err(|e| Error::Transport(format!("connecting to {}: {e}", self.addr)))?;
        s.set_read_timeout(Some(self.timeout))
            .and_then(|_| s.set_write_timeout(Some(self.timeout)))
            .and_then(|_| s.set_nodelay(true))
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(s)
    }

    /// Sends one frame and returns the reply `(opcode, body)`.
    pub fn round_trip(&self, frame: &[u8]) -> Result<(u8, Vec<u8>)> {
        let pooled = self.pool.lock().pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => self.open()?,
        };
        let transport = |e: io::Error| Error::Transport(format!("{}: {e}", self.addr));
        conn.write_all(frame).map_err(transport)?;
        let mut len = [0u8; 4];
        conn.read_exact(&mut len).map_err(transport)?;
        let len = u32::from_le_bytes(len) as usize;
        if len == 0 || len > self.max_frame {
            return Err(Error::Transport(format!("bad reply frame length {len}")));
        }
        let mut body = vec![0u8; len];
        conn.read_exact(&mut body).map_err(transport)?;
        self.pool.lock().push(conn);
        let op = body.remove(0);
        Ok((op, body))
    }

    fn status(&self) -> Result<(usize, IngestReport)> {
        self.upload(&[])
    }

    fn upload(&self, records: &[StoredRecord]) -> Result<(usize, IngestReport)> {
        let (op, body) = self.round_trip(&encode_upload(records))?;
        match Opcode::from_u8(op) {
            Some(Opcode::Ok) => decode_ok(&body),
            Some(Opcode::Error) => Err(decode_error(&body)),
            _ => Err(Error::Transport(format!("unexpected reply opcode {op}"))),
        }
    }
}

impl RecordStore for RemoteStore {
    fn dim(&self) -> Result<usize> {
        Ok(self.status()?.0)
    }

    fn count(&self) -> Result<u64> {
        Ok(self.status()?.1.count)
    }

    fn ingest(&self, records: Vec<StoredRecord>) -> Result<IngestReport> {
        let n = records.len();
        let (_, mut report) = self.upload(&records)?;
        report.accepted = n - report.rejected.len();
        Ok(report)
    }

    fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>> {
        if k > u32::MAX as usize {
            return Err(Error::Param(format!(
                "k = {k} too large for the wire format"
            )));
        }
        let (op, body) = self.round_trip(&encode_search(query, k))?;
        match Opcode::from_u8(op) {
            Some(Opcode::Hits) => decode_hits(&body),
            Some(Opcode::Error) => Err(decode_error(&body)),
            _ => Err(Error::Transport(format!("unexpected reply opcode {op}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_length_counts_opcode() {
        let f = encode_frame(7, b"abc");
        assert_eq!(&f[..4], &4u32.to_le_bytes());
        assert_eq!(f[4], 7);
        assert_eq!(&f[5..], b"abc");
    }

    #[test]
    fn error_codes_round_trip() {
        let f = encode_error(&Error::Input("bad dim".into()));
        assert_eq!(f[4], Opcode::Error as u8);
        assert!(matches!(decode_error(&f[5..]), Error::Input(m) if m == "bad dim"));
        let f = encode_error(&Error::Param("k".into()));
        assert!(matches!(decode_error(&f[5..]), Error::Param(_)));
        let f = encode_error(&Error::format(3, "x"));
        assert!(matches!(decode_error(&f[5..]), Error::Remote(_)));
    }

    #[test]
    fn ok_reply_round_trip() {
        let report = IngestReport {
            accepted: 0,
            rejected: vec![
                (5, RejectReason::DuplicateId),
                (9, RejectReason::DimensionMismatch),
            ],
            count: 77,
        };
        let f = encode_ok(12, &report);
        let (dim, back) = decode_ok(&f[5..]).unwrap();
        assert_eq!(dim, 12);
        assert_eq!(back, report);
    }

    #[test]
    fn connection_refused_is_a_transport_error() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        drop(l);
        assert!(matches!(
            RemoteStore::with_timeout(addr, Duration::from_millis(500)),
            Err(Error::Transport(_))
        ));
    }
}
