//! Server-side store of encrypted records with exact top-k search.
//!
//! The store only ever sees [`CipherVector`]s and [`SealedPayload`]s and
//! has no access to key material. Search is a brute-force scan over a
//! contiguous ciphertext matrix; ordering is by squared L2 with ties
//! broken by ascending id, and reported distances are L2.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "PPRG" | version u8 | dim u32 | count u64
//! count x ( id u64 | cipher vector | payload_len u32 | sealed payload )
//! ```

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;

use crate::codec::Reader;
use crate::error::{Error, RejectReason, Result};
use crate::payload::SealedPayload;
use crate::scheme::CipherVector;

pub const STORE_MAGIC: &[u8; 4] = b"PPRG";
pub const STORE_VERSION: u8 = 1;
pub const STORE_HEADER_LEN: usize = 4 + 1 + 4 + 8;
const COUNT_OFFSET: u64 = 9;

/// Below this many records the scan stays on the calling thread.
const PARALLEL_THRESHOLD: usize = 8192;
const SHARD: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredRecord {
    pub id: u64,
    pub embedding: CipherVector,
    pub payload: SealedPayload,
}

impl StoredRecord {
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.id.to_le_bytes());
        self.embedding.write_to(out);
        out.extend_from_slice(&(self.payload.encoded_len() as u32).to_le_bytes());
        self.payload.write_to(out);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let id = r.u64("record id")?;
        let embedding = CipherVector::read(r)?;
        let len = r.u32("payload length")? as usize;
        let base = r.offset();
        let payload = SealedPayload::parse(r.take(len, "payload")?, base)?;
        Ok(Self {
            id,
            embedding,
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: u64,
    /// L2 distance in ciphertext space.
    pub distance: f64,
    pub record: StoredRecord,
}

/// Outcome of one ingest call. Valid records are committed even when
/// others in the same batch are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<(u64, RejectReason)>,
    /// Store size after the call.
    pub count: u64,
}

impl IngestReport {
    /// Converts the first rejection into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.rejected.first() {
            Some(&(id, reason)) => Err(Error::Rejected { id, reason }),
            None => Ok(self),
        }
    }
}

/// The ingest/search contract shared by local and remote stores.
pub trait RecordStore: Send + Sync {
    fn dim(&self) -> Result<usize>;
    fn count(&self) -> Result<u64>;
    fn ingest(&self, records: Vec<StoredRecord>) -> Result<IngestReport>;
    fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>>;
}

#[derive(Debug)]
pub struct VectorStore {
    dim: usize,
    records: Vec<StoredRecord>,
    /// Row-major copy of every ciphertext, `records.len() * dim`.
    matrix: Vec<f64>,
    ids: HashSet<u64>,
    path: Option<PathBuf>,
}

impl VectorStore {
    /// In-memory store.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param("store dimension must be at least 1".into()));
        }
        Ok(Self {
            dim,
            records: Vec::new(),
            matrix: Vec::new(),
            ids: HashSet::new(),
            path: None,
        })
    }

    /// Creates an empty store file and attaches to it. Fails if the file exists.
    pub fn create(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let mut store = Self::new(dim)?;
        let path = path.as_ref();
        let mut f = OpenOptions::new().write(true).create_new(true).open(path)?;
        f.write_all(&store.header_bytes())?;
        f.sync_all()?;
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    /// Loads a store file and attaches to it so later ingests are appended.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut store = Self::load(&path)?;
        store.path = Some(path.as_ref().to_path_buf());
        Ok(store)
    }

    /// Loads a store file without attaching.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(STORE_MAGIC)?;
        let version = r.u8("store version")?;
        if version != STORE_VERSION {
            return Err(Error::Version {
                what: "store",
                found: version,
                expected: STORE_VERSION,
            });
        }
        let at = r.offset();
        let dim = r.u32("store dim")? as usize;
        if dim == 0 {
            return Err(Error::format(at, "zero store dimension"));
        }
        let count = r.u64("record count")?;
        let mut store = Self::new(dim)?;
        for _ in 0..count {
            let at = r.offset();
            let rec = StoredRecord::read(&mut r)?;
            if rec.embedding.dim() != dim {
                return Err(Error::format(
                    at,
                    format!(
                        "record {} has dim {}, store dim {dim}",
                        rec.id,
                        rec.embedding.dim()
                    ),
                ));
            }
            if !store.ids.insert(rec.id) {
                return Err(Error::format(at, format!("duplicate record id {}", rec.id)));
            }
            store.matrix.extend_from_slice(&rec.embedding.c);
            store.records.push(rec);
        }
        r.finish("store records")?;
        Ok(store)
    }

    fn header_bytes(&self) -> [u8; STORE_HEADER_LEN] {
        let mut h = [0u8; STORE_HEADER_LEN];
        h[..4].copy_from_slice(STORE_MAGIC);
        h[4] = STORE_VERSION;
        h[5..9].copy_from_slice(&(self.dim as u32).to_le_bytes());
        h[9..].copy_from_slice(&(self.records.len() as u64).to_le_bytes());
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes().to_vec();
        for rec in &self.records {
            rec.write_to(&mut out);
        }
        out
    }

    /// Writes the whole store to `path` (via a temporary sibling and rename).
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoredRecord] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&StoredRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Validates and commits `records`; rejected ones are reported by id.
    /// When attached to a file the accepted records are appended and synced
    /// before they become visible.
    pub fn ingest(&mut self, records: Vec<StoredRecord>) -> Result<IngestReport> {
        let mut batch_ids = HashSet::new();
        let mut accepted = Vec::with_capacity(records.len());
        let mut rejected = Vec::new();
        for rec in records {
            if rec.embedding.dim() != self.dim {
                rejected.push((rec.id, RejectReason::DimensionMismatch));
            } else if self.ids.contains(&rec.id) || !batch_ids.insert(rec.id) {
                rejected.push((rec.id, RejectReason::DuplicateId));
            } else {
                accepted.push(rec);
            }
        }

        if !accepted.is_empty() {
            if let Some(path) = &self.path {
                let mut buf = Vec::new();
                for rec in &accepted {
                    rec.write_to(&mut buf);
                }
                let new_count = (self.records.len() + accepted.len()) as u64;
                let mut f = OpenOptions::new().write(true).open(path)?;
                f.seek(SeekFrom::End(0))?;
                f.write_all(&buf)?;
                f.seek(SeekFrom::Start(COUNT_OFFSET))?;
                f.write_all(&new_count.to_le_bytes())?;
                f.sync_data()?;
            }
        }

        let n = accepted.len();
        for rec in accepted {
            self.ids.insert(rec.id);
            self.matrix.extend_from_slice(&rec.embedding.c);
            self.records.push(rec);
        }
        Ok(IngestReport {
            accepted: n,
            rejected,
            count: self.records.len() as u64,
        })
    }

    /// The `min(k, m)` records nearest to `query` in ciphertext space.
    pub fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::Input(format!(
                "query dim {} does not match store dim {}",
                query.dim(),
                self.dim
            )));
        }
        let m = self.records.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut scored = self.squared_distances(&query.c);
        let k = k.min(m);
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.records[a.1].id.cmp(&self.records[b.1].id))
        };
        if k < m {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(d2, i)| {
                let record = self.records[i].clone();
                SearchHit {
                    id: record.id,
                    distance: d2.sqrt(),
                    record,
                }
            })
            .collect())
    }

    fn squared_distances(&self, q: &[f64]) -> Vec<(f64, usize)> {
        let dim = self.dim;
        let m = self.records.len();
        let mut out = vec![(0.0, 0); m];
        let fill = |start: usize, chunk: &mut [(f64, usize)]| {
            for (j, slot) in chunk.iter_mut().enumerate() {
                let i = start + j;
                let row = &self.matrix[i * dim..(i + 1) * dim];
                *slot = (squared_l2(row, q), i);
            }
        };
        if m < PARALLEL_THRESHOLD {
            fill(0, &mut out);
        } else {
            out.par_chunks_mut(SHARD)
                .enumerate()
                .for_each(|(s, chunk)| fill(s * SHARD, chunk));
        }
        out
    }
}

/// Squared L2 with four independent accumulators. The summation order is
/// fixed, so results do not depend on how the scan is sharded.
#[inline]
pub fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A [`VectorStore`] behind a reader-writer lock: many concurrent searches
/// or one ingest at a time.
#[derive(Debug, Clone)]
pub struct SharedStore(Arc<RwLock<VectorStore>>);

impl SharedStore {
    pub fn new(store: VectorStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> parking_lot::RwLockReadGuard<'_, VectorStore> {
        self.0.read()
    }

    /// Rewrites the attached file from memory, if any.
    pub fn flush(&self) -> Result<()> {
        let guard = self.0.read();
        match guard.path() {
            Some(p) => guard.persist(p),
            None => Ok(()),
        }
    }
}

impl RecordStore for SharedStore {
    fn dim(&self) -> Result<usize> {
        Ok(self.0.read().dim())
    }

    fn count(&self) -> Result<u64> {
        Ok(self.0.read().len() as u64)
    }

    fn ingest(&self, records: Vec<StoredRecord>) -> Result<IngestReport> {
        self.0.write().ingest(records)
    }

    fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>> {
        self.0.read().topk_search(query, k)
    }
}
