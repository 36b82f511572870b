//! Client-side retrieval pipeline.
//!
//! * Phase 1 normalizes and encrypts document embeddings, seals the texts,
//!   and uploads the records.
//! * Phase 2 perturbs the query, sizes the expanded retrieval `k'`, sends
//!   the encrypted query, then decrypts and reranks the candidates locally
//!   against the original (unperturbed) query.
//! * Phase 3 assembles the generation prompt.
//!
//! Only ciphertexts, sealed payloads, record ids, `k'` and the encrypted
//! query cross to the store.

use std::sync::Arc;

use crate::docs::Document;
use crate::error::{Error, Result};
use crate::geometry::{self, ExpansionPlan, PerturbationParams};
use crate::payload::{record_ad, PayloadKey};
use crate::scheme::{CipherVector, Plaintext, SchemeKey};
use crate::store::{IngestReport, RecordStore, SearchHit, StoredRecord};

/// Records per upload request.
pub const UPLOAD_BATCH: usize = 1000;

impl<T: RecordStore + ?Sized> RecordStore for Box<T> {
    fn dim(&self) -> Result<usize> {
        (**self).dim()
    }
    fn count(&self) -> Result<u64> {
        (**self).count()
    }
    fn ingest(&self, records: Vec<StoredRecord>) -> Result<IngestReport> {
        (**self).ingest(records)
    }
    fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>> {
        (**self).topk_search(query, k)
    }
}

impl<T: RecordStore + ?Sized> RecordStore for Arc<T> {
    fn dim(&self) -> Result<usize> {
        (**self).dim()
    }
    fn count(&self) -> Result<u64> {
        (**self).count()
    }
    fn ingest(&self, records: Vec<StoredRecord>) -> Result<IngestReport> {
        (**self).ingest(records)
    }
    fn topk_search(&self, query: &CipherVector, k: usize) -> Result<Vec<SearchHit>> {
        (**self).topk_search(query, k)
    }
}

#[derive(Debug)]
pub struct ClientContext<S> {
    pub scheme_key: SchemeKey,
    pub payload_key: PayloadKey,
    pub store: S,
    pub default_k: usize,
    pub default_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentFailure {
    pub id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UploadReport {
    /// Records the store accepted.
    pub count: usize,
    /// Serialized record bytes sent to the store.
    pub bytes: usize,
    pub failures: Vec<DocumentFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedDocument {
    pub id: u64,
    /// Decrypted (unit-normalized) embedding.
    pub embedding: Vec<f64>,
    pub text: String,
    /// L2 distance to the unperturbed query.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query_text: Option<String>,
    /// Ascending by `distance`, at most `k` entries.
    pub documents: Vec<RetrievedDocument>,
    pub k: usize,
    pub k_prime: usize,
    /// `None` when the store was empty.
    pub plan: Option<ExpansionPlan>,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<u64> {
        self.documents.iter().map(|d| d.id).collect()
    }
}

impl<S: RecordStore> ClientContext<S> {
    pub fn new(scheme_key: SchemeKey, payload_key: PayloadKey, store: S) -> Self {
        Self {
            scheme_key,
            payload_key,
            store,
            default_k: 5,
            default_radius: 0.0,
        }
    }

    fn seal_record(&self, doc: &Document) -> Result<StoredRecord> {
        let unit = geometry::normalize(&doc.embedding[..])?;
        Ok(StoredRecord {
            id: doc.id,
            embedding: self.scheme_key.enc_db(&unit)?,
            payload: self
                .payload_key
                .seal(doc.text.as_bytes(), &record_ad(doc.id))?,
        })
    }

    /// Encrypts and uploads `docs`. Per-document problems are collected in
    /// the report rather than aborting the batch.
    pub fn phase1_upload(&self, docs: &[Document]) -> Result<UploadReport> {
        if docs.is_empty() {
            return Err(Error::Input("no documents to upload".into()));
        }
        let dim = self.store.dim()?;
        let mut report = UploadReport::default();
        for chunk in docs.chunks(UPLOAD_BATCH) {
            let mut records = Vec::with_capacity(chunk.len());
            for doc in chunk {
                if doc.embedding.len() != dim {
                    report.failures.push(DocumentFailure {
                        id: doc.id,
                        reason: format!("embedding dim {} != store dim {dim}", doc.embedding.len()),
                    });
                    continue;
                }
                match self.seal_record(doc) {
                    Ok(rec) => records.push(rec),
                    Err(e) => report.failures.push(DocumentFailure {
                        id: doc.id,
                        reason: e.to_string(),
                    }),
                }
            }
            if records.is_empty() {
                continue;
            }
            let sent: usize = records
                .iter()
                .map(|r| {
                    8 + CipherVector::encoded_len(r.embedding.dim()) + 4 + r.payload.encoded_len()
                })
                .sum();
            let outcome = self.store.ingest(records)?;
            report.bytes += sent;
            report.count += outcome.accepted;
            report
                .failures
                .extend(
                    outcome
                        .rejected
                        .into_iter()
                        .map(|(id, reason)| DocumentFailure {
                            id,
                            reason: reason.to_string(),
                        }),
                );
        }
        Ok(report)
    }

    /// Retrieves the top-`k` documents for `query_embedding`.
    pub fn phase2_query<P: Plaintext + ?Sized>(
        &self,
        query_embedding: &P,
        k: usize,
        params: &PerturbationParams,
    ) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        let delta_alpha = geometry::delta_alpha_of_radius(params.radius)?;
        let query = geometry::normalize(query_embedding)?;
        let dim = query.len();

        let m = self.store.count()? as usize;
        if m == 0 {
            return Ok(RetrievalResult {
                query_text: None,
                documents: Vec::new(),
                k: 0,
                k_prime: 0,
                plan: None,
            });
        }
        let k = if k > m {
            log::warn!("k = {k} exceeds store size {m}; clamping");
            m
        } else {
            k
        };
        let plan = geometry::k_prime(k, m, dim, delta_alpha)?;
        let perturbed = geometry::perturb_query(&query, params)?;
        let encrypted = self.scheme_key.enc_q(&perturbed)?;
        let hits = self.store.topk_search(&encrypted, plan.k_prime)?;

        let mut candidates = Vec::with_capacity(hits.len());
        for hit in hits {
            let emb = self.scheme_key.dec_db_checked(&hit.record.embedding, dim)?;
            let d2: f64 = emb.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
            candidates.push((d2, hit.id, emb, hit.record.payload));
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(k);

        let documents = candidates
            .into_iter()
            .map(|(d2, id, embedding, payload)| {
                let bytes = self
                    .payload_key
                    .open(&payload, &record_ad(id))
                    .map_err(|_| Error::Auth { record: Some(id) })?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| Error::Input(format!("record {id} payload is not UTF-8")))?;
                Ok(RetrievedDocument {
                    id,
                    embedding,
                    text,
                    distance: d2.sqrt(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RetrievalResult {
            query_text: None,
            documents,
            k,
            k_prime: plan.k_prime,
            plan: Some(plan),
        })
    }

    /// Embeds `text`, retrieves with the context defaults, and keeps the
    /// query text in the result.
    pub fn ask(
        &self,
        text: &str,
        embedder: &dyn crate::embed::Embedder,
        seed: Option<u64>,
    ) -> Result<RetrievalResult> {
        let embedding = embedder.embed(text)?;
        let mut params = PerturbationParams::new(self.default_radius)?;
        params.seed = seed;
        let mut result = self.phase2_query(&embedding[..], self.default_k, &params)?;
        result.query_text = Some(text.to_owned());
        Ok(result)
    }
}

pub const EMPTY_CONTEXT_NOTICE: &str = "(no context passages were retrieved)";

/// Deterministic prompt: the query, a separator, then numbered passages.
pub fn phase3_prompt(query_text: &str, documents: &[RetrievedDocument]) -> String {
    let mut out = String::new();
    out.push_str("Question: ");
    out.push_str(query_text);
    out.push_str("\n---\n");
    if documents.is_empty() {
        out.push_str(EMPTY_CONTEXT_NOTICE);
        out.push('\n');
        return out;
    }
    out.push_str("Context passages:\n");
    for (i, d) in documents.iter().enumerate() {
        out.push_str(&format!("[{}] {}\n", i + 1, d.text));
    }
    out
}

/// Produces an answer from an assembled prompt.
pub trait Generator {
    fn generate(&self, prompt: &str) -> Result<String>;
}

/// Returns the prompt unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn generate(&self, prompt: &str) -> Result<String> {
        Ok(prompt.to_owned())
    }
}
