mod common;

use std::time::Duration;

use pprag::docs::{read_jsonl, Document};
use pprag::embed::{Embedder, HashEmbedder};
use pprag::geometry::{normalize, PerturbationParams};
use pprag::net::{RemoteStore, Server, ServerConfig};
use pprag::payload::PayloadKey;
use pprag::pipeline::{phase3_prompt, ClientContext};
use pprag::store::{SharedStore, VectorStore};

fn sample() -> Vec<Document> {
    read_jsonl(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/sample_docs.jsonl"
    ))
    .unwrap()
}

/// Plaintext top-k by Euclidean distance between normalized embeddings.
fn oracle(docs: &[Document], query: &[f32], k: usize) -> Vec<u64> {
    let q = normalize(query).unwrap();
    let mut scored: Vec<(f64, u64)> = docs
        .iter()
        .map(|d| {
            let e = normalize(&d.embedding[..]).unwrap();
            (e.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), d.id)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, id)| id).collect()
}

fn local_context(beta: f64) -> ClientContext<SharedStore> {
    ClientContext::new(
        common::key(21, beta),
        PayloadKey::generate(),
        SharedStore::new(VectorStore::new(64).unwrap()),
    )
}

#[test]
fn sample_corpus_is_well_formed() {
    let docs = sample();
    assert_eq!(docs.len(), 100);
    let embedder = HashEmbedder::new(64).unwrap();
    for (i, d) in docs.iter().enumerate() {
        assert_eq!(d.id, i as u64);
        assert_eq!(d.embedding, embedder.embed(&d.text).unwrap());
    }
}

#[test]
fn unperturbed_retrieval_matches_plaintext_oracle() {
    let docs = sample();
    let ctx = local_context(1e-4);
    let report = ctx.phase1_upload(&docs).unwrap();
    assert_eq!(report.count, 100);
    assert!(report.failures.is_empty());
    let embedder = HashEmbedder::new(64).unwrap();
    for question in [
        "telescope orbit",
        "garlic bread recipe",
        "router packet latency",
        "quartz magma",
    ] {
        let q = embedder.embed(question).unwrap();
        let got = ctx
            .phase2_query(&q[..], 5, &PerturbationParams::new(0.0).unwrap())
            .unwrap();
        assert_eq!(got.ids(), oracle(&docs, &q, 5), "{question}");
        assert_eq!(got.k_prime, 5);
        for d in &got.documents {
            assert_eq!(d.text, docs[d.id as usize].text);
        }
    }
}

#[test]
fn perturbed_retrieval_reranks_to_the_true_top_k() {
    let docs = sample();
    let ctx = local_context(0.05);
    ctx.phase1_upload(&docs).unwrap();
    let mut hits = 0;
    let mut total = 0;
    for d in &docs {
        let params = PerturbationParams::new(0.05).unwrap().with_seed(d.id);
        let got = ctx.phase2_query(&d.embedding[..], 3, &params).unwrap();
        assert!(got.k_prime >= 3);
        let want = oracle(&docs, &d.embedding, 3);
        hits += got.ids().iter().filter(|id| want.contains(id)).count();
        total += 3;
        // The reranked list is sorted by exact plaintext distance.
        assert!(got
            .documents
            .windows(2)
            .all(|w| w[0].distance <= w[1].distance));
    }
    assert!(hits as f64 / total as f64 >= 0.95, "recall {hits}/{total}");
}

#[test]
fn remote_and_local_pipelines_agree() {
    let docs = sample();
    let server = Server::bind(
        SharedStore::new(VectorStore::new(64).unwrap()),
        "127.0.0.1:0",
        ServerConfig::default(),
    )
    .unwrap()
    .spawn()
    .unwrap();
    let key = common::key(8, 0.05);
    let pkey = PayloadKey::generate();
    let remote = ClientContext::new(
        key.clone(),
        pkey.clone(),
        RemoteStore::with_timeout(server.addr(), Duration::from_secs(5)).unwrap(),
    );
    let local = ClientContext::new(key, pkey, SharedStore::new(VectorStore::new(64).unwrap()));
    remote.phase1_upload(&docs).unwrap();
    local.phase1_upload(&docs).unwrap();
    let embedder = HashEmbedder::new(64).unwrap();
    let q = embedder.embed("vaccine dosage for a patient").unwrap();
    let a = remote
        .phase2_query(
            &q[..],
            4,
            &PerturbationParams::new(0.02).unwrap().with_seed(3),
        )
        .unwrap();
    let b = local
        .phase2_query(
            &q[..],
            4,
            &PerturbationParams::new(0.02).unwrap().with_seed(3),
        )
        .unwrap();
    assert_eq!(a.ids(), b.ids());
    assert_eq!(
        phase3_prompt("q", &a.documents),
        phase3_prompt("q", &b.documents)
    );
    server.shutdown().unwrap();
}
