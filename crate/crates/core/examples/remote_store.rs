//! The same store served over TCP. The client talks to it through
//! `RemoteStore`, which implements the same trait as the local store.

use std::time::Duration;

use pprag::docs::read_jsonl;
use pprag::embed::PrecomputedEmbedder;
use pprag::net::{RemoteStore, Server, ServerConfig};
use pprag::payload::PayloadKey;
use pprag::pipeline::{phase3_prompt, ClientContext};
use pprag::scheme::{SchemeKey, DEFAULT_SCALE_RANGE};
use pprag::store::{SharedStore, VectorStore};

fn main() -> pprag::Result<()> {
    let docs = read_jsonl(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/sample_docs.jsonl"
    ))?;
    let server = Server::bind(
        SharedStore::new(VectorStore::new(docs[0].embedding.len())?),
        "127.0.0.1:0",
        ServerConfig::default(),
    )?
    .spawn()?;
    println!("serving on {}", server.addr());

    let remote = RemoteStore::with_timeout(server.addr(), Duration::from_secs(5))?;
    let mut ctx = ClientContext::new(
        SchemeKey::generate(128, 0.05, DEFAULT_SCALE_RANGE)?,
        PayloadKey::generate(),
        remote,
    );
    let report = ctx.phase1_upload(&docs)?;
    println!(
        "uploaded {} records, {} bytes on the wire",
        report.count, report.bytes
    );

    ctx.default_k = 3;
    let question = &docs[42].text;
    let result = ctx.ask(question, &PrecomputedEmbedder::from_documents(&docs)?, None)?;
    println!("{}", phase3_prompt(question, &result.documents));

    let stats = server.stats();
    let load = |c: &std::sync::atomic::AtomicU64| c.load(std::sync::atomic::Ordering::Relaxed);
    println!(
        "server handled {} uploads and {} searches",
        load(&stats.uploads),
        load(&stats.searches)
    );
    server.shutdown()
}
