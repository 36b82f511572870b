//! Upload, perturbed encrypted retrieval, prompt assembly and a stand-in
//! generator, on the bundled sample corpus.

use pprag::docs::read_jsonl;
use pprag::embed::{Embedder, HashEmbedder};
use pprag::geometry::PerturbationParams;
use pprag::payload::PayloadKey;
use pprag::pipeline::{phase3_prompt, ClientContext, EchoGenerator, Generator};
use pprag::scheme::{SchemeKey, DEFAULT_SCALE_RANGE};
use pprag::store::{SharedStore, VectorStore};

fn main() -> pprag::Result<()> {
    let docs = read_jsonl(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/sample_docs.jsonl"
    ))?;
    let dim = docs[0].embedding.len();
    let ctx = ClientContext::new(
        SchemeKey::generate(128, 0.05, DEFAULT_SCALE_RANGE)?,
        PayloadKey::generate(),
        SharedStore::new(VectorStore::new(dim)?),
    );
    ctx.phase1_upload(&docs)?;

    let embedder = HashEmbedder::new(dim)?;
    let question = "Which notes cover a telescope and a comet orbit?";
    let query = embedder.embed(question)?;
    for radius in [0.0, 0.05] {
        let params = PerturbationParams::new(radius)?.with_seed(1);
        let result = ctx.phase2_query(&query[..], 3, &params)?;
        println!(
            "radius {radius}: k = {}, searched k' = {}, ids {:?}",
            result.k,
            result.k_prime,
            result.ids()
        );
    }

    let result = ctx.phase2_query(&query[..], 3, &PerturbationParams::new(0.05)?)?;
    let prompt = phase3_prompt(question, &result.documents);
    println!("\n{prompt}");
    println!("generator output:\n{}", EchoGenerator.generate(&prompt)?);
    Ok(())
}
