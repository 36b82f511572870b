//! Embeds a text file (one passage per line) with the hash embedder and
//! writes JSON-lines documents ready for `pprag ingest`.
//!
//! cargo run --example embed_corpus -- data/sample_texts.txt 64 data/sample_docs.jsonl

use pprag::docs::{write_jsonl, Document};
use pprag::embed::{Embedder, HashEmbedder};

fn main() -> pprag::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args
        .next()
        .unwrap_or_else(|| "data/sample_texts.txt".into());
    let dim: usize = args.next().map_or(64, |d| d.parse().expect("dimension"));
    let output = args
        .next()
        .unwrap_or_else(|| "data/sample_docs.jsonl".into());

    let embedder = HashEmbedder::new(dim)?;
    let text = std::fs::read_to_string(&input)?;
    let docs = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            Ok(Document {
                id: i as u64,
                text: line.to_owned(),
                embedding: embedder.embed(line)?,
            })
        })
        .collect::<pprag::Result<Vec<_>>>()?;
    write_jsonl(&output, &docs)?;
    println!(
        "wrote {} documents of dimension {dim} to {output}",
        docs.len()
    );
    Ok(())
}
