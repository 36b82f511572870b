//! A file-backed encrypted store: ingest, top-k search over ciphertexts,
//! reopen from disk.

use pprag::eval::random_unit_vectors;
use pprag::payload::{record_ad, PayloadKey};
use pprag::scheme::{SchemeKey, DEFAULT_SCALE_RANGE};
use pprag::store::{StoredRecord, VectorStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pprag::Result<()> {
    let dir = std::env::temp_dir().join(format!("pprag-local-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("store.bin");

    let key = SchemeKey::generate(128, 0.05, DEFAULT_SCALE_RANGE)?;
    let pkey = PayloadKey::generate();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vectors = random_unit_vectors(&mut rng, 5_000, 32);

    let records = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            Ok(StoredRecord {
                id: i as u64,
                embedding: key.enc_db(v)?,
                payload: pkey.seal(format!("passage {i}").as_bytes(), &record_ad(i as u64))?,
            })
        })
        .collect::<pprag::Result<Vec<_>>>()?;

    let mut store = VectorStore::create(&path, 32)?;
    let report = store.ingest(records)?;
    println!(
        "ingested {} records, store now holds {}",
        report.accepted, report.count
    );

    let reopened = VectorStore::open(&path)?;
    let hits = reopened.topk_search(&key.enc_q(&vectors[123])?, 3)?;
    for h in &hits {
        let text = pkey.open(&h.record.payload, &record_ad(h.id))?;
        println!(
            "id {:>4}  dist {:.3e}  {}",
            h.id,
            h.distance,
            String::from_utf8_lossy(&text)
        );
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
