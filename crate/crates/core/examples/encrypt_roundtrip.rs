//! Generates a key, encrypts an embedding for the database and as a query,
//! and decrypts the database ciphertext back.

use pprag::scheme::{CipherVector, NoiseKind, SchemeKey, DEFAULT_SCALE_RANGE};

fn main() -> pprag::Result<()> {
    let key = SchemeKey::generate(128, 0.2, DEFAULT_SCALE_RANGE)?;
    let e: Vec<f64> = vec![0.6, 0.0, 0.8, 0.0];

    let db = key.enc_db(&e)?;
    let q = key.enc_q(&e)?;
    println!("scale s = {:.3e}", key.scale());
    println!("db ciphertext    = {:?}", db.c);
    println!("query ciphertext = {:?}", q.c);

    let back = key.dec_db(&db)?;
    let err = back
        .iter()
        .zip(&e)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("decrypted = {back:?}");
    println!(
        "|Dec(Enc(e)) - e| = {err:.4} (bound {:.4})",
        key.noise_bound(NoiseKind::Database) / key.scale()
    );

    let bytes = db.to_bytes();
    assert_eq!(bytes.len(), CipherVector::encoded_len(e.len()));
    assert_eq!(CipherVector::from_bytes(&bytes)?, db);
    println!("serialized ciphertext: {} bytes", bytes.len());
    Ok(())
}
