//! Document texts travel sealed with AES-256-GCM, bound to their record id.

use pprag::payload::{record_ad, PayloadKey, SealedPayload};

fn main() -> pprag::Result<()> {
    let key = PayloadKey::generate();
    let text = b"Basalt forms from rapidly cooled lava.";
    let sealed = key.seal(text, &record_ad(7))?;
    let wire = sealed.to_bytes();
    println!(
        "sealed {} bytes of text into {} bytes",
        text.len(),
        wire.len()
    );

    let parsed = SealedPayload::from_bytes(&wire)?;
    let text = key.open(&parsed, &record_ad(7))?;
    println!("opened as record 7: {}", String::from_utf8_lossy(&text));

    match key.open(&parsed, &record_ad(8)) {
        Ok(_) => println!("unexpected: opened under the wrong id"),
        Err(e) => println!("opening as record 8 fails: {e}"),
    }
    let mut tampered = parsed.clone();
    tampered.ciphertext[0] ^= 1;
    println!(
        "tampered ciphertext: {}",
        key.open(&tampered, &record_ad(7)).unwrap_err()
    );
    Ok(())
}
