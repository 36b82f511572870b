//! AES-256-GCM sealing of document payloads.
//!
//! Each record is sealed under a fresh random 96-bit nonce with the record
//! id as associated data, so a payload cannot be swapped between records
//! without failing authentication.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce as GcmNonce, Tag};
use rand::RngCore;

use crate::codec::Reader;
use crate::error::{Error, Result};

pub const PAYLOAD_KEY_LEN: usize = 32;
pub const PAYLOAD_NONCE_LEN: usize = 12;
pub const PAYLOAD_TAG_LEN: usize = 16;
pub const SEALED_VERSION: u8 = 1;
pub const PAYLOAD_KEY_FILE_VERSION: u8 = 1;

/// Random 96-bit nonces stay below the 2^-32 collision bound up to this
/// many seals per key.
pub const MAX_SEALS_PER_KEY: u64 = 1 << 32;

#[derive(Clone)]
pub struct PayloadKey {
    bytes: [u8; PAYLOAD_KEY_LEN],
    seals: Arc<AtomicU64>,
}

impl fmt::Debug for PayloadKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PayloadKey(<redacted>)")
    }
}

impl PartialEq for PayloadKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl PayloadKey {
    pub fn generate() -> Self {
        let mut bytes = [0u8; PAYLOAD_KEY_LEN];
        rand::rng().fill_bytes(&mut bytes);
        Self::from_bytes(bytes)
    }

    pub fn from_bytes(bytes: [u8; PAYLOAD_KEY_LEN]) -> Self {
        Self {
            bytes,
            seals: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + PAYLOAD_KEY_LEN);
        out.push(PAYLOAD_KEY_FILE_VERSION);
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let version = r.u8("payload key version")?;
        if version != PAYLOAD_KEY_FILE_VERSION {
            return Err(Error::Version {
                what: "payload key",
                found: version,
                expected: PAYLOAD_KEY_FILE_VERSION,
            });
        }
        let key = r.array("payload key")?;
        r.finish("payload key")?;
        Ok(Self::from_bytes(key))
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new_from_slice(&self.bytes).expect("32-byte AES key")
    }

    pub fn seal(&self, plaintext: &[u8], associated_data: &[u8]) -> Result<SealedPayload> {
        let used = self.seals.fetch_add(1, Ordering::Relaxed);
        if used >= MAX_SEALS_PER_KEY {
            return Err(Error::NonceExhausted);
        }
        let mut nonce = [0u8; PAYLOAD_NONCE_LEN];
        rand::rng().fill_bytes(&mut nonce);
        let mut ciphertext = plaintext.to_vec();
        let tag = self
            .cipher()
            .encrypt_in_place_detached(
                GcmNonce::from_slice(&nonce),
                associated_data,
                &mut ciphertext,
            )
            .expect("AES-GCM encryption of an in-memory buffer");
        Ok(SealedPayload {
            nonce,
            ciphertext,
            tag: tag.into(),
        })
    }

    pub fn open(&self, sealed: &SealedPayload, associated_data: &[u8]) -> Result<Vec<u8>> {
        let mut buf = sealed.ciphertext.clone();
        self.cipher()
            .decrypt_in_place_detached(
                GcmNonce::from_slice(&sealed.nonce),
                associated_data,
                &mut buf,
                Tag::from_slice(&sealed.tag),
            )
            .map_err(|_| Error::Auth { record: None })?;
        Ok(buf)
    }
}

/// Associated data binding a payload to its record id.
pub fn record_ad(id: u64) -> [u8; 8] {
    id.to_le_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedPayload {
    pub nonce: [u8; PAYLOAD_NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; PAYLOAD_TAG_LEN],
}

impl SealedPayload {
    pub fn encoded_len(&self) -> usize {
        3 + PAYLOAD_NONCE_LEN + PAYLOAD_TAG_LEN + self.ciphertext.len()
    }

    /// `[version, nonce_len, tag_len] ‖ nonce ‖ tag ‖ ciphertext`; the
    /// ciphertext runs to the end of the enclosing frame.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.extend_from_slice(&[
            SEALED_VERSION,
            PAYLOAD_NONCE_LEN as u8,
            PAYLOAD_TAG_LEN as u8,
        ]);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&self.ciphertext);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::parse(bytes, 0)
    }

    pub(crate) fn parse(bytes: &[u8], base: usize) -> Result<Self> {
        let mut r = Reader::with_base(bytes, base);
        let version = r.u8("sealed payload version")?;
        if version != SEALED_VERSION {
            return Err(Error::Version {
                what: "sealed payload",
                found: version,
                expected: SEALED_VERSION,
            });
        }
        let at = r.offset();
        let nonce_len = r.u8("nonce length")? as usize;
        let tag_len = r.u8("tag length")? as usize;
        if nonce_len != PAYLOAD_NONCE_LEN || tag_len != PAYLOAD_TAG_LEN {
            return Err(Error::format(
                at,
                format!("unsupported nonce/tag lengths {nonce_len}/{tag_len}"),
            ));
        }
        let nonce = r.array("payload nonce")?;
        let tag = r.array("payload tag")?;
        let ciphertext = r.take(r.remaining(), "payload ciphertext")?.to_vec();
        Ok(Self {
            nonce,
            ciphertext,
            tag,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_fresh() {
        let a = PayloadKey::generate();
        let b = PayloadKey::generate();
        assert_ne!(a, b);
        assert_eq!(a.to_file_bytes().len(), 1 + PAYLOAD_KEY_LEN);
        assert_eq!(PayloadKey::from_file_bytes(&a.to_file_bytes()).unwrap(), a);
    }

    #[test]
    fn empty_plaintext_round_trips() {
        let k = PayloadKey::generate();
        let s = k.seal(b"", b"ad").unwrap();
        assert_eq!(k.open(&s, b"ad").unwrap(), b"");
    }

    #[test]
    fn sealing_is_randomized() {
        let k = PayloadKey::generate();
        let a = k.seal(b"same text", b"").unwrap();
        let b = k.seal(b"same text", b"").unwrap();
        assert_ne!(a.nonce, b.nonce);
        assert_ne!(a.ciphertext, b.ciphertext);
    }

    #[test]
    fn tampering_fails_authentication() {
        let k = PayloadKey::generate();
        let ad = record_ad(42);
        let s = k.seal(b"confidential passage", &ad).unwrap();

        let mut bad = s.clone();
        bad.ciphertext[3] ^= 0x10;
        assert!(matches!(k.open(&bad, &ad), Err(Error::Auth { .. })));

        let mut bad = s.clone();
        bad.ciphertext.pop();
        assert!(matches!(k.open(&bad, &ad), Err(Error::Auth { .. })));

        assert!(matches!(
            k.open(&s, &record_ad(43)),
            Err(Error::Auth { .. })
        ));
        assert!(matches!(
            PayloadKey::generate().open(&s, &ad),
            Err(Error::Auth { .. })
        ));
    }

    #[test]
    fn exhausted_key_refuses_to_seal() {
        let k = PayloadKey::generate();
        k.seals.store(MAX_SEALS_PER_KEY, Ordering::Relaxed);
        assert!(matches!(k.seal(b"x", b""), Err(Error::NonceExhausted)));
    }

    #[test]
    fn wire_layout() {
        let k = PayloadKey::generate();
        let s = k.seal(b"abc", b"").unwrap();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..3], &[1, 12, 16]);
        assert_eq!(&bytes[3..15], &s.nonce);
        assert_eq!(&bytes[15..31], &s.tag);
        assert_eq!(&bytes[31..], &s.ciphertext[..]);
        assert_eq!(SealedPayload::from_bytes(&bytes).unwrap(), s);
        assert!(SealedPayload::from_bytes(&bytes[..20]).is_err());
    }
}
