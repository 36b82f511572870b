//! Conditional approximate distance-comparison-preserving encryption.
//!
//! A plaintext embedding `e` is encrypted as `c = s*e + noise` where the
//! noise is drawn uniformly from a ball whose radius depends on the role of
//! the vector: `3sβ/8` for database entries and `sβ/8` for queries. The
//! asymmetric budget guarantees that query-to-database comparisons with a
//! plaintext margin above β survive encryption while database-to-database
//! comparisons may flip. [`NoiseKind::Adcpe`] gives the symmetric `sβ/4`
//! baseline.
//!
//! The noise is regenerated from `PRF(K, r)` on decryption, so a
//! [`CipherVector`] only needs to carry its nonce.

mod noise;

use std::fmt;
use std::ops::RangeInclusive;

use rand::{Rng, RngCore};

use crate::codec::Reader;
use crate::error::{Error, Result};

pub use noise::{NoiseKind, NoiseSpec};

/// PRF key length in bytes.
pub const PRF_KEY_LEN: usize = 32;
/// Nonce length in bytes.
pub const NONCE_LEN: usize = 16;

pub const CIPHER_MAGIC: &[u8; 4] = b"CPRS";
pub const CIPHER_VERSION: u8 = 1;
pub const KEY_FILE_VERSION: u8 = 1;
/// Size of a serialized [`SchemeKey`].
pub const KEY_FILE_LEN: usize = 1 + 8 + 8 + PRF_KEY_LEN;

/// Default interval for the secret scale `s`.
pub const DEFAULT_SCALE_RANGE: RangeInclusive<f64> = 1_048_576.0..=1_073_741_824.0;

/// Secret key `(s, K)` together with the public margin β.
#[derive(Clone, PartialEq)]
pub struct SchemeKey {
    scale: f64,
    prf_key: [u8; PRF_KEY_LEN],
    beta: f64,
}

impl fmt::Debug for SchemeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeKey")
            .field("scale", &"<redacted>")
            .field("prf_key", &"<redacted>")
            .field("beta", &self.beta)
            .finish()
    }
}

/// Per-encryption public randomness.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce([u8; NONCE_LEN]);

impl Nonce {
    /// Fresh nonce from the thread-local CSPRNG.
    pub fn random() -> Self {
        Self::random_with(&mut rand::rng())
    }

    pub fn random_with<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut b);
        Self(b)
    }

    pub const fn from_bytes(b: [u8; NONCE_LEN]) -> Self {
        Self(b)
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce(")?;
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

/// Something that can be read as a plaintext embedding.
///
/// Embeddings arrive as `f32`; all scheme arithmetic runs in `f64`.
pub trait Plaintext {
    fn dim(&self) -> usize;
    fn component(&self, i: usize) -> f64;
}

impl Plaintext for [f32] {
    fn dim(&self) -> usize {
        self.len()
    }
    fn component(&self, i: usize) -> f64 {
        f64::from(self[i])
    }
}

impl Plaintext for [f64] {
    fn dim(&self) -> usize {
        self.len()
    }
    fn component(&self, i: usize) -> f64 {
        self[i]
    }
}

impl Plaintext for Vec<f32> {
    fn dim(&self) -> usize {
        self.len()
    }
    fn component(&self, i: usize) -> f64 {
        f64::from(self[i])
    }
}

impl Plaintext for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }
    fn component(&self, i: usize) -> f64 {
        self[i]
    }
}

/// An encrypted embedding and the nonce its noise was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherVector {
    pub c: Vec<f64>,
    pub nonce: Nonce,
}

impl CipherVector {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Serialized size for a vector of dimension `dim`.
    pub const fn encoded_len(dim: usize) -> usize {
        4 + 1 + 4 + 8 * dim + NONCE_LEN
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(Self::encoded_len(self.dim()));
        out.extend_from_slice(CIPHER_MAGIC);
        out.push(CIPHER_VERSION);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        for x in &self.c {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.nonce.0);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let cv = Self::read(&mut r)?;
        r.finish("cipher vector")?;
        Ok(cv)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        r.expect_magic(CIPHER_MAGIC)?;
        let version = r.u8("cipher version")?;
        if version != CIPHER_VERSION {
            return Err(Error::Version {
                what: "cipher vector",
                found: version,
                expected: CIPHER_VERSION,
            });
        }
        let at = r.offset();
        let dim = r.u32("cipher dim")? as usize;
        if dim == 0 {
            return Err(Error::format(at, "zero cipher dimension"));
        }
        let body = r.take(8 * dim, "cipher components")?;
        let c = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let nonce = Nonce(r.array("nonce")?);
        Ok(Self { c, nonce })
    }
}

impl SchemeKey {
    /// Generates `(s, K)` from the thread-local CSPRNG.
    ///
    /// `security_bits` must be in `1..=256`; `K` is always
    /// [`PRF_KEY_LEN`] bytes, which covers every admissible level.
    pub fn generate(
        security_bits: u32,
        beta: f64,
        scale_range: RangeInclusive<f64>,
    ) -> Result<Self> {
        Self::generate_with(&mut rand::rng(), security_bits, beta, scale_range)
    }

    /// As [`SchemeKey::generate`] with a caller-supplied RNG. Experiments use
    /// this with a seeded generator; production keys should not.
    pub fn generate_with<R: Rng + ?Sized>(
        rng: &mut R,
        security_bits: u32,
        beta: f64,
        scale_range: RangeInclusive<f64>,
    ) -> Result<Self> {
        if security_bits == 0 || security_bits as usize > 8 * PRF_KEY_LEN {
            return Err(Error::Param(format!(
                "security parameter {security_bits} bits outside 1..={}",
                8 * PRF_KEY_LEN
            )));
        }
        let (lo, hi) = (*scale_range.start(), *scale_range.end());
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
            return Err(Error::Param(format!("invalid scale range [{lo}, {hi}]")));
        }
        let mut prf_key = [0u8; PRF_KEY_LEN];
        rng.fill_bytes(&mut prf_key);
        let scale = rng.random_range(lo..=hi);
        Self::from_parts(scale, prf_key, beta)
    }

    pub fn from_parts(scale: f64, prf_key: [u8; PRF_KEY_LEN], beta: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Param(format!("scale must be positive, got {scale}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Param(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            scale,
            prf_key,
            beta,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub(crate) fn prf_key(&self) -> &[u8; PRF_KEY_LEN] {
        &self.prf_key
    }

    /// Strict upper bound on the noise norm for `kind`.
    pub fn noise_bound(&self, kind: NoiseKind) -> f64 {
        kind.coefficient() * self.scale * self.beta
    }

    /// Deterministic noise vector for `(K, r, spec)`.
    pub fn sample_noise(&self, nonce: &Nonce, spec: NoiseSpec) -> Result<Vec<f64>> {
        if spec.dim == 0 {
            return Err(Error::Param("noise dimension must be at least 1".into()));
        }
        let mut out = vec![0.0; spec.dim];
        noise::sample_into(self, nonce, spec, &mut out);
        Ok(out)
    }

    /// Database encryption with a fresh nonce.
    pub fn enc_db<P: Plaintext + ?Sized>(&self, e: &P) -> Result<CipherVector> {
        self.encrypt_with_nonce(NoiseKind::Database, e, Nonce::random())
    }

    /// Query encryption with a fresh nonce.
    pub fn enc_q<P: Plaintext + ?Sized>(&self, e: &P) -> Result<CipherVector> {
        self.encrypt_with_nonce(NoiseKind::Query, e, Nonce::random())
    }

    /// Symmetric ADCPE baseline encryption with a fresh nonce.
    pub fn enc_adcpe<P: Plaintext + ?Sized>(&self, e: &P) -> Result<CipherVector> {
        self.encrypt_with_nonce(NoiseKind::Adcpe, e, Nonce::random())
    }

    /// Encrypts under an explicit nonce. Reusing a nonce reuses the noise
    /// vector; this exists for reproducible experiments and tests.
    pub fn encrypt_with_nonce<P: Plaintext + ?Sized>(
        &self,
        kind: NoiseKind,
        e: &P,
        nonce: Nonce,
    ) -> Result<CipherVector> {
        let dim = e.dim();
        if dim == 0 {
            return Err(Error::Input("empty plaintext vector".into()));
        }
        let mut c = vec![0.0; dim];
        noise::sample_into(self, &nonce, NoiseSpec::new(kind, dim), &mut c);
        for (i, ci) in c.iter_mut().enumerate() {
            let x = e.component(i);
            if !x.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite component {x} at index {i}"
                )));
            }
            *ci += self.scale * x;
        }
        Ok(CipherVector { c, nonce })
    }

    /// Inverts [`SchemeKey::enc_db`]. A wrong key yields garbage, not an error.
    pub fn dec_db(&self, cv: &CipherVector) -> Result<Vec<f64>> {
        self.decrypt(NoiseKind::Database, cv)
    }

    /// Decrypts a ciphertext produced with the given noise budget.
    pub fn decrypt(&self, kind: NoiseKind, cv: &CipherVector) -> Result<Vec<f64>> {
        if cv.dim() == 0 {
            return Err(Error::Input("empty cipher vector".into()));
        }
        let mut noise = vec![0.0; cv.dim()];
        noise::sample_into(self, &cv.nonce, NoiseSpec::new(kind, cv.dim()), &mut noise);
        Ok(cv
            .c
            .iter()
            .zip(&noise)
            .map(|(c, l)| (c - l) / self.scale)
            .collect())
    }

    /// [`SchemeKey::dec_db`] with an explicit dimension check.
    pub fn dec_db_checked(&self, cv: &CipherVector, dim: usize) -> Result<Vec<f64>> {
        if cv.dim() != dim {
            return Err(Error::Input(format!(
                "cipher dimension {} does not match expected {dim}",
                cv.dim()
            )));
        }
        self.dec_db(cv)
    }

    pub fn to_bytes(&self) -> [u8; KEY_FILE_LEN] {
        let mut out = [0u8; KEY_FILE_LEN];
        out[0] = KEY_FILE_VERSION;
        out[1..9].copy_from_slice(&self.scale.to_le_bytes());
        out[9..17].copy_from_slice(&self.beta.to_le_bytes());
        out[17..].copy_from_slice(&self.prf_key);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let version = r.u8("key version")?;
        if version != KEY_FILE_VERSION {
            return Err(Error::Version {
                what: "scheme key",
                found: version,
                expected: KEY_FILE_VERSION,
            });
        }
        let scale = r.f64("scale")?;
        let beta = r.f64("beta")?;
        let prf_key = r.array("prf key")?;
        r.finish("scheme key")?;
        Self::from_parts(scale, prf_key, beta)
    }
}
