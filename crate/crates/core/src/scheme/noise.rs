//! PRF-driven noise sampling.
//!
//! The noise for one encryption is a pure function of `(K, r, kind, d, s, beta)`:
//! the keyed BLAKE3 XOF over the nonce yields a word stream, the first
//! `2 * ceil(d / 2)` words become a Gaussian direction via Box-Muller and
//! the next word becomes the radial uniform `u`. The sampled vector is
//! uniform in the open ball of radius `coefficient * s * beta`.
//!
//! Transcendentals go through `libm` so reconstruction is bit-identical
//! across platforms.

use std::f64::consts::TAU;

use super::{Nonce, SchemeKey};

/// Which noise budget an encryption uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// Database embeddings, norm < 3sβ/8.
    Database,
    /// Query embeddings, norm < sβ/8.
    Query,
    /// Symmetric ADCPE baseline, norm < sβ/4.
    Adcpe,
}

impl NoiseKind {
    pub fn coefficient(self) -> f64 {
        match self {
            NoiseKind::Database => 3.0 / 8.0,
            NoiseKind::Query => 1.0 / 8.0,
            NoiseKind::Adcpe => 1.0 / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, dim: usize) -> Self {
        Self { kind, dim }
    }
}

/// Largest radial factor emitted. `u^(1/d)` rounds to 1.0 for `u` within a
/// few ulps of 1 at large `d`; capping keeps the norm bound strict after
/// rounding.
const MAX_RADIAL: f64 = 1.0 - 1.0 / 4_294_967_296.0;

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Keyed extendable output stream: PRF(K, r).
pub(crate) struct PrfStream {
    reader: blake3::OutputReader,
}

impl PrfStream {
    pub fn new(key: &[u8; 32], nonce: &Nonce) -> Self {
        let mut hasher = blake3::Hasher::new_keyed(key);
        hasher.update(nonce.as_bytes());
        Self {
            reader: hasher.finalize_xof(),
        }
    }

    pub fn fill_words(&mut self, out: &mut [u64]) {
        let mut bytes = vec![0u8; out.len() * 8];
        self.reader.fill(&mut bytes);
        for (w, chunk) in out.iter_mut().zip(bytes.chunks_exact(8)) {
            *w = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
    }

    pub fn next_word(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.reader.fill(&mut b);
        u64::from_le_bytes(b)
    }
}

/// Top 53 bits of `w` as a uniform in [0, 1).
#[inline]
pub(crate) fn unit_closed_open(w: u64) -> f64 {
    (w >> 11) as f64 * TWO_POW_M53
}

/// Uniform in (0, 1): zero maps to the smallest positive grid point.
#[inline]
fn unit_open(w: u64) -> f64 {
    let u = unit_closed_open(w);
    if u == 0.0 {
        TWO_POW_M53
    } else {
        u
    }
}

/// Fills `out` with standard Gaussians from consecutive word pairs.
fn box_muller(words: &[u64], out: &mut [f64]) {
    for (i, pair) in words.chunks_exact(2).enumerate() {
        let radius = libm::sqrt(-2.0 * libm::log(unit_open(pair[0])));
        let theta = TAU * unit_closed_open(pair[1]);
        out[2 * i] = radius * libm::cos(theta);
        if 2 * i + 1 < out.len() {
            out[2 * i + 1] = radius * libm::sin(theta);
        }
    }
}

pub(crate) fn sample_into(key: &SchemeKey, nonce: &Nonce, spec: NoiseSpec, out: &mut [f64]) {
    debug_assert_eq!(out.len(), spec.dim);
    let dim = spec.dim;
    let mut stream = PrfStream::new(key.prf_key(), nonce);
    let mut words = vec![0u64; 2 * dim.div_ceil(2)];

    let norm = loop {
        stream.fill_words(&mut words);
        box_muller(&words, out);
        let norm = out.iter().map(|z| z * z).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            break norm;
        }
        // Degenerate direction: keep reading the stream.
    };

    let u = unit_closed_open(stream.next_word());
    let radial = libm::pow(u, 1.0 / dim as f64).min(MAX_RADIAL);
    let scale = spec.kind.coefficient() * key.scale() * key.beta() * radial / norm;
    for z in out.iter_mut() {
        *z *= scale;
    }
}
