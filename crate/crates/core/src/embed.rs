//! Pluggable text embedders.
//!
//! No neural model ships with this crate. [`HashEmbedder`] is a
//! deterministic bag-of-words stand-in (texts sharing words land close
//! together) and [`PrecomputedEmbedder`] serves vectors loaded from a
//! document file.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::docs::Document;
use crate::error::{Error, Result};

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

/// Sums a pseudo-random Gaussian vector per lower-cased word and
/// normalizes the result.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Param(
                "embedding dimension must be at least 1".into(),
            ));
        }
        Ok(Self { dim })
    }

    fn word_vector(&self, word: &str, acc: &mut [f64]) {
        let seed = blake3::hash(word.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(*seed.as_bytes());
        for a in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a += z;
        }
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut acc = vec![0.0f64; self.dim];
        let mut words = 0;
        for w in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            self.word_vector(&w.to_lowercase(), &mut acc);
            words += 1;
        }
        if words == 0 {
            // Empty text still needs a usable direction.
            self.word_vector("", &mut acc);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(acc.into_iter().map(|x| (x / norm) as f32).collect())
    }
}

/// Looks texts up in a table of precomputed embeddings.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

impl PrecomputedEmbedder {
    pub fn from_documents(docs: &[Document]) -> Result<Self> {
        let dim = docs.first().map_or(0, |d| d.embedding.len());
        let mut table = HashMap::with_capacity(docs.len());
        for d in docs {
            if d.embedding.len() != dim {
                return Err(Error::Input(format!(
                    "document {} has inconsistent dimension",
                    d.id
                )));
            }
            table.insert(d.text.clone(), d.embedding.clone());
        }
        Ok(Self { dim, table })
    }
}

impl Embedder for PrecomputedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| Error::Input(format!("no precomputed embedding for {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit() {
        let e = HashEmbedder::new(32).unwrap();
        let a = e.embed("Privacy preserving retrieval").unwrap();
        assert_eq!(a, e.embed("privacy   PRESERVING retrieval!").unwrap());
        assert!((cos(&a, &a) - 1.0).abs() < 1e-5);
        assert_eq!(e.embed("").unwrap().len(), 32);
    }

    #[test]
    fn shared_words_increase_similarity() {
        let e = HashEmbedder::new(256).unwrap();
        let a = e.embed("encrypted vector search").unwrap();
        let b = e.embed("encrypted vector database").unwrap();
        let c = e.embed("banana bread recipe").unwrap();
        assert!(cos(&a, &b) > cos(&a, &c));
    }

    #[test]
    fn precomputed_lookup() {
        let docs = vec![Document {
            id: 0,
            text: "x".into(),
            embedding: vec![1.0, 0.0],
        }];
        let e = PrecomputedEmbedder::from_documents(&docs).unwrap();
        assert_eq!(e.embed("x").unwrap(), vec![1.0, 0.0]);
        assert!(e.embed("y").is_err());
    }
}
