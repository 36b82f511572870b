//! Document input formats.
//!
//! * JSON lines: one `{"id": u64, "text": str, "embedding": [f32, ...]}`
//!   object per line.
//! * Binary: a vectors file (`dim u32 LE | count u64 LE | count*dim f32 LE`)
//!   paired with a texts file holding one text per line. Ids are the
//!   zero-based line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::Reader;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: u64,
    pub text: String,
    pub embedding: Vec<f32>,
}

pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    parse_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut w, d).map_err(|e| Error::Input(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Decodes a binary vectors file into `(dim, vectors)`.
pub fn parse_vectors(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>)> {
    let mut r = Reader::new(bytes);
    let dim = r.u32("dim")? as usize;
    let count = r.u64("count")? as usize;
    if dim == 0 {
        return Err(Error::format(0, "zero dimension"));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(4, "vector count overflows"))?;
    if r.remaining() != expected {
        return Err(Error::format(
            r.offset(),
            format!(
                "expected {expected} bytes of vectors, found {}",
                r.remaining()
            ),
        ));
    }
    let body = r.take(expected, "vectors")?;
    let vectors = body
        .chunks_exact(4 * dim)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
                .collect()
        })
        .collect();
    Ok((dim, vectors))
}

pub fn encode_vectors(dim: usize, vectors: &[Vec<f32>]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * dim * vectors.len());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::Input(format!(
                "vector {i} has dim {}, expected {dim}",
                v.len()
            )));
        }
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_binary(vectors: impl AsRef<Path>, texts: impl AsRef<Path>) -> Result<Vec<Document>> {
    let (_, vecs) = parse_vectors(&std::fs::read(vectors)?)?;
    let texts: Vec<String> = BufReader::new(File::open(texts)?)
        .lines()
        .collect::<Result<_, _>>()?;
    if texts.len() != vecs.len() {
        return Err(Error::Input(format!(
            "{} vectors but {} texts",
            vecs.len(),
            texts.len()
        )));
    }
    Ok(vecs
        .into_iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (embedding, text))| Document {
            id: i as u64,
            text,
            embedding,
        })
        .collect())
}

/// Writes the binary pair. Texts must not contain newlines.
pub fn write_binary(
    vectors: impl AsRef<Path>,
    texts: impl AsRef<Path>,
    docs: &[Document],
) -> Result<()> {
    let dim = docs.first().map_or(1, |d| d.embedding.len());
    let vecs: Vec<Vec<f32>> = docs.iter().map(|d| d.embedding.clone()).collect();
    std::fs::write(vectors, encode_vectors(dim, &vecs)?)?;
    let mut w = BufWriter::new(File::create(texts)?);
    for d in docs {
        if d.text.contains('\n') {
            return Err(Error::Input(format!(
                "document {} text contains a newline",
                d.id
            )));
        }
        writeln!(w, "{}", d.text)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_parses_and_skips_blank_lines() {
        let src = "{\"id\":1,\"text\":\"a\",\"embedding\":[0.5,1.0]}\n\n{\"id\":2,\"text\":\"b\",\"embedding\":[1,2]}\n";
        let docs = parse_jsonl(src.as_bytes()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].embedding, vec![1.0, 2.0]);
        assert!(parse_jsonl("{\"id\":1}".as_bytes()).is_err());
    }

    #[test]
    fn binary_vectors_layout() {
        let bytes = encode_vectors(2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(bytes.len(), 12 + 16);
        assert_eq!(&bytes[..4], &2u32.to_le_bytes());
        assert_eq!(&bytes[4..12], &2u64.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        let (dim, v) = parse_vectors(&bytes).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(v[1], vec![3.0, 4.0]);
        assert!(parse_vectors(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn binary_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let docs = vec![
            Document {
                id: 0,
                text: "first".into(),
                embedding: vec![0.1, 0.2],
            },
            Document {
                id: 1,
                text: "second".into(),
                embedding: vec![0.3, 0.4],
            },
        ];
        let (v, t) = (dir.path().join("v.bin"), dir.path().join("t.txt"));
        write_binary(&v, &t, &docs).unwrap();
        assert_eq!(read_binary(&v, &t).unwrap(), docs);
    }
}
