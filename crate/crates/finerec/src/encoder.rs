//! Text-to-vector encoding for attribute names and opinion strings.
//!
//! The default encoder hashes tokens into `d` signed buckets (FNV-1a 64-bit,
//! sign from the top hash bit) and L2-normalizes, standing in for a
//! pre-trained sentence encoder: deterministic, dependency-free, and frozen.
//! Externally computed vectors can be imported from JSONL instead.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{FineRecError, Result};
use crate::linalg::normalize;
use crate::{sc, Scalar};

/// Lowercase and split on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Signed feature hashing into `d` buckets followed by L2 normalization.
/// An empty token list maps to the zero vector.
pub fn encode_text<F: Scalar>(text: &str, d: usize) -> Vec<F> {
    assert!(d >= 1, "encoding dimension must be at least 1");
    let mut out = vec![F::zero(); d];
    for token in tokenize(text) {
        let hash = fnv1a64(token.as_bytes());
        let bucket = (hash % d as u64) as usize;
        let sign = if hash >> 63 == 0 {
            F::one()
        } else {
            -F::one()
        };
        out[bucket] += sign;
    }
    normalize(&mut out);
    out
}

/// Maps text to a fixed-dimension vector.
pub trait TextEncoder<F: Scalar> {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<F>;
}

/// The default hashing encoder.
#[derive(Debug, Clone, Copy)]
pub struct HashingEncoder {
    pub dim: usize,
}

impl<F: Scalar> TextEncoder<F> for HashingEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<F> {
        encode_text(text, self.dim)
    }
}

/// Encoder backed by imported vectors; texts missing from the import fall
/// back to hashing so the pipeline never stalls on vocabulary gaps.
pub struct ImportedEncoder<F> {
    vectors: HashMap<String, Vec<F>>,
    fallback: HashingEncoder,
}

impl<F: Scalar> ImportedEncoder<F> {
    pub fn new(vectors: HashMap<String, Vec<F>>, d: usize) -> ImportedEncoder<F> {
        ImportedEncoder {
            vectors,
            fallback: HashingEncoder { dim: d },
        }
    }
}

impl<F: Scalar> TextEncoder<F> for ImportedEncoder<F> {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn encode(&self, text: &str) -> Vec<F> {
        match self.vectors.get(text) {
            Some(v) => v.clone(),
            None => self.fallback.encode(text),
        }
    }
}

#[derive(Deserialize)]
struct VectorRecord {
    text: String,
    vector: Vec<f64>,
}

/// Load `{text, vector}` JSONL; vectors are re-normalized to unit L2.
/// Dimension mismatches and conflicting duplicates are errors.
pub fn import_external_vectors<F: Scalar>(
    path: &Path,
    d: usize,
) -> Result<HashMap<String, Vec<F>>> {
    let text =
        fs::read_to_string(path).map_err(|e| FineRecError::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut raw: HashMap<String, (usize, Vec<f64>)> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: VectorRecord = serde_json::from_str(line)
            .map_err(|e| FineRecError::parse(&path_str, lineno, e.to_string()))?;
        if record.vector.len() != d {
            return Err(FineRecError::parse(
                &path_str,
                lineno,
                format!(
                    "vector for `{}` has dimension {}, expected {d}",
                    record.text,
                    record.vector.len()
                ),
            ));
        }
        if let Some((_, existing)) = raw.get(&record.text) {
            if existing != &record.vector {
                return Err(FineRecError::parse(
                    &path_str,
                    lineno,
                    format!("conflicting duplicate vector for text `{}`", record.text),
                ));
            }
            continue;
        }
        raw.insert(record.text, (lineno, record.vector));
    }
    let mut out = HashMap::new();
    for (text, (_, vector)) in raw {
        let mut v: Vec<F> = vector.into_iter().map(|x| sc(x)).collect();
        normalize(&mut v);
        out.insert(text, v);
    }
    Ok(out)
}
