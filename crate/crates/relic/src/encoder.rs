//! Hashed character n-gram features and the two linear maps that carry them
//! into the retrieval space.
//!
//! A text becomes counts of its 2-, 3- and 4-grams of characters, bucketed
//! by content hash modulo `d_in` and L2-normalized. A retriever is nothing
//! but two dense `d_in x d_out` matrices: `phi` embeds the item being scored,
//! `psi` embeds candidate context. Similarity is a plain dot product, so
//! embedding a sparse vector touches only the matrix rows its features hit.

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;
use thiserror::Error;

use crate::corpus::{fnv_init, fnv_update, ContextPair, ExampleBank, ExampleTriplet, UNIT_SEP};
use crate::seeding::seeded_rng;

/// N-gram widths used by [`featurize`].
pub const NGRAM_SIZES: [usize; 3] = [2, 3, 4];

/// Dimensions shared by every matrix in one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Feature buckets. Texts hash into `0..d_in`.
    pub d_in: usize,
    /// Embedding width.
    pub d_out: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_in: 1 << 18,
            d_out: 64,
        }
    }
}

/// Sparse L2-normalized feature vector. `indices` is strictly increasing
/// and parallel to `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dense embedding produced by [`embed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn zeros(d_out: usize) -> Self {
        Embedding {
            values: vec![0.0; d_out],
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Entries i.i.d. uniform in [-1/sqrt(rows), +1/sqrt(rows)] drawn from
    /// the given generator in row-major order.
    pub fn seeded(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let bound = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        DenseMatrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// The trainable state of one retriever: `phi` for the anchor side, `psi`
/// for the candidate side.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrieverParams {
    pub phi: DenseMatrix,
    pub psi: DenseMatrix,
}

impl RetrieverParams {
    /// Fresh untrained parameters. One generator fills `phi` then `psi`,
    /// so the two maps are independent but jointly reproducible.
    pub fn seeded_init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let phi = DenseMatrix::seeded(cfg.d_in, cfg.d_out, &mut rng);
        let psi = DenseMatrix::seeded(cfg.d_in, cfg.d_out, &mut rng);
        RetrieverParams { phi, psi }
    }

    pub fn d_in(&self) -> usize {
        self.phi.rows
    }

    pub fn d_out(&self) -> usize {
        self.phi.cols
    }
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parameter stream does not start with the RLIC magic")]
    BadMagic,
    #[error("parameter format version {found} is not supported (expected {PARAMS_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("parameter stream corrupt: {reason}")]
    Corrupt { reason: String },
    #[error("bank {language:?} is empty")]
    EmptyBank { language: String },
}

/// Raw bucket counts before normalization: every 2-, 3- and 4-gram of the
/// lowercased text, bucketed by content hash modulo `d_in`.
pub(crate) fn ngram_counts(text: &str, d_in: usize) -> std::collections::BTreeMap<u32, f64> {
    assert!(d_in > 0 && d_in <= u32::MAX as usize, "d_in out of range");
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut counts = std::collections::BTreeMap::new();
    let mut utf8 = [0u8; 4];
    for n in NGRAM_SIZES {
        if chars.len() < n {
            continue;
        }
        for window in chars.windows(n) {
            let mut h = fnv_init();
            for &ch in window {
                h = fnv_update(h, ch.encode_utf8(&mut utf8).as_bytes());
            }
            let bucket = (h % d_in as u64) as u32;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
    }
    counts
}

/// Hashed character n-gram features of `text`, L2-normalized. Texts shorter
/// than the smallest n-gram produce the zero vector.
pub fn featurize(text: &str, d_in: usize) -> FeatureVector {
    let counts = ngram_counts(text, d_in);
    let mut indices = Vec::with_capacity(counts.len());
    let mut values = Vec::with_capacity(counts.len());
    for (bucket, count) in counts {
        indices.push(bucket);
        values.push(count);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    FeatureVector {
        dim: d_in,
        indices,
        values,
    }
}

/// The text a query-response pair contributes to featurization. Test items
/// at inference time go through the same serialization as bank examples.
pub fn query_response_text(query: &str, response: &str) -> String {
    format!("{query} {response}")
}

/// The text a single example contributes to featurization.
pub fn item_text(t: &ExampleTriplet) -> String {
    query_response_text(&t.query, &t.response)
}

/// The text a context pair contributes to featurization: both members,
/// unit-separated, positive first.
pub fn pair_text(p: &ContextPair) -> String {
    let sep = UNIT_SEP as char;
    format!(
        "{}\n{}\n{}\n{}\n{}",
        p.positive.query, p.positive.response, sep, p.negative.query, p.negative.response
    )
}

/// `matrix` transposed times `fv`: a dense `cols`-vector accumulated over
/// the rows the active features touch, in increasing index order.
pub fn embed(matrix: &DenseMatrix, fv: &FeatureVector) -> Embedding {
    assert_eq!(
        matrix.rows, fv.dim,
        "feature dimension must match matrix rows"
    );
    let mut out = vec![0.0; matrix.cols];
    for (&i, &v) in fv.indices.iter().zip(fv.values.iter()) {
        let row = matrix.row(i as usize);
        for (o, &m) in out.iter_mut().zip(row.iter()) {
            *o += v * m;
        }
    }
    Embedding { values: out }
}

/// Dot product of two embeddings of equal width.
pub fn similarity(u: &Embedding, v: &Embedding) -> f64 {
    assert_eq!(
        u.values.len(),
        v.values.len(),
        "embeddings must share d_out"
    );
    u.values
        .iter()
        .zip(v.values.iter())
        .map(|(a, b)| a * b)
        .sum()
}

pub(crate) fn mean_of(embeddings: &[Embedding], d_out: usize) -> Embedding {
    let mut out = vec![0.0; d_out];
    for e in embeddings {
        for (o, &v) in out.iter_mut().zip(e.values.iter()) {
            *o += v;
        }
    }
    if !embeddings.is_empty() {
        let n = embeddings.len() as f64;
        for o in &mut out {
            *o /= n;
        }
    }
    Embedding { values: out }
}

/// Mean embedding of every example in the bank (both polarities, positives
/// first) under a fixed reference matrix.
pub fn mean_bank_embedding(
    bank: &ExampleBank,
    reference: &DenseMatrix,
) -> Result<Embedding, EncoderError> {
    if bank.is_empty() {
        return Err(EncoderError::EmptyBank {
            language: bank.language.clone(),
        });
    }
    let embeddings: Vec<Embedding> = bank
        .iter()
        .map(|t| embed(reference, &featurize(&item_text(t), reference.rows)))
        .collect();
    Ok(mean_of(&embeddings, reference.cols))
}

const PARAMS_MAGIC: [u8; 4] = *b"RLIC";
const PARAMS_VERSION: u32 = 1;

/// Versioned binary encoding: magic, format version, `d_in`, `d_out`, then
/// `phi` and `psi` row-major as little-endian f64. Loads bit-identically.
pub fn serialize_params(params: &RetrieverParams) -> Vec<u8> {
    let d_in = params.d_in() as u64;
    let d_out = params.d_out() as u64;
    let mut out = Vec::with_capacity(24 + 16 * params.phi.data.len());
    out.extend_from_slice(&PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&d_in.to_le_bytes());
    out.extend_from_slice(&d_out.to_le_bytes());
    for matrix in [&params.phi, &params.psi] {
        for v in &matrix.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn deserialize_params(bytes: &[u8]) -> Result<RetrieverParams, EncoderError> {
    if bytes.len() < 4 || bytes[..4] != PARAMS_MAGIC {
        return Err(EncoderError::BadMagic);
    }
    let header_len = 4 + 4 + 8 + 8;
    if bytes.len() < header_len {
        return Err(EncoderError::Corrupt {
            reason: "header truncated".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PARAMS_VERSION {
        return Err(EncoderError::UnsupportedVersion { found: version });
    }
    let d_in = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let d_out = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let per_matrix = d_in
        .checked_mul(d_out)
        .ok_or_else(|| EncoderError::Corrupt {
            reason: "dimensions overflow".into(),
        })?;
    let expected = header_len + 2 * per_matrix * 8;
    if bytes.len() != expected {
        return Err(EncoderError::Corrupt {
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let read_matrix = |offset: usize| -> DenseMatrix {
        let data = bytes[offset..offset + per_matrix * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DenseMatrix {
            rows: d_in,
            cols: d_out,
            data,
        }
    };
    let phi = read_matrix(header_len);
    let psi = read_matrix(header_len + per_matrix * 8);
    Ok(RetrieverParams { phi, psi })
}

pub fn save_params(params: &RetrieverParams, path: impl AsRef<Path>) -> Result<(), EncoderError> {
    let path = path.as_ref();
    fs::write(path, serialize_params(params)).map_err(|e| EncoderError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_params(path: impl AsRef<Path>) -> Result<RetrieverParams, EncoderError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| EncoderError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    deserialize_params(&bytes)
}
