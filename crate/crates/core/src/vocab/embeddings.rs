use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use super::Vocabulary;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

/// Rows not covered by a vector file are drawn from `U(-r, r)`.
pub const EMBED_INIT_RANGE: f64 = 0.1;

/// One row per vocabulary id; the `<pad>` row is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub matrix: Array2<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row(&self, id: u32) -> ArrayView1<'_, T> {
        self.matrix.row(id as usize)
    }
}

fn random_table<T: Scalar>(vocab: &Vocabulary, dim: usize, seed: u64) -> Array2<T> {
    let mut rng = rng_for(seed, "embeddings");
    let r = T::lit(EMBED_INIT_RANGE);
    let mut m = Array2::from_shape_simple_fn((vocab.num_ids(), dim), || rng.random_range(-r..=r));
    m.row_mut(vocab.pad_id() as usize).fill(T::zero());
    m
}

pub fn init_random_embeddings<T: Scalar>(
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> EmbeddingTable<T> {
    EmbeddingTable {
        matrix: random_table(vocab, dim, seed),
    }
}

/// Reads a text word-vector file (`<count> <dim>` header, then one
/// `token v1 ... vdim` line per word). Vocabulary tokens missing from the
/// file keep their seeded random row.
pub fn load_embeddings<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable<T>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines();
    let header = lines.next().ok_or(Error::MalformedVectorFile {
        line: 1,
        reason: "missing header".into(),
    })?;
    let mut h = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(count)), Some(Ok(file_dim)), None) = (h.next(), h.next(), h.next()) else {
        return Err(Error::MalformedVectorFile {
            line: 1,
            reason: format!("bad header `{header}`"),
        });
    };
    if file_dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: file_dim,
        });
    }
    let mut matrix = random_table::<T>(vocab, dim, seed);
    let mut seen = 0;
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-empty line");
        let values: Vec<f64> = fields
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedVectorFile {
                line: line_no,
                reason: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(Error::MalformedVectorFile {
                line: line_no,
                reason: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if let Some(id) = vocab.get(token) {
            for (dst, &v) in matrix.row_mut(id as usize).iter_mut().zip(&values) {
                *dst = T::lit(v);
            }
        }
    }
    if seen != count {
        return Err(Error::MalformedVectorFile {
            line: 1,
            reason: format!("header announces {count} vectors, file has {seen}"),
        });
    }
    Ok(EmbeddingTable { matrix })
}
