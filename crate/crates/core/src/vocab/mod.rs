//! Frequency-ranked vocabulary with `<unk>`/`<pad>` specials. Texts are
//! encoded into fixed token grids; the word-embedding table lives here too.

mod embeddings;

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::Array2;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::corpus::{TextCaps, TokenizedText};
use crate::error::{Error, Result};

pub use embeddings::{init_random_embeddings, load_embeddings, EmbeddingTable, EMBED_INIT_RANGE};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const DEFAULT_MAX_SIZE: usize = 25_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    total_occurrences: u64,
    distinct_tokens: usize,
    max_size: usize,
}

/// Stored next to datasets and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSummary {
    pub max_size: usize,
    pub size: usize,
    pub distinct_tokens: usize,
    pub total_tokens: u64,
    pub covered_tokens: u64,
    pub coverage: f64,
}

/// Keeps the `max_size` most frequent tokens (ties broken lexicographically).
pub fn build_vocab<'a, I>(corpus: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a TokenizedText>,
{
    if max_size == 0 {
        return Err(Error::InvalidArgument(
            "vocabulary max size must be positive".into(),
        ));
    }
    let mut freq: HashMap<&'a str, u64> = HashMap::new();
    let mut total = 0u64;
    for text in corpus {
        for tok in text.tokens() {
            *freq.entry(tok).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let distinct = freq.len();
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    let (tokens, counts): (Vec<String>, Vec<u64>) =
        ranked.into_iter().map(|(t, c)| (t.to_owned(), c)).unzip();
    Ok(Vocabulary::from_parts(
        tokens, counts, total, distinct, max_size,
    ))
}

impl Vocabulary {
    fn from_parts(
        tokens: Vec<String>,
        counts: Vec<u64>,
        total_occurrences: u64,
        distinct_tokens: usize,
        max_size: usize,
    ) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            counts,
            index,
            total_occurrences,
            distinct_tokens,
            max_size,
        }
    }

    /// Number of regular (non-special) tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Rows needed in an embedding table: regular tokens plus the two specials.
    pub fn num_ids(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn unk_id(&self) -> u32 {
        self.tokens.len() as u32
    }

    pub fn pad_id(&self) -> u32 {
        self.tokens.len() as u32 + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.counts[i as usize])
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, `<unk>` when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or_else(|| self.unk_id())
    }

    pub fn token(&self, id: u32) -> &str {
        match id as usize {
            i if i < self.tokens.len() => &self.tokens[i],
            i if i == self.tokens.len() => UNK,
            _ => PAD,
        }
    }

    pub fn covered_occurrences(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_occurrences(&self) -> u64 {
        self.total_occurrences
    }

    /// Exact fraction of corpus occurrences that map to a regular id.
    pub fn coverage_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.covered_occurrences(), self.total_occurrences)
    }

    pub fn coverage(&self) -> f64 {
        self.covered_occurrences() as f64 / self.total_occurrences as f64
    }

    pub fn summary(&self) -> VocabSummary {
        VocabSummary {
            max_size: self.max_size,
            size: self.len(),
            distinct_tokens: self.distinct_tokens,
            total_tokens: self.total_occurrences,
            covered_tokens: self.covered_occurrences(),
            coverage: self.coverage(),
        }
    }

    /// `rank<TAB>token<TAB>count` per line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (rank, (t, c)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(s, "{rank}\t{t}\t{c}").expect("write to string");
        }
        s
    }

    pub fn from_tsv(tsv: &str, summary: &VocabSummary) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (n, line) in tsv.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || {
                Error::Dataset(format!(
                    "vocab.tsv line {}: expected rank, token, count",
                    n + 1
                ))
            };
            let mut f = line.split('\t');
            let rank: usize = f.next().and_then(|r| r.parse().ok()).ok_or_else(bad)?;
            let tok = f.next().ok_or_else(bad)?;
            let count: u64 = f.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            if rank != tokens.len() || f.next().is_some() {
                return Err(bad());
            }
            tokens.push(tok.to_owned());
            counts.push(count);
        }
        Ok(Self::from_parts(
            tokens,
            counts,
            summary.total_tokens,
            summary.distinct_tokens,
            summary.max_size,
        ))
    }
}

/// Fixed `max_sentences × max_tokens` id grid plus real-token mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    pub ids: Array2<u32>,
    pub mask: Array2<bool>,
}

impl TokenGrid {
    pub fn dims(&self) -> (usize, usize) {
        self.ids.dim()
    }

    /// Real positions of sentence `s`, in order.
    pub fn real_positions(&self, s: usize) -> Vec<usize> {
        self.mask
            .row(s)
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
            .collect()
    }

    pub fn num_real(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Number of leading sentences and words needed to cover every real cell.
    pub fn extent(&self) -> (usize, usize) {
        let (mut rows, mut cols) = (0, 0);
        for ((i, j), &m) in self.mask.indexed_iter() {
            if m {
                rows = rows.max(i + 1);
                cols = cols.max(j + 1);
            }
        }
        (rows, cols)
    }
}

pub fn encode_tokens(text: &TokenizedText, vocab: &Vocabulary, caps: TextCaps) -> TokenGrid {
    let shape = (caps.max_sentences, caps.max_tokens);
    let mut ids = Array2::from_elem(shape, vocab.pad_id());
    let mut mask = Array2::from_elem(shape, false);
    for (i, sentence) in text.sentences.iter().take(caps.max_sentences).enumerate() {
        for (j, tok) in sentence.iter().take(caps.max_tokens).enumerate() {
            ids[[i, j]] = vocab.id(tok);
            mask[[i, j]] = true;
        }
    }
    TokenGrid { ids, mask }
}

/// Maps real grid cells back to tokens.
pub fn decode_tokens(grid: &TokenGrid, vocab: &Vocabulary) -> TokenizedText {
    let sentences = (0..grid.dims().0)
        .map(|i| {
            grid.real_positions(i)
                .into_iter()
                .map(|j| vocab.token(grid.ids[[i, j]]).to_owned())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    TokenizedText { sentences }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn text(sentences: &[&[&str]]) -> TokenizedText {
        TokenizedText::from_sentences(sentences)
    }

    #[test]
    fn two_thirds_coverage() {
        let corpus = [text(&[&["a", "a", "b"]])];
        let v = build_vocab(&corpus, 1).unwrap();
        assert_eq!(v.tokens(), ["a"]);
        assert_eq!(v.coverage_ratio(), Ratio::new(2, 3));
        assert_eq!(v.unk_id(), 1);
        assert_eq!(v.pad_id(), 2);
    }

    #[test]
    fn ties_are_lexicographic() {
        let corpus = [text(&[&["z", "y", "x", "y", "z"]])];
        let v = build_vocab(&corpus, 2).unwrap();
        assert_eq!(v.tokens(), ["y", "z"]);
    }

    #[test]
    fn empty_corpus() {
        let corpus: [TokenizedText; 0] = [];
        assert!(matches!(build_vocab(&corpus, 5), Err(Error::EmptyCorpus)));
        assert!(matches!(
            build_vocab(&[TokenizedText::default()], 5),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn encode_cases() {
        let corpus = [text(&[&["the", "cat"], &["sat"]])];
        let v = build_vocab(&corpus, 10).unwrap();
        let caps = TextCaps {
            max_sentences: 3,
            max_tokens: 4,
        };
        let g = encode_tokens(&corpus[0], &v, caps);
        assert!(!g.ids.iter().any(|&i| i == v.unk_id()));
        assert_eq!(g.num_real(), 3);

        let empty = encode_tokens(&TokenizedText::default(), &v, caps);
        assert!(empty.ids.iter().all(|&i| i == v.pad_id()));
        assert!(empty.mask.iter().all(|&m| !m));

        let oov = encode_tokens(&text(&[&["the", "dog"]]), &v, caps);
        let unks: Vec<_> = oov
            .ids
            .indexed_iter()
            .filter(|(_, &i)| i == v.unk_id())
            .map(|(p, _)| p)
            .collect();
        assert_eq!(unks, vec![(0, 1)]);
    }

    #[test]
    fn tsv_round_trip() {
        let corpus = [text(&[&["b", "a", "b", "c"]])];
        let v = build_vocab(&corpus, 2).unwrap();
        let back = Vocabulary::from_tsv(&v.to_tsv(), &v.summary()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn coverage_monotone_in_max_size() {
        let corpus = [text(&[&["a", "b", "b", "c", "c", "c", "d"]])];
        let covs: Vec<_> = (1..=5)
            .map(|k| build_vocab(&corpus, k).unwrap().coverage_ratio())
            .collect();
        assert!(covs.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*covs.last().unwrap(), Ratio::new(1, 1));
    }

    proptest! {
        #[test]
        fn encode_decode_identity_in_vocab(words in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..6), 1..5)) {
            let t = TokenizedText { sentences: words };
            let v = build_vocab(std::slice::from_ref(&t), 1000).unwrap();
            let g = encode_tokens(&t, &v, TextCaps { max_sentences: 5, max_tokens: 6 });
            prop_assert_eq!(decode_tokens(&g, &v), t);
        }
    }
}
