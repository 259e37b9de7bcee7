//! Word × word × article co-occurrence tensors and the tf-idf matrix.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Vocabulary};

pub const MIN_WINDOW: usize = 2;
pub const MAX_WINDOW: usize = 50;
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("window {0} outside [{MIN_WINDOW}, {MAX_WINDOW}]")]
    InvalidWindow(usize),
    #[error("coordinate ({i}, {j}, {k}) outside dims {dims:?}")]
    OutOfBounds {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
    },
    #[error("duplicate coordinate ({0}, {1}, {2})")]
    Duplicate(usize, usize, usize),
    #[error("non-finite value at ({0}, {1}, {2})")]
    NonFinite(usize, usize, usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frequency counts or presence indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorMode {
    Frequency,
    Binary,
}

impl fmt::Display for TensorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TensorMode::Frequency => "frequency",
            TensorMode::Binary => "binary",
        })
    }
}

impl FromStr for TensorMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frequency" => Ok(TensorMode::Frequency),
            "binary" => Ok(TensorMode::Binary),
            other => Err(format!("invalid tensor mode {other:?}")),
        }
    }
}

/// A pair of positions `p < q` co-occurs when `q - p < window`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensorConfig {
    pub window: usize,
    pub mode: TensorMode,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            window: DEFAULT_WINDOW,
            mode: TensorMode::Binary,
        }
    }
}

impl TensorConfig {
    pub fn validate(&self) -> Result<(), TensorError> {
        if !(MIN_WINDOW..=MAX_WINDOW).contains(&self.window) {
            return Err(TensorError::InvalidWindow(self.window));
        }
        Ok(())
    }
}

/// Three-mode coordinate-format tensor. Entries are kept sorted by
/// `(k, i, j)` with no duplicate coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    dims: [usize; 3],
    coords: Vec<[usize; 3]>,
    values: Vec<f64>,
}

impl SparseTensor {
    pub fn from_entries(
        dims: [usize; 3],
        mut entries: Vec<([usize; 3], f64)>,
    ) -> Result<Self, TensorError> {
        for &([i, j, k], v) in &entries {
            if i >= dims[0] || j >= dims[1] || k >= dims[2] {
                return Err(TensorError::OutOfBounds { i, j, k, dims });
            }
            if !v.is_finite() {
                return Err(TensorError::NonFinite(i, j, k));
            }
        }
        entries.sort_unstable_by_key(|&([i, j, k], _)| (k, i, j));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            let [i, j, k] = w[0].0;
            return Err(TensorError::Duplicate(i, j, k));
        }
        let (coords, values) = entries.into_iter().unzip();
        Ok(SparseTensor {
            dims,
            coords,
            values,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coords(&self) -> &[[usize; 3]] {
        &self.coords
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        self.coords.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coords
            .binary_search_by_key(&(k, i, j), |&[a, b, c]| (c, a, b))
            .map(|pos| self.values[pos])
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every stored value by `factor`.
    pub fn scaled(&self, factor: f64) -> SparseTensor {
        SparseTensor {
            dims: self.dims,
            coords: self.coords.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Entries of frontal slice `k`.
    pub fn slice(&self, k: usize) -> impl Iterator<Item = ([usize; 3], f64)> + '_ {
        let start = self.coords.partition_point(|c| c[2] < k);
        let end = self.coords.partition_point(|c| c[2] <= k);
        self.coords[start..end]
            .iter()
            .copied()
            .zip(self.values[start..end].iter().copied())
    }

    /// True when every frontal slice is symmetric in its two word modes.
    pub fn is_slice_symmetric(&self) -> bool {
        self.iter().all(|([i, j, k], v)| self.get(j, i, k) == v)
    }

    /// Writes the `I J K` header then `i j k value` lines in `(k, i, j)` order.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<(), TensorError> {
        let [a, b, c] = self.dims;
        writeln!(out, "{a} {b} {c}")?;
        for ([i, j, k], v) in self.iter() {
            writeln!(out, "{i} {j} {k} {v}")?;
        }
        Ok(())
    }

    pub fn read_coo<R: BufRead>(input: R) -> Result<Self, TensorError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(TensorError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let dims = parse_fields::<usize, 3>(&header?, 1)?;
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(TensorError::Parse {
                    line: n + 1,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let idx = parse_fields::<usize, 3>(&fields[..3].join(" "), n + 1)?;
            let value: f64 = fields[3].parse().map_err(|e| TensorError::Parse {
                line: n + 1,
                reason: format!("{e}"),
            })?;
            entries.push((idx, value));
        }
        SparseTensor::from_entries(dims, entries)
    }
}

fn parse_fields<T: FromStr, const N: usize>(
    line: &str,
    lineno: usize,
) -> Result<[T; N], TensorError>
where
    T::Err: fmt::Display,
{
    let parsed: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|e| TensorError::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
    parsed.try_into().map_err(|v: Vec<T>| TensorError::Parse {
        line: lineno,
        reason: format!("expected {N} fields, found {}", v.len()),
    })
}

/// Unordered in-window pair counts of one token sequence, keyed `(min, max)`.
/// Out-of-vocabulary tokens hold their positions but produce no pairs; equal
/// words produce no pairs.
pub(crate) fn window_pair_counts(
    word_ids: &[Option<usize>],
    window: usize,
) -> HashMap<(usize, usize), u32> {
    let mut counts = HashMap::new();
    for (p, first) in word_ids.iter().enumerate() {
        let Some(a) = *first else { continue };
        let end = (p + window).min(word_ids.len());
        for second in &word_ids[p + 1..end] {
            match *second {
                Some(b) if b != a => *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1,
                _ => {}
            }
        }
    }
    counts
}

/// Builds the `I × I × M` co-occurrence tensor of `corpus` over `vocab`.
pub fn build_cooccurrence_tensor(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &TensorConfig,
) -> Result<SparseTensor, TensorError> {
    if vocab.is_empty() {
        return Err(TensorError::EmptyVocabulary);
    }
    config.validate()?;
    let slices: Vec<Vec<([usize; 3], f64)>> = corpus
        .articles()
        .par_iter()
        .enumerate()
        .map(|(k, article)| {
            let ids: Vec<Option<usize>> = article.tokens.iter().map(|t| vocab.get(t)).collect();
            let mut slice: Vec<([usize; 3], f64)> = window_pair_counts(&ids, config.window)
                .into_iter()
                .flat_map(|((i, j), count)| {
                    let v = match config.mode {
                        TensorMode::Frequency => f64::from(count),
                        TensorMode::Binary => 1.0,
                    };
                    [([i, j, k], v), ([j, i, k], v)]
                })
                .collect();
            slice.sort_unstable_by_key(|&([i, j, _], _)| (i, j));
            slice
        })
        .collect();
    // Slices arrive in k order and are sorted within, so the concatenation
    // is already in (k, i, j) order.
    let total = slices.iter().map(Vec::len).sum();
    let mut coords = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    for (c, v) in slices.into_iter().flatten() {
        coords.push(c);
        values.push(v);
    }
    Ok(SparseTensor {
        dims: [vocab.len(), vocab.len(), corpus.len()],
        coords,
        values,
    })
}

/// Sparse `M × I` tf-idf weights; each row holds `(word, weight)` pairs with
/// positive weight, sorted by word.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfMatrix {
    n_words: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TfidfMatrix {
    pub fn dims(&self) -> (usize, usize) {
        (self.rows.len(), self.n_words)
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, article: usize, word: usize) -> f64 {
        let row = &self.rows[article];
        row.binary_search_by_key(&word, |&(w, _)| w)
            .map(|p| row[p].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_words);
        for (r, row) in self.rows.iter().enumerate() {
            for &(w, v) in row {
                m[(r, w)] = v;
            }
        }
        m
    }
}

/// Raw term count times `ln(M / df)`; no normalization.
pub fn build_tfidf(corpus: &Corpus, vocab: &Vocabulary) -> Result<TfidfMatrix, TensorError> {
    if vocab.is_empty() {
        return Err(TensorError::EmptyVocabulary);
    }
    let counts: Vec<Vec<(usize, f64)>> = corpus
        .articles()
        .par_iter()
        .map(|article| {
            let mut tf: HashMap<usize, f64> = HashMap::new();
            for w in article.tokens.iter().filter_map(|t| vocab.get(t)) {
                *tf.entry(w).or_insert(0.0) += 1.0;
            }
            let mut row: Vec<(usize, f64)> = tf.into_iter().collect();
            row.sort_unstable_by_key(|&(w, _)| w);
            row
        })
        .collect();
    let mut df = vec![0usize; vocab.len()];
    for &(w, _) in counts.iter().flatten() {
        df[w] += 1;
    }
    let m = corpus.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { (m / d as f64).ln() })
        .collect();
    let rows = counts
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(w, tf)| (w, tf * idf[w]))
                .filter(|&(_, v)| v > 0.0)
                .collect()
        })
        .collect();
    Ok(TfidfMatrix {
        n_words: vocab.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, Label};
    use proptest::prelude::*;

    fn corpus(docs: &[&[&str]]) -> Corpus {
        Corpus::new(
            docs.iter()
                .enumerate()
                .map(|(k, toks)| {
                    Article::from_tokens(format!("d{k}"), toks.iter().copied(), Label::Unknown)
                })
                .collect(),
        )
        .unwrap()
    }

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().copied()).unwrap()
    }

    fn config(window: usize, mode: TensorMode) -> TensorConfig {
        TensorConfig { window, mode }
    }

    #[test]
    fn frequency_aba_window_two() {
        let c = corpus(&[&["a", "b", "a"]]);
        let v = vocab(&["a", "b"]);
        let t = build_cooccurrence_tensor(&c, &v, &config(2, TensorMode::Frequency)).unwrap();
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.get(0, 1, 0), 2.0);
        assert_eq!(t.get(1, 0, 0), 2.0);
        assert_eq!(t.get(0, 0, 0), 0.0);
    }

    #[test]
    fn binary_aba_window_two() {
        let c = corpus(&[&["a", "b", "a"]]);
        let v = vocab(&["a", "b"]);
        let t = build_cooccurrence_tensor(&c, &v, &config(2, TensorMode::Binary)).unwrap();
        assert_eq!(t.get(0, 1, 0), 1.0);
        assert_eq!(t.get(1, 0, 0), 1.0);
        assert_eq!(t.nnz(), 2);
    }

    #[test]
    fn window_three_still_excludes_diagonal() {
        let c = corpus(&[&["a", "b", "a"]]);
        let v = vocab(&["a", "b"]);
        let t = build_cooccurrence_tensor(&c, &v, &config(3, TensorMode::Frequency)).unwrap();
        assert_eq!(t.get(0, 1, 0), 2.0);
        assert_eq!(t.get(1, 0, 0), 2.0);
        assert_eq!(t.get(0, 0, 0), 0.0);
        assert_eq!(t.nnz(), 2);
    }

    #[test]
    fn single_token_article_has_empty_slice() {
        let c = corpus(&[&["a"], &["a", "b"]]);
        let v = vocab(&["a", "b"]);
        let t = build_cooccurrence_tensor(&c, &v, &TensorConfig::default()).unwrap();
        assert_eq!(t.slice(0).count(), 0);
        assert_eq!(t.slice(1).count(), 2);
        assert_eq!(t.dims(), [2, 2, 2]);
    }

    #[test]
    fn oov_tokens_occupy_positions() {
        // "zz" sits between a and b, pushing them two apart.
        let c = corpus(&[&["a", "zz", "b"]]);
        let v = vocab(&["a", "b"]);
        let t2 = build_cooccurrence_tensor(&c, &v, &config(2, TensorMode::Frequency)).unwrap();
        assert!(t2.is_empty());
        let t3 = build_cooccurrence_tensor(&c, &v, &config(3, TensorMode::Frequency)).unwrap();
        assert_eq!(t3.get(0, 1, 0), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = corpus(&[&["a", "b"]]);
        let empty = Vocabulary::from_words(Vec::<String>::new()).unwrap();
        assert!(matches!(
            build_cooccurrence_tensor(&c, &empty, &TensorConfig::default()),
            Err(TensorError::EmptyVocabulary)
        ));
        assert!(matches!(
            build_cooccurrence_tensor(&c, &vocab(&["a"]), &config(1, TensorMode::Binary)),
            Err(TensorError::InvalidWindow(1))
        ));
        assert!(matches!(
            build_cooccurrence_tensor(&c, &vocab(&["a"]), &config(51, TensorMode::Binary)),
            Err(TensorError::InvalidWindow(51))
        ));
    }

    #[test]
    fn from_entries_validates() {
        assert!(matches!(
            SparseTensor::from_entries([2, 2, 2], vec![([2, 0, 0], 1.0)]),
            Err(TensorError::OutOfBounds { .. })
        ));
        assert!(matches!(
            SparseTensor::from_entries([2, 2, 2], vec![([1, 0, 0], 1.0), ([1, 0, 0], 2.0)]),
            Err(TensorError::Duplicate(1, 0, 0))
        ));
    }

    #[test]
    fn coo_text_format() {
        let t = SparseTensor::from_entries(
            [3, 3, 2],
            vec![([2, 1, 1], 1.0), ([0, 1, 0], 2.5), ([1, 0, 0], 2.5)],
        )
        .unwrap();
        let mut buf = Vec::new();
        t.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "3 3 2\n0 1 0 2.5\n1 0 0 2.5\n2 1 1 1\n");
        let back = SparseTensor::read_coo(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(matches!(
            SparseTensor::read_coo("3 3\n".as_bytes()),
            Err(TensorError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            SparseTensor::read_coo("3 3 1\n0 1 0\n".as_bytes()),
            Err(TensorError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn tfidf_formula() {
        let c = corpus(&[&["x", "x", "x", "y"], &["y", "z"]]);
        let v = vocab(&["x", "y", "z"]);
        let m = build_tfidf(&c, &v).unwrap();
        assert_eq!(m.dims(), (2, 3));
        assert!((m.get(0, 0) - 3.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(m.get(1, 0), 0.0);
        // y appears everywhere.
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert!((m.get(1, 2) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn tfidf_empty_article_row_is_zero() {
        let c = corpus(&[&[], &["x"]]);
        let m = build_tfidf(&c, &vocab(&["x"])).unwrap();
        assert!(m.rows()[0].is_empty());
        assert_eq!(m.to_dense().row(0).sum(), 0.0);
    }

    /// Counts in-window pairs directly from positions.
    fn brute_force_slice_mass(tokens: &[usize], vocab_size: usize, window: usize) -> f64 {
        let mut pairs = 0usize;
        for p in 0..tokens.len() {
            for q in p + 1..tokens.len() {
                if q - p < window
                    && tokens[p] < vocab_size
                    && tokens[q] < vocab_size
                    && tokens[p] != tokens[q]
                {
                    pairs += 1;
                }
            }
        }
        2.0 * pairs as f64
    }

    proptest! {
        #[test]
        fn slice_mass_matches_pair_enumeration(
            docs in proptest::collection::vec(proptest::collection::vec(0usize..8, 0..50), 1..5),
            window in 2usize..9,
        ) {
            // Words 6 and 7 are out of vocabulary.
            let names: Vec<String> = (0..8).map(|w| format!("w{w}")).collect();
            let v = Vocabulary::from_words(names[..6].iter().cloned()).unwrap();
            let c = Corpus::new(docs.iter().enumerate().map(|(k, d)| {
                Article::from_tokens(format!("d{k}"), d.iter().map(|&w| names[w].clone()), Label::Unknown)
            }).collect()).unwrap();
            let freq = build_cooccurrence_tensor(&c, &v, &config(window, TensorMode::Frequency)).unwrap();
            let bin = build_cooccurrence_tensor(&c, &v, &config(window, TensorMode::Binary)).unwrap();
            prop_assert!(freq.is_slice_symmetric());
            prop_assert!(bin.is_slice_symmetric());
            prop_assert_eq!(freq.coords(), bin.coords());
            prop_assert!(bin.values().iter().all(|&v| v == 1.0));
            prop_assert!(freq.coords().iter().all(|&[i, j, _]| i != j));
            for (k, d) in docs.iter().enumerate() {
                let mass: f64 = freq.slice(k).map(|(_, v)| v).sum();
                prop_assert_eq!(mass, brute_force_slice_mass(d, 6, window));
            }
        }
    }
}
