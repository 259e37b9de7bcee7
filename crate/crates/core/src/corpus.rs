//! Article ingestion, text normalization, vocabulary construction and
//! class balancing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bundled English stopword list, one word per line.
pub const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// Tokens shorter than this (in characters) are dropped.
pub const MIN_TOKEN_CHARS: usize = 2;

/// Default vocabulary cap.
pub const DEFAULT_MAX_VOCAB: usize = 5_000;

const MAX_STEM_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("{location}: malformed record: {reason}")]
    Malformed { location: String, reason: String },
    #[error("duplicate article id {0:?}")]
    DuplicateId(String),
    #[error("empty corpus")]
    Empty,
    #[error("corpus contains no tokens")]
    NoTokens,
    #[error("cannot balance classes: no {0} articles")]
    EmptyClass(Label),
    #[error("unknown corpus format {0:?} (expected jsonl, csv or directory)")]
    UnknownFormat(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ground-truth (or revealed) class of an article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
    Unknown,
}

impl Label {
    /// +1 for real, -1 for fake, 0 for unknown.
    pub fn sign(self) -> i8 {
        match self {
            Label::Real => 1,
            Label::Fake => -1,
            Label::Unknown => 0,
        }
    }

    pub fn from_sign(sign: i8) -> Label {
        match sign.signum() {
            1 => Label::Real,
            -1 => Label::Fake,
            _ => Label::Unknown,
        }
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            "" | "unknown" | "null" => Ok(Label::Unknown),
            other => Err(format!("invalid label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
    Directory,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            "directory" | "dir" => Ok(CorpusFormat::Directory),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl CorpusFormat {
    /// Directories load as directories, `*.csv` as CSV, anything else as JSONL.
    pub fn infer(path: &Path) -> CorpusFormat {
        if path.is_dir() {
            CorpusFormat::Directory
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            CorpusFormat::Csv
        } else {
            CorpusFormat::Jsonl
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub id: String,
    /// Raw text as loaded. Empty for articles built directly from tokens.
    pub text: String,
    pub tokens: Vec<String>,
    pub label: Label,
    pub category: Option<String>,
}

impl Article {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Article {
            id: id.into(),
            text: text.into(),
            tokens: Vec::new(),
            label,
            category: None,
        }
    }

    /// An already-normalized article.
    pub fn from_tokens<S: Into<String>>(
        id: impl Into<String>,
        tokens: impl IntoIterator<Item = S>,
        label: Label,
    ) -> Self {
        Article {
            id: id.into(),
            text: String::new(),
            tokens: tokens.into_iter().map(Into::into).collect(),
            label,
            category: None,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    /// Token count.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Ordered, id-unique, non-empty collection of articles.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    articles: Vec<Article>,
}

impl Corpus {
    pub fn new(articles: Vec<Article>) -> Result<Self, CorpusError> {
        if articles.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::with_capacity(articles.len());
        for article in &articles {
            if !seen.insert(article.id.as_str()) {
                return Err(CorpusError::DuplicateId(article.id.clone()));
            }
        }
        Ok(Corpus { articles })
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn into_articles(self) -> Vec<Article> {
        self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Article> {
        self.articles.iter()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.articles.iter().map(|a| a.label).collect()
    }

    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for article in &self.articles {
            *counts.entry(article.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn count(&self, label: Label) -> usize {
        self.articles.iter().filter(|a| a.label == label).count()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.articles.iter().position(|a| a.id == id)
    }

    /// Tokenizes every article in place.
    pub fn preprocess(&mut self, preprocessor: &Preprocessor) {
        self.articles
            .par_iter_mut()
            .for_each(|a| a.tokens = preprocessor.process(&a.text));
    }

    /// Sub-corpus of the articles at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Corpus, CorpusError> {
        Corpus::new(indices.iter().map(|&i| self.articles[i].clone()).collect())
    }

    pub fn mean_length(&self) -> f64 {
        let total: usize = self.articles.iter().map(Article::len).sum();
        total as f64 / self.articles.len() as f64
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Article;
    type IntoIter = std::slice::Iter<'a, Article>;

    fn into_iter(self) -> Self::IntoIter {
        self.articles.iter()
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

impl RawRecord {
    fn into_article(self, location: impl FnOnce() -> String) -> Result<Article, CorpusError> {
        let label = match self.label.as_deref() {
            None => Label::Unknown,
            Some(s) => s.parse().map_err(|reason| CorpusError::Malformed {
                location: location(),
                reason,
            })?,
        };
        let category = self.category.filter(|c| !c.trim().is_empty());
        Ok(Article {
            id: self.id,
            text: self.text,
            tokens: Vec::new(),
            label,
            category,
        })
    }
}

/// Loads raw articles; call [`Corpus::preprocess`] before building a vocabulary.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingPath(path.to_path_buf()));
    }
    let articles = match format {
        CorpusFormat::Jsonl => load_jsonl(path)?,
        CorpusFormat::Csv => load_csv(path)?,
        CorpusFormat::Directory => load_directory(path)?,
    };
    Corpus::new(articles)
}

fn load_jsonl(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let content = fs::read_to_string(path).map_err(io_err(path))?;
    let mut articles = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let location = || format!("{}:{}", path.display(), lineno + 1);
        let record: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            location: location(),
            reason: e.to_string(),
        })?;
        articles.push(record.into_article(location)?);
    }
    Ok(articles)
}

fn load_csv(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::Malformed {
        location: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut articles = Vec::new();
    for (n, record) in reader.deserialize::<RawRecord>().enumerate() {
        let location = || format!("{}:record {}", path.display(), n + 1);
        let record = record.map_err(|e| CorpusError::Malformed {
            location: location(),
            reason: e.to_string(),
        })?;
        articles.push(record.into_article(location)?);
    }
    Ok(articles)
}

#[derive(Debug, Deserialize)]
struct SidecarRecord {
    id: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    category: Option<String>,
}

fn load_directory(dir: &Path) -> Result<Vec<Article>, CorpusError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();

    let sidecar = dir.join("labels.csv");
    let mut meta: HashMap<String, (Label, Option<String>)> = HashMap::new();
    if sidecar.exists() {
        let mut reader = csv::Reader::from_path(&sidecar).map_err(|e| CorpusError::Malformed {
            location: sidecar.display().to_string(),
            reason: e.to_string(),
        })?;
        for (n, record) in reader.deserialize::<SidecarRecord>().enumerate() {
            let location = || format!("{}:record {}", sidecar.display(), n + 1);
            let record = record.map_err(|e| CorpusError::Malformed {
                location: location(),
                reason: e.to_string(),
            })?;
            let label = match record.label.as_deref() {
                None => Label::Unknown,
                Some(s) => s.parse().map_err(|reason| CorpusError::Malformed {
                    location: location(),
                    reason,
                })?,
            };
            let category = record.category.filter(|c| !c.trim().is_empty());
            if meta.insert(record.id.clone(), (label, category)).is_some() {
                return Err(CorpusError::DuplicateId(record.id));
            }
        }
    }

    let mut articles = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        let (label, category) = meta.remove(&id).unwrap_or((Label::Unknown, None));
        articles.push(Article {
            id,
            text,
            tokens: Vec::new(),
            label,
            category,
        });
    }
    if let Some(orphan) = meta.keys().min() {
        return Err(CorpusError::Malformed {
            location: sidecar.display().to_string(),
            reason: format!("label for {orphan:?} has no matching .txt file"),
        });
    }
    Ok(articles)
}

/// Where the stopword list comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind", content = "path")]
pub enum StopwordSource {
    #[default]
    English,
    File(PathBuf),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub stopwords: StopwordSource,
    pub stem: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: StopwordSource::English,
            stem: true,
        }
    }
}

/// Lowercases, splits on non-alphanumeric characters, drops short tokens
/// and stopwords, and stems what remains.
///
/// Stems are iterated to a fixed point and re-filtered, so the output of
/// [`Preprocessor::process`] joined by spaces maps to itself.
pub struct Preprocessor {
    stopwords: HashSet<String>,
    stemmer: Option<Stemmer>,
}

impl fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preprocessor")
            .field("stopwords", &self.stopwords.len())
            .field("stem", &self.stemmer.is_some())
            .finish()
    }
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor::new(parse_stopwords(ENGLISH_STOPWORDS), true)
    }
}

pub fn parse_stopwords(list: &str) -> HashSet<String> {
    list.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl Preprocessor {
    pub fn new(stopwords: HashSet<String>, stem: bool) -> Self {
        Preprocessor {
            stopwords,
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    pub fn from_config(config: &PreprocessConfig) -> Result<Self, CorpusError> {
        let stopwords = match &config.stopwords {
            StopwordSource::English => parse_stopwords(ENGLISH_STOPWORDS),
            StopwordSource::File(path) => {
                parse_stopwords(&fs::read_to_string(path).map_err(io_err(path))?)
            }
            StopwordSource::None => HashSet::new(),
        };
        Ok(Preprocessor::new(stopwords, config.stem))
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn process(&self, raw_text: &str) -> Vec<String> {
        tokenize(raw_text)
            .filter(|t| !self.is_stopword(t))
            .filter_map(|t| {
                let stem = self.stem(&t);
                let keep = stem.chars().count() >= MIN_TOKEN_CHARS && !self.is_stopword(&stem);
                keep.then_some(stem)
            })
            .collect()
    }

    fn stem(&self, token: &str) -> String {
        let Some(stemmer) = &self.stemmer else {
            return token.to_string();
        };
        let mut current = token.to_string();
        for _ in 0..MAX_STEM_PASSES {
            let next = stemmer.stem(&current).into_owned();
            if next == current {
                break;
            }
            current = next;
        }
        current
    }
}

/// Lowercase tokens split on non-alphanumeric boundaries, short ones dropped.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS)
        .map(str::to_lowercase)
}

/// Bijection between words and `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Fails on duplicate words.
    pub fn from_words<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self, String> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary word {w:?}"));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }
}

/// The `max_vocab` most frequent tokens (all when `None`), ordered by
/// descending count then lexicographically.
pub fn build_vocabulary(
    corpus: &Corpus,
    max_vocab: Option<usize>,
) -> Result<Vocabulary, CorpusError> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for token in corpus.iter().flat_map(|a| a.tokens.iter()) {
        *counts.entry(token.as_str()).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Err(CorpusError::NoTokens);
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if let Some(cap) = max_vocab {
        ranked.truncate(cap);
    }
    let words = ranked.into_iter().map(|(w, _)| w.to_string());
    Ok(Vocabulary::from_words(words).expect("counted words are unique"))
}

/// Down-samples the larger of {real, fake} to the size of the smaller,
/// uniformly without replacement. File order and unknown-label articles
/// are preserved.
pub fn downsample_balance(corpus: &Corpus, seed: u64) -> Result<Corpus, CorpusError> {
    let real: Vec<usize> = positions(corpus, Label::Real);
    let fake: Vec<usize> = positions(corpus, Label::Fake);
    if real.is_empty() {
        return Err(CorpusError::EmptyClass(Label::Real));
    }
    if fake.is_empty() {
        return Err(CorpusError::EmptyClass(Label::Fake));
    }
    if real.len() == fake.len() {
        return Ok(corpus.clone());
    }
    let (larger, target) = if real.len() > fake.len() {
        (&real, fake.len())
    } else {
        (&fake, real.len())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped: HashSet<usize> = {
        let kept: HashSet<usize> = rand::seq::index::sample(&mut rng, larger.len(), target)
            .into_iter()
            .map(|i| larger[i])
            .collect();
        larger
            .iter()
            .copied()
            .filter(|i| !kept.contains(i))
            .collect()
    };
    let keep: Vec<usize> = (0..corpus.len()).filter(|i| !dropped.contains(i)).collect();
    corpus.select(&keep)
}

pub(crate) fn positions(corpus: &Corpus, label: Label) -> Vec<usize> {
    corpus
        .iter()
        .enumerate()
        .filter(|(_, a)| a.label == label)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn tokens(corpus_tokens: &[(&str, usize)]) -> Corpus {
        let toks: Vec<String> = corpus_tokens
            .iter()
            .flat_map(|(w, n)| std::iter::repeat_n(w.to_string(), *n))
            .collect();
        Corpus::new(vec![Article::from_tokens("a0", toks, Label::Unknown)]).unwrap()
    }

    fn labeled(real: usize, fake: usize) -> Corpus {
        let mut v = Vec::new();
        for i in 0..real {
            v.push(Article::from_tokens(format!("r{i}"), ["x"], Label::Real));
        }
        for i in 0..fake {
            v.push(Article::from_tokens(format!("f{i}"), ["y"], Label::Fake));
        }
        Corpus::new(v).unwrap()
    }

    #[test]
    fn preprocess_worked_example() {
        let p = Preprocessor::default();
        assert_eq!(p.process("The cats are running!"), vec!["cat", "run"]);
    }

    #[test]
    fn preprocess_empty_and_punctuation() {
        let p = Preprocessor::default();
        assert!(p.process("").is_empty());
        assert!(p.process("... !!! ---").is_empty());
    }

    #[test]
    fn preprocess_drops_short_tokens_and_keeps_order() {
        let p = Preprocessor::new(HashSet::new(), false);
        assert_eq!(p.process("a Bb c-dd, E42"), vec!["bb", "dd", "e42"]);
    }

    #[test]
    fn preprocess_handles_non_ascii() {
        let p = Preprocessor::new(HashSet::new(), false);
        assert_eq!(p.process("Новини: ЛЪЖА!"), vec!["новини", "лъжа"]);
    }

    #[test]
    fn stems_reach_fixed_point() {
        let p = Preprocessor::default();
        for word in ["accelerated", "agreed", "generalizations", "advertising"] {
            let once = p.process(word);
            assert_eq!(p.process(&once.join(" ")), once, "{word}");
        }
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in "[A-Za-z ,.!'-]{0,200}") {
            let p = Preprocessor::default();
            let once = p.process(&text);
            prop_assert_eq!(p.process(&once.join(" ")), once);
        }
    }

    #[test]
    fn vocabulary_top_k() {
        let c = tokens(&[("aa", 5), ("bb", 3), ("cc", 1)]);
        let v = build_vocabulary(&c, Some(2)).unwrap();
        assert_eq!(v.words(), ["aa", "bb"]);
        assert_eq!(build_vocabulary(&c, None).unwrap().len(), 3);
    }

    #[test]
    fn vocabulary_lexicographic_tie_break() {
        let c = tokens(&[("bb", 2), ("aa", 2)]);
        let v = build_vocabulary(&c, Some(1)).unwrap();
        assert_eq!(v.words(), ["aa"]);
        assert_eq!(v.get("aa"), Some(0));
        assert_eq!(v.get("bb"), None);
    }

    #[test]
    fn vocabulary_rejects_tokenless_corpus() {
        let c = Corpus::new(vec![Article::new("x", "", Label::Real)]).unwrap();
        assert!(matches!(
            build_vocabulary(&c, None),
            Err(CorpusError::NoTokens)
        ));
    }

    #[test]
    fn balance_forces_counts() {
        let c = labeled(10, 4);
        let b = downsample_balance(&c, 7).unwrap();
        assert_eq!(b.count(Label::Real), 4);
        assert_eq!(b.count(Label::Fake), 4);
        assert_eq!(b.len(), 8);
        let again = downsample_balance(&c, 7).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn balance_keeps_balanced_corpus() {
        let c = labeled(4, 4);
        assert_eq!(downsample_balance(&c, 1).unwrap(), c);
    }

    #[test]
    fn balance_requires_both_classes() {
        assert!(matches!(
            downsample_balance(&labeled(3, 0), 1),
            Err(CorpusError::EmptyClass(Label::Fake))
        ));
    }

    proptest! {
        #[test]
        fn balance_output_is_balanced_subset(real in 1usize..30, fake in 1usize..30, seed: u64) {
            let c = labeled(real, fake);
            let b = downsample_balance(&c, seed).unwrap();
            prop_assert_eq!(b.count(Label::Real), real.min(fake));
            prop_assert_eq!(b.count(Label::Fake), real.min(fake));
            for a in &b {
                prop_assert!(c.position(&a.id).is_some());
            }
        }
    }

    fn write_tmp(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        (dir, path)
    }

    #[test]
    fn loads_jsonl_with_labels() {
        let (_d, path) = write_tmp(
            "c.jsonl",
            concat!(
                r#"{"id":"a","text":"x y","label":"fake","category":"satire"}"#,
                "\n",
                r#"{"id":"b","text":"x y","label":"real","category":null}"#,
                "\n",
                r#"{"id":"c","text":"z","label":null}"#,
                "\n"
            ),
        );
        let c = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.len(), 3);
        let counts = c.label_counts();
        assert_eq!(counts[&Label::Fake], 1);
        assert_eq!(counts[&Label::Real], 1);
        assert_eq!(counts[&Label::Unknown], 1);
        assert_eq!(c.articles()[0].category.as_deref(), Some("satire"));
    }

    #[test]
    fn jsonl_errors() {
        let (_d, empty) = write_tmp("e.jsonl", "");
        assert!(matches!(
            load_corpus(&empty, CorpusFormat::Jsonl),
            Err(CorpusError::Empty)
        ));
        let (_d2, dup) = write_tmp(
            "d.jsonl",
            "{\"id\":\"a1\",\"text\":\"\"}\n{\"id\":\"a1\",\"text\":\"\"}\n",
        );
        assert!(matches!(
            load_corpus(&dup, CorpusFormat::Jsonl),
            Err(CorpusError::DuplicateId(id)) if id == "a1"
        ));
        let (_d3, bad) = write_tmp("b.jsonl", "{\"id\":\"a\",\"text\":\"\"}\n{oops\n");
        match load_corpus(&bad, CorpusFormat::Jsonl) {
            Err(CorpusError::Malformed { location, .. }) => assert!(location.ends_with(":2")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/corpus.jsonl"), CorpusFormat::Jsonl),
            Err(CorpusError::MissingPath(_))
        ));
    }

    #[test]
    fn loads_csv_with_quoting() {
        let (_d, path) = write_tmp(
            "c.csv",
            "id,text,label,category\na,\"hello, \"\"world\"\"\",fake,clickbait\nb,plain,,\n",
        );
        let c = load_corpus(&path, CorpusFormat::Csv).unwrap();
        assert_eq!(c.articles()[0].text, "hello, \"world\"");
        assert_eq!(c.articles()[0].label, Label::Fake);
        assert_eq!(c.articles()[1].label, Label::Unknown);
        assert_eq!(c.articles()[1].category, None);
    }

    #[test]
    fn loads_directory_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "second").unwrap();
        fs::write(dir.path().join("a.txt"), "first").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        fs::write(dir.path().join("labels.csv"), "id,label\na,real\nb,fake\n").unwrap();
        let c = load_corpus(dir.path(), CorpusFormat::Directory).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.articles()[0].id, "a");
        assert_eq!(c.articles()[0].label, Label::Real);
        assert_eq!(c.articles()[1].label, Label::Fake);

        fs::write(dir.path().join("labels.csv"), "id,label\nzz,real\n").unwrap();
        assert!(matches!(
            load_corpus(dir.path(), CorpusFormat::Directory),
            Err(CorpusError::Malformed { .. })
        ));
    }
}
