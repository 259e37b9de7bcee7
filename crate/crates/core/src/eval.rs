//! Label masking, classification metrics, parameter sweeps and
//! sub-sampling for sensitivity studies.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{downsample_balance, positions, Corpus, CorpusError, Label, Vocabulary};
use crate::fabp::LabelVector;
use crate::pipeline::{self, EmbeddingSource, PipelineConfig, SeedStream};
use crate::tensor::TensorMode;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("article {0:?} has no ground-truth label")]
    UnlabeledArticle(String),
    #[error("label fraction {fraction} reveals no {class} article")]
    NothingRevealed { fraction: f64, class: String },
    #[error("label fraction {0} leaves no held-out article")]
    NothingHeldOut(f64),
    #[error("no prediction for held-out article {0}")]
    MissingPrediction(usize),
    #[error("held-out article {0} has no ground truth")]
    MissingTruth(usize),
    #[error("sweep grid is empty: {0}")]
    EmptyGrid(&'static str),
    #[error("filter leaves no {0} article")]
    UnsatisfiableFilter(Label),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Counts with fake as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted == Label::Fake, truth == Label::Fake) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn report(&self) -> MetricReport {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (0.0, true)
            } else {
                (num as f64 / den as f64, false)
            }
        };
        let (accuracy, _) = ratio(self.tp + self.tn, self.total());
        let (precision, precision_undefined) = ratio(self.tp, self.tp + self.fp);
        let (recall, recall_undefined) = ratio(self.tp, self.tp + self.fn_);
        let f1_undefined = precision + recall == 0.0;
        let f1 = if f1_undefined {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        MetricReport {
            accuracy,
            precision,
            recall,
            f1,
            support: self.total(),
            confusion: *self,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

/// Metrics over held-out articles. Undefined ratios are reported as 0 with
/// the matching flag set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub confusion: Confusion,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

/// Scores `predictions` against `truth` on the `held_out` indices only.
pub fn score(
    predictions: &[Label],
    truth: &[Label],
    held_out: &[usize],
) -> Result<MetricReport, EvalError> {
    let mut confusion = Confusion::default();
    for &i in held_out {
        let predicted = match predictions.get(i) {
            Some(&l) if l.is_known() => l,
            _ => return Err(EvalError::MissingPrediction(i)),
        };
        let actual = match truth.get(i) {
            Some(&l) if l.is_known() => l,
            _ => return Err(EvalError::MissingTruth(i)),
        };
        confusion.record(predicted, actual);
    }
    Ok(confusion.report())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Fraction of articles whose labels are revealed.
    pub label_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            label_fraction: 0.3,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub labels: LabelVector,
    /// Indices of articles whose labels stay hidden, ascending.
    pub held_out: Vec<usize>,
}

impl LabelMask {
    pub fn held_out_ids<'c>(&self, corpus: &'c Corpus) -> Vec<&'c str> {
        self.held_out
            .iter()
            .map(|&i| corpus.articles()[i].id.as_str())
            .collect()
    }
}

/// Reveals `round_half_even(p·M)` labels (per class when stratified) and
/// hides the rest.
pub fn make_label_mask(corpus: &Corpus, spec: &SplitSpec) -> Result<LabelMask, EvalError> {
    let p = spec.label_fraction;
    if !(p > 0.0 && p < 1.0) {
        return Err(EvalError::InvalidFraction(p));
    }
    if let Some(a) = corpus.iter().find(|a| !a.label.is_known()) {
        return Err(EvalError::UnlabeledArticle(a.id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups: Vec<(String, Vec<usize>)> = if spec.stratified {
        [Label::Fake, Label::Real]
            .into_iter()
            .map(|l| (l.to_string(), positions(corpus, l)))
            .collect()
    } else {
        vec![("labeled".to_string(), (0..corpus.len()).collect())]
    };
    let mut revealed = HashSet::new();
    for (class, members) in groups {
        let count = (p * members.len() as f64).round_ties_even() as usize;
        if count == 0 {
            return Err(EvalError::NothingRevealed { fraction: p, class });
        }
        revealed.extend(
            rand::seq::index::sample(&mut rng, members.len(), count)
                .into_iter()
                .map(|i| members[i]),
        );
    }
    let mut values = vec![0i8; corpus.len()];
    let mut held_out = Vec::new();
    for (i, article) in corpus.iter().enumerate() {
        if revealed.contains(&i) {
            values[i] = article.label.sign();
        } else {
            held_out.push(i);
        }
    }
    if held_out.is_empty() {
        return Err(EvalError::NothingHeldOut(p));
    }
    Ok(LabelMask {
        labels: LabelVector::new(values).expect("signs are in range"),
        held_out,
    })
}

/// Token-length restriction for sensitivity sub-datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LengthBand {
    /// `[mean - delta, mean + delta]` around the input corpus' mean length.
    AroundMean { delta: f64 },
    /// Inclusive token-count range.
    Range { min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityFilter {
    pub length_band: Option<LengthBand>,
    /// Keep only fake articles carrying this category; real articles pass.
    pub category: Option<String>,
    pub balance: bool,
    pub seed: u64,
}

impl SensitivityFilter {
    /// Replaces a mean-relative band with the concrete range it denotes on
    /// `corpus`.
    pub fn resolve(&self, corpus: &Corpus) -> SensitivityFilter {
        let mut resolved = self.clone();
        if let Some(LengthBand::AroundMean { delta }) = self.length_band {
            let mean = corpus.mean_length();
            resolved.length_band = Some(LengthBand::Range {
                min: (mean - delta).max(0.0).ceil() as usize,
                max: (mean + delta).max(0.0).floor() as usize,
            });
        }
        resolved
    }
}

/// Filters by length band and category, then optionally balances classes.
pub fn subsample_sensitivity(
    corpus: &Corpus,
    filter: &SensitivityFilter,
) -> Result<Corpus, EvalError> {
    let filter = filter.resolve(corpus);
    let keep: Vec<usize> = corpus
        .iter()
        .enumerate()
        .filter(|(_, a)| match filter.length_band {
            Some(LengthBand::Range { min, max }) => (min..=max).contains(&a.len()),
            _ => true,
        })
        .filter(|(_, a)| match &filter.category {
            Some(c) if a.label == Label::Fake => a.category.as_deref() == Some(c.as_str()),
            _ => true,
        })
        .map(|(i, _)| i)
        .collect();
    for label in [Label::Fake, Label::Real] {
        if !keep.iter().any(|&i| corpus.articles()[i].label == label) {
            return Err(EvalError::UnsatisfiableFilter(label));
        }
    }
    let filtered = corpus.select(&keep)?;
    if filter.balance {
        Ok(downsample_balance(&filtered, filter.seed)?)
    } else {
        Ok(filtered)
    }
}

/// Values explored by [`sweep`]; every combination is run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub embeddings: Vec<EmbeddingSource>,
    pub ranks: Vec<usize>,
    pub ks: Vec<usize>,
    pub windows: Vec<usize>,
    pub modes: Vec<TensorMode>,
    pub label_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            embeddings: vec![EmbeddingSource::Cp],
            ranks: vec![10],
            ks: vec![10],
            windows: vec![crate::tensor::DEFAULT_WINDOW],
            modes: vec![TensorMode::Binary],
            label_fractions: vec![0.3],
            seeds: (1..=10).collect(),
        }
    }
}

impl SweepGrid {
    fn check(&self) -> Result<(), EvalError> {
        let empty = [
            ("embeddings", self.embeddings.is_empty()),
            ("ranks", self.ranks.is_empty()),
            ("ks", self.ks.is_empty()),
            ("windows", self.windows.is_empty()),
            ("modes", self.modes.is_empty()),
            ("label_fractions", self.label_fractions.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        match empty.iter().find(|(_, e)| *e) {
            Some((name, _)) => Err(EvalError::EmptyGrid(name)),
            None => Ok(()),
        }
    }

    pub fn run_count(&self) -> usize {
        self.embeddings.len()
            * self.ranks.len()
            * self.ks.len()
            * self.windows.len()
            * self.modes.len()
            * self.label_fractions.len()
            * self.seeds.len()
    }
}

/// Grid coordinates shared by every seed of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub embedding: EmbeddingSource,
    pub rank: usize,
    pub k: usize,
    pub window: usize,
    pub mode: TensorMode,
    pub p: f64,
}

impl Cell {
    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}",
            self.embedding, self.rank, self.k, self.window, self.mode, self.p
        )
    }
}

/// One pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub embedding: EmbeddingSource,
    pub rank: usize,
    pub k: usize,
    pub window: usize,
    pub mode: TensorMode,
    pub p: f64,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub h: Option<f64>,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

impl RunRow {
    pub fn cell(&self) -> Cell {
        Cell {
            embedding: self.embedding,
            rank: self.rank,
            k: self.k,
            window: self.window,
            mode: self.mode,
            p: self.p,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for fewer than two values.
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}

/// Mean ± deviation of one cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(flatten)]
    pub cell: Cell,
    pub runs: usize,
    pub failures: usize,
    pub accuracy: Option<MeanStd>,
    pub precision: Option<MeanStd>,
    pub recall: Option<MeanStd>,
    pub f1: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

const RUN_COLUMNS: [&str; 14] = [
    "embedding",
    "rank",
    "k",
    "window",
    "mode",
    "p",
    "seed",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "h",
    "runtime_ms",
    "error",
];

const AGGREGATE_COLUMNS: [&str; 16] = [
    "embedding",
    "rank",
    "k",
    "window",
    "mode",
    "p",
    "runs",
    "failures",
    "accuracy_mean",
    "accuracy_std",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
    "f1_mean",
    "f1_std",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultTable {
    fn from_rows(mut rows: Vec<RunRow>, order: &[String]) -> Self {
        let rank_of: BTreeMap<&str, usize> = order
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        rows.sort_by_key(|r| (rank_of[r.cell().key().as_str()], r.seed));
        let mut aggregates = Vec::new();
        for key in order {
            let members: Vec<&RunRow> = rows.iter().filter(|r| &r.cell().key() == key).collect();
            let Some(first) = members.first() else {
                continue;
            };
            let ok: Vec<&&RunRow> = members.iter().filter(|r| r.succeeded()).collect();
            let stat = |f: fn(&RunRow) -> Option<f64>| {
                MeanStd::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            aggregates.push(Aggregate {
                cell: first.cell(),
                runs: members.len(),
                failures: members.len() - ok.len(),
                accuracy: stat(|r| r.accuracy),
                precision: stat(|r| r.precision),
                recall: stat(|r| r.recall),
                f1: stat(|r| r.f1),
            });
        }
        ResultTable { rows, aggregates }
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.succeeded())
    }

    /// Long format, one line per run.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.embedding.to_string(),
                r.rank.to_string(),
                r.k.to_string(),
                r.window.to_string(),
                r.mode.to_string(),
                r.p.to_string(),
                r.seed.to_string(),
                opt(r.accuracy),
                opt(r.precision),
                opt(r.recall),
                opt(r.f1),
                opt(r.h),
                r.runtime_ms.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line per cell with mean and deviation columns.
    pub fn write_aggregates_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(AGGREGATE_COLUMNS)?;
        for a in &self.aggregates {
            let c = &a.cell;
            let mut record = vec![
                c.embedding.to_string(),
                c.rank.to_string(),
                c.k.to_string(),
                c.window.to_string(),
                c.mode.to_string(),
                c.p.to_string(),
                a.runs.to_string(),
                a.failures.to_string(),
            ];
            for m in [a.accuracy, a.precision, a.recall, a.f1] {
                record.push(opt(m.map(|s| s.mean)));
                record.push(opt(m.map(|s| s.std)));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the pipeline over every grid cell and seed. Cell failures are
/// recorded in the row's `error` column and do not abort the sweep.
///
/// Shared stages are computed once: one tensor per (window, mode), one
/// decomposition per (rank, seed), one graph per k. `base` supplies every
/// setting the grid does not vary.
pub fn sweep(
    corpus: &Corpus,
    vocab: &Vocabulary,
    grid: &SweepGrid,
    base: &PipelineConfig,
) -> Result<ResultTable, EvalError> {
    grid.check()?;

    let mut order = Vec::new();
    for &embedding in &grid.embeddings {
        for &rank in &grid.ranks {
            for &k in &grid.ks {
                for &window in &grid.windows {
                    for &mode in &grid.modes {
                        for &p in &grid.label_fractions {
                            order.push(
                                Cell {
                                    embedding,
                                    rank,
                                    k,
                                    window,
                                    mode,
                                    p,
                                }
                                .key(),
                            );
                        }
                    }
                }
            }
        }
    }

    struct Job {
        embedding: EmbeddingSource,
        window: usize,
        mode: TensorMode,
        rank: usize,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for &embedding in &grid.embeddings {
        for &window in &grid.windows {
            for &mode in &grid.modes {
                for &rank in &grid.ranks {
                    for &seed in &grid.seeds {
                        jobs.push(Job {
                            embedding,
                            window,
                            mode,
                            rank,
                            seed,
                        });
                    }
                }
            }
        }
    }

    let rows: Vec<RunRow> = jobs
        .par_iter()
        .flat_map_iter(|job| {
            let seeds = SeedStream::new(job.seed);
            let mut config = base.clone();
            config.embedding = job.embedding;
            config.tensor.window = job.window;
            config.tensor.mode = job.mode;
            config.cp.rank = job.rank;
            config.cp.seed = seeds.cp;
            config.split.seed = seeds.split;

            let started = Instant::now();
            let embedded = pipeline::embed(corpus, vocab, &config);
            let embed_ms = started.elapsed().as_millis() as u64;

            let mut out = Vec::new();
            for &k in &grid.ks {
                let graph_started = Instant::now();
                let graph = embedded
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|emb| {
                        let mut cfg = config.graph;
                        cfg.k = k;
                        pipeline::build_graph(&emb.points, &cfg).map_err(|e| e.to_string())
                    });
                let graph_ms = graph_started.elapsed().as_millis() as u64;
                for &p in &grid.label_fractions {
                    let run_started = Instant::now();
                    let mut split = config.split;
                    split.label_fraction = p;
                    let outcome = graph.as_ref().map_err(Clone::clone).and_then(|g| {
                        pipeline::label_and_score(corpus, g, &config.fabp, &split)
                            .map_err(|e| e.to_string())
                    });
                    let runtime_ms = embed_ms + graph_ms + run_started.elapsed().as_millis() as u64;
                    let mut row = RunRow {
                        embedding: job.embedding,
                        rank: job.rank,
                        k,
                        window: job.window,
                        mode: job.mode,
                        p,
                        seed: job.seed,
                        accuracy: None,
                        precision: None,
                        recall: None,
                        f1: None,
                        h: None,
                        runtime_ms,
                        error: None,
                    };
                    match outcome {
                        Ok(scored) => {
                            row.accuracy = Some(scored.report.accuracy);
                            row.precision = Some(scored.report.precision);
                            row.recall = Some(scored.report.recall);
                            row.f1 = Some(scored.report.f1);
                            row.h = Some(scored.beliefs.coefficients.h);
                        }
                        Err(e) => row.error = Some(e),
                    }
                    out.push(row);
                }
            }
            out
        })
        .collect();

    Ok(ResultTable::from_rows(rows, &order))
}
