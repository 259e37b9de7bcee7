//! The end-to-end classifier: embed articles, link them in a k-NN graph,
//! propagate revealed labels and score the rest. Both embedding sources
//! share every stage after the embedding.

use std::error::Error as StdError;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Vocabulary};
use crate::cpd::{cp_als, CpConfig, CpResult};
use crate::eval::{make_label_mask, score, LabelMask, MetricReport, SplitSpec};
use crate::fabp::{classify, propagate, BeliefState, Classification, FabpConfig, LabelVector};
use crate::graph::{knn_graph, GraphConfig, KnnGraph};
use crate::tensor::{build_cooccurrence_tensor, build_tfidf, SparseTensor, TensorConfig};

/// What the k-NN graph is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Rows of the article factor of a CP decomposition.
    #[default]
    Cp,
    /// Raw tf-idf rows.
    Tfidf,
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingSource::Cp => "cp",
            EmbeddingSource::Tfidf => "tfidf",
        })
    }
}

impl FromStr for EmbeddingSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cp" => Ok(EmbeddingSource::Cp),
            "tfidf" => Ok(EmbeddingSource::Tfidf),
            other => Err(format!("invalid embedding source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Vocabulary,
    Tensor,
    Decompose,
    Graph,
    Labels,
    Propagate,
    Score,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).expect("unit variant");
        f.write_str(name.as_str().expect("string"))
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn StdError + Send + Sync>,
}

impl StageError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn StdError + Send + Sync>>) -> Self {
        StageError {
            stage,
            source: source.into(),
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: StdError + Send + Sync + 'static> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-stage seed derived from a root seed and a stage tag.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    // FNV-1a of the tag.
    let tag_hash = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    });
    mix(mix(root) ^ tag_hash)
}

/// The per-stage seeds fanned out from one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    pub root: u64,
    pub cp: u64,
    pub split: u64,
    pub balance: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        SeedStream {
            root,
            cp: derive_seed(root, "cp"),
            split: derive_seed(root, "split"),
            balance: derive_seed(root, "balance"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub embedding: EmbeddingSource,
    pub tensor: TensorConfig,
    pub cp: CpConfig,
    pub graph: GraphConfig,
    pub fabp: FabpConfig,
    pub split: SplitSpec,
}

impl PipelineConfig {
    /// Replaces the decomposition and split seeds with ones derived from
    /// `root`.
    pub fn with_root_seed(mut self, root: u64) -> Self {
        let seeds = SeedStream::new(root);
        self.cp.seed = seeds.cp;
        self.split.seed = seeds.split;
        self
    }
}

/// Article embedding rows plus whatever produced them.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub points: DMatrix<f64>,
    pub tensor: Option<SparseTensor>,
    pub cp: Option<CpResult>,
}

pub fn embed(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &PipelineConfig,
) -> Result<Embedding, StageError> {
    match config.embedding {
        EmbeddingSource::Cp => {
            let tensor =
                build_cooccurrence_tensor(corpus, vocab, &config.tensor).at(Stage::Tensor)?;
            let cp = cp_als(&tensor, &config.cp).at(Stage::Decompose)?;
            Ok(Embedding {
                points: cp.factors.c.clone(),
                tensor: Some(tensor),
                cp: Some(cp),
            })
        }
        EmbeddingSource::Tfidf => {
            let tfidf = build_tfidf(corpus, vocab).at(Stage::Tensor)?;
            Ok(Embedding {
                points: tfidf.to_dense(),
                tensor: None,
                cp: None,
            })
        }
    }
}

pub fn build_graph(points: &DMatrix<f64>, config: &GraphConfig) -> Result<KnnGraph, StageError> {
    knn_graph(points, config).at(Stage::Graph)
}

pub fn propagate_labels(
    graph: &KnnGraph,
    labels: &LabelVector,
    config: &FabpConfig,
) -> Result<(BeliefState, Classification), StageError> {
    let beliefs = propagate(graph, labels, config).at(Stage::Propagate)?;
    let classification = classify(&beliefs);
    Ok((beliefs, classification))
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub mask: LabelMask,
    pub beliefs: BeliefState,
    pub classification: Classification,
    pub report: MetricReport,
}

/// Masks ground truth per `split`, propagates, and scores held-out articles.
pub fn label_and_score(
    corpus: &Corpus,
    graph: &KnnGraph,
    fabp: &FabpConfig,
    split: &SplitSpec,
) -> Result<Scored, StageError> {
    let mask = make_label_mask(corpus, split).at(Stage::Labels)?;
    let (beliefs, classification) = propagate_labels(graph, &mask.labels, fabp)?;
    let report =
        score(&classification.labels, &corpus.labels(), &mask.held_out).at(Stage::Score)?;
    Ok(Scored {
        mask,
        beliefs,
        classification,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub embedding: Embedding,
    pub graph: KnnGraph,
    pub scored: Scored,
}

/// Embeds, builds the graph, masks labels per `config.split`, propagates
/// and scores.
pub fn run(
    corpus: &Corpus,
    vocab: &Vocabulary,
    config: &PipelineConfig,
) -> Result<PipelineRun, StageError> {
    let embedding = embed(corpus, vocab, config)?;
    let graph = build_graph(&embedding.points, &config.graph)?;
    let scored = label_and_score(corpus, &graph, &config.fabp, &config.split)?;
    Ok(PipelineRun {
        embedding,
        graph,
        scored,
    })
}
