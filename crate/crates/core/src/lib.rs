//! Semi-supervised article classification from tensor embeddings.
//!
//! Articles are turned into a word × word × article co-occurrence tensor,
//! decomposed with CP-ALS; the rows of the article factor are linked in a
//! symmetric k-nearest-neighbor graph, and a handful of known labels are
//! spread over that graph with linearized belief propagation.
//!
//! ```no_run
//! use tensorprop_core::prelude::*;
//!
//! let mut corpus = load_corpus("articles.jsonl".as_ref(), CorpusFormat::Jsonl)?;
//! corpus.preprocess(&Preprocessor::default());
//! let vocab = build_vocabulary(&corpus, Some(5_000))?;
//! let run = pipeline::run(&corpus, &vocab, &PipelineConfig::default().with_root_seed(7))?;
//! println!("accuracy {:.3}", run.scored.report.accuracy);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod baseline;
pub mod corpus;
pub mod cpd;
pub mod eval;
pub mod fabp;
pub mod graph;
pub mod pipeline;
pub mod synthetic;
pub mod tensor;

pub mod prelude {
    pub use crate::baseline::run_tfidf_pipeline;
    pub use crate::corpus::{
        build_vocabulary, downsample_balance, load_corpus, Article, Corpus, CorpusFormat, Label,
        PreprocessConfig, Preprocessor, Vocabulary,
    };
    pub use crate::cpd::{cp_als, mttkrp, reconstruction_residual, CpConfig, FactorMatrices, Mode};
    pub use crate::eval::{
        make_label_mask, score, subsample_sensitivity, sweep, MetricReport, SplitSpec, SweepGrid,
    };
    pub use crate::fabp::{
        choose_homophily, classify, compute_coefficients, propagate, FabpConfig, Homophily,
        LabelVector,
    };
    pub use crate::graph::{degrees, knn_graph, l2_distance, Backend, GraphConfig, KnnGraph};
    pub use crate::pipeline::{self, EmbeddingSource, PipelineConfig, Stage, StageError};
    pub use crate::tensor::{
        build_cooccurrence_tensor, build_tfidf, SparseTensor, TensorConfig, TensorMode,
    };
}
