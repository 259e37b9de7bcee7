//! The tf-idf comparison arm: the same graph, propagation and scoring
//! stages as the tensor pipeline, fed tf-idf rows instead of CP
//! embeddings.

use crate::corpus::{Corpus, Vocabulary};
use crate::eval::{MetricReport, SplitSpec};
use crate::fabp::FabpConfig;
use crate::graph::GraphConfig;
use crate::pipeline::{self, EmbeddingSource, PipelineConfig, PipelineRun, StageError};

/// Full tf-idf run, keeping every intermediate.
pub fn run_tfidf(
    corpus: &Corpus,
    vocab: &Vocabulary,
    graph: &GraphConfig,
    fabp: &FabpConfig,
    split: &SplitSpec,
) -> Result<PipelineRun, StageError> {
    let config = PipelineConfig {
        embedding: EmbeddingSource::Tfidf,
        graph: *graph,
        fabp: *fabp,
        split: *split,
        ..PipelineConfig::default()
    };
    pipeline::run(corpus, vocab, &config)
}

pub fn run_tfidf_pipeline(
    corpus: &Corpus,
    vocab: &Vocabulary,
    graph: &GraphConfig,
    fabp: &FabpConfig,
    split: &SplitSpec,
) -> Result<MetricReport, StageError> {
    run_tfidf(corpus, vocab, graph, fabp, split).map(|run| run.scored.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, Label};

    fn fixture() -> Corpus {
        let mut articles = Vec::new();
        for i in 0..6 {
            let words = ["vote", "senate", "bill", "law", "court"];
            let toks: Vec<String> = (0..12)
                .map(|t| words[(t * (i + 1)) % 5].to_string())
                .collect();
            articles.push(Article::from_tokens(format!("r{i}"), toks, Label::Real));
        }
        for i in 0..6 {
            let words = ["shock", "secret", "cure", "alien", "hoax"];
            let toks: Vec<String> = (0..12)
                .map(|t| words[(t * (i + 2)) % 5].to_string())
                .collect();
            articles.push(Article::from_tokens(format!("f{i}"), toks, Label::Fake));
        }
        // Two identical articles with the same label.
        let dup: Vec<&str> = vec!["hoax", "alien", "cure", "shock", "vote"];
        articles.push(Article::from_tokens("dup0", dup.clone(), Label::Fake));
        articles.push(Article::from_tokens("dup1", dup, Label::Fake));
        Corpus::new(articles).unwrap()
    }

    #[test]
    fn duplicates_receive_identical_beliefs() {
        let c = fixture();
        let v = crate::corpus::build_vocabulary(&c, None).unwrap();
        let graph = GraphConfig {
            k: 3,
            ..GraphConfig::default()
        };
        let split = SplitSpec {
            label_fraction: 0.3,
            seed: 5,
            stratified: true,
        };
        let run = run_tfidf(&c, &v, &graph, &FabpConfig::default(), &split).unwrap();
        let (a, b) = (c.position("dup0").unwrap(), c.position("dup1").unwrap());
        assert!(run.graph.has_edge(a, b));
        let labels = run.scored.mask.labels.values();
        if labels[a] == labels[b] {
            let beliefs = &run.scored.beliefs.beliefs;
            assert!((beliefs[a] - beliefs[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_report() {
        let c = fixture();
        let v = crate::corpus::build_vocabulary(&c, None).unwrap();
        let graph = GraphConfig {
            k: 3,
            ..GraphConfig::default()
        };
        let split = SplitSpec {
            label_fraction: 0.5,
            seed: 9,
            stratified: true,
        };
        let x = run_tfidf_pipeline(&c, &v, &graph, &FabpConfig::default(), &split).unwrap();
        let y = run_tfidf_pipeline(&c, &v, &graph, &FabpConfig::default(), &split).unwrap();
        assert_eq!(x, y);
    }
}
