//! Seeded two-class corpora with planted class-specific vocabulary, for
//! tests, benchmarks and desk-scale experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub articles_per_class: usize,
    /// Words shared by both classes.
    pub shared_words: usize,
    /// Words specific to each class.
    pub topic_words: usize,
    /// Probability that a token is drawn from its class' topic words.
    pub topic_weight: f64,
    /// Article lengths are log-uniform in this inclusive range.
    pub min_length: usize,
    pub max_length: usize,
    /// Zipf exponent of within-pool word frequencies.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            articles_per_class: 100,
            shared_words: 300,
            topic_words: 60,
            topic_weight: 0.2,
            min_length: 40,
            max_length: 200,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|rank| {
                acc += (rank as f64).powf(-exponent);
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty pool");
        let u = rng.gen::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Generates a shuffled, balanced corpus of already-normalized articles.
/// Fake articles carry the category tag `"synthetic"`.
pub fn two_class_corpus(spec: &SyntheticSpec) -> Corpus {
    assert!(
        spec.articles_per_class > 0,
        "need at least one article per class"
    );
    assert!(
        spec.shared_words > 0 && spec.topic_words > 0,
        "word pools must be non-empty"
    );
    assert!(
        spec.min_length >= 1 && spec.min_length <= spec.max_length,
        "bad length range"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = Zipf::new(spec.shared_words, spec.zipf_exponent);
    let topic = Zipf::new(spec.topic_words, spec.zipf_exponent);
    let (lo, hi) = (
        (spec.min_length as f64).ln(),
        (spec.max_length as f64 + 1.0).ln(),
    );

    let mut articles = Vec::with_capacity(2 * spec.articles_per_class);
    for label in [Label::Real, Label::Fake] {
        let prefix = if label == Label::Real { "real" } else { "fake" };
        for _ in 0..spec.articles_per_class {
            let len = (rng.gen_range(lo..hi).exp().floor() as usize)
                .clamp(spec.min_length, spec.max_length);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(spec.topic_weight) {
                        format!("{prefix}{}", topic.sample(&mut rng))
                    } else {
                        format!("w{}", shared.sample(&mut rng))
                    }
                })
                .collect();
            articles.push((label, tokens));
        }
    }
    articles.shuffle(&mut rng);
    let articles = articles
        .into_iter()
        .enumerate()
        .map(|(i, (label, tokens))| {
            let a = Article::from_tokens(format!("syn{i:05}"), tokens, label);
            if label == Label::Fake {
                a.with_category("synthetic")
            } else {
                a
            }
        })
        .collect();
    Corpus::new(articles).expect("generated ids are unique")
}
