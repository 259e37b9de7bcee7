//! Run configuration: one declarative TOML or JSON file plus flag overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tensorprop_core::corpus::{CorpusFormat, PreprocessConfig, StopwordSource, DEFAULT_MAX_VOCAB};
use tensorprop_core::cpd::CpConfig;
use tensorprop_core::eval::{SplitSpec, SweepGrid};
use tensorprop_core::fabp::{FabpConfig, Homophily};
use tensorprop_core::graph::{Backend, GraphConfig};
use tensorprop_core::pipeline::{EmbeddingSource, PipelineConfig, SeedStream};
use tensorprop_core::tensor::{TensorConfig, TensorMode};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub path: PathBuf,
    /// Inferred from the path when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stage seed is derived from it.
    pub seed: u64,
    pub corpus: Option<CorpusSpec>,
    pub out: Option<PathBuf>,
    pub embedding: EmbeddingSource,
    pub preprocess: PreprocessConfig,
    /// Vocabulary cap; 0 keeps every word.
    pub max_vocab: usize,
    /// Down-sample the majority class before anything else.
    pub balance: bool,
    /// CSV with `id,label` columns naming the revealed articles. Replaces
    /// the random split when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub write_tensor: bool,
    pub tensor: TensorConfig,
    pub cp: CpConfig,
    pub graph: GraphConfig,
    pub fabp: FabpConfig,
    pub split: SplitSpec,
    /// Used by `sweep` only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<SweepGrid>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            corpus: None,
            out: None,
            embedding: EmbeddingSource::default(),
            preprocess: PreprocessConfig::default(),
            max_vocab: DEFAULT_MAX_VOCAB,
            balance: false,
            labels: None,
            write_tensor: false,
            tensor: TensorConfig::default(),
            cp: CpConfig::default(),
            graph: GraphConfig::default(),
            fabp: FabpConfig::default(),
            split: SplitSpec::default(),
            grid: None,
        }
    }
}

/// Flags that override keys of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file (.toml or .json).
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Corpus file or directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus format: jsonl, csv or directory.
    #[arg(long)]
    pub format: Option<CorpusFormat>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding source: cp or tfidf.
    #[arg(long)]
    pub embedding: Option<EmbeddingSource>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
    #[arg(long)]
    pub balance: bool,
    /// Disable stemming.
    #[arg(long)]
    pub no_stem: bool,
    /// Stopword file, one word per line, or "none".
    #[arg(long)]
    pub stopwords: Option<String>,
    /// CSV of revealed labels (id,label).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Also write the co-occurrence tensor.
    #[arg(long)]
    pub write_tensor: bool,
    #[arg(long)]
    pub window: Option<usize>,
    /// Tensor mode: binary or frequency.
    #[arg(long)]
    pub mode: Option<TensorMode>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Nearest-neighbor backend: kd-tree or brute-force.
    #[arg(long)]
    pub backend: Option<Backend>,
    /// "auto" or a value in (0, 0.5).
    #[arg(long)]
    pub homophily: Option<Homophily>,
    #[arg(long)]
    pub prior_magnitude: Option<f64>,
    #[arg(long)]
    pub label_fraction: Option<f64>,
    /// Draw the revealed labels without per-class stratification.
    #[arg(long)]
    pub unstratified: bool,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config: RunConfig = if is_json {
            serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = config.corpus.as_mut() {
            rebase(&mut c.path);
        }
        if let Some(o) = config.out.as_mut() {
            rebase(o);
        }
        if let Some(l) = config.labels.as_mut() {
            rebase(l);
        }
        if let StopwordSource::File(p) = &mut config.preprocess.stopwords {
            rebase(p);
        }
        Ok(config)
    }

    /// Config file (if any) with flags applied on top.
    pub fn load(flags: &Overrides) -> Result<Self, CliError> {
        let mut config = match &flags.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply(flags);
        Ok(config)
    }

    fn apply(&mut self, f: &Overrides) {
        if let Some(path) = &f.corpus {
            self.corpus = Some(CorpusSpec {
                path: path.clone(),
                format: f.format,
            });
        } else if let (Some(format), Some(c)) = (f.format, self.corpus.as_mut()) {
            c.format = Some(format);
        }
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(f.seed => self.seed);
        set!(f.embedding => self.embedding);
        set!(f.max_vocab => self.max_vocab);
        set!(f.window => self.tensor.window);
        set!(f.mode => self.tensor.mode);
        set!(f.rank => self.cp.rank);
        set!(f.max_iters => self.cp.max_iters);
        set!(f.tol => self.cp.tol);
        set!(f.k => self.graph.k);
        set!(f.backend => self.graph.backend);
        set!(f.homophily => self.fabp.homophily);
        set!(f.prior_magnitude => self.fabp.prior_magnitude);
        set!(f.label_fraction => self.split.label_fraction);
        if f.out.is_some() {
            self.out = f.out.clone();
        }
        if f.labels.is_some() {
            self.labels = f.labels.clone();
        }
        if let Some(s) = &f.stopwords {
            self.preprocess.stopwords = if s == "none" {
                StopwordSource::None
            } else {
                StopwordSource::File(PathBuf::from(s))
            };
        }
        self.balance |= f.balance;
        self.write_tensor |= f.write_tensor;
        if f.no_stem {
            self.preprocess.stem = false;
        }
        if f.unstratified {
            self.split.stratified = false;
        }
    }

    /// Fills in the inferred corpus format and the derived stage seeds, and
    /// checks every nested section.
    pub fn resolve(mut self) -> Result<(Self, SeedStream), CliError> {
        self.absolutize_paths()?;
        let corpus = self
            .corpus
            .as_mut()
            .ok_or_else(|| config_err("no corpus given (set [corpus] path or pass --corpus)"))?;
        corpus
            .format
            .get_or_insert_with(|| CorpusFormat::infer(&corpus.path));
        if self.out.is_none() {
            return Err(config_err(
                "no output directory given (set out or pass --out)",
            ));
        }
        let seeds = SeedStream::new(self.seed);
        self.cp.seed = seeds.cp;
        self.split.seed = seeds.split;
        self.tensor
            .validate()
            .map_err(|e| config_err(format!("[tensor] {e}")))?;
        self.cp
            .validate()
            .map_err(|e| config_err(format!("[cp] {e}")))?;
        self.fabp
            .validate()
            .map_err(|e| config_err(format!("[fabp] {e}")))?;
        if self.graph.k == 0 {
            return Err(config_err("[graph] k must be at least 1"));
        }
        if !(self.split.label_fraction > 0.0 && self.split.label_fraction < 1.0) {
            return Err(config_err(format!(
                "[split] label_fraction must be in (0, 1), got {}",
                self.split.label_fraction
            )));
        }
        Ok((self, seeds))
    }

    /// Makes every path absolute so a manifest's config replays from any
    /// working directory.
    fn absolutize_paths(&mut self) -> Result<(), CliError> {
        let fix = |p: &mut PathBuf| -> Result<(), CliError> {
            *p = std::path::absolute(&*p)
                .map_err(|e| config_err(format!("cannot resolve {}: {e}", p.display())))?;
            Ok(())
        };
        if let Some(c) = self.corpus.as_mut() {
            fix(&mut c.path)?;
        }
        if let Some(o) = self.out.as_mut() {
            fix(o)?;
        }
        if let Some(l) = self.labels.as_mut() {
            fix(l)?;
        }
        if let StopwordSource::File(p) = &mut self.preprocess.stopwords {
            fix(p)?;
        }
        Ok(())
    }

    pub fn corpus_spec(&self) -> &CorpusSpec {
        self.corpus.as_ref().expect("resolved config has a corpus")
    }

    pub fn out_dir(&self) -> &Path {
        self.out
            .as_deref()
            .expect("resolved config has an output directory")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            embedding: self.embedding,
            tensor: self.tensor,
            cp: self.cp,
            graph: self.graph,
            fabp: self.fabp,
            split: self.split,
        }
    }

    pub fn vocab_cap(&self) -> Option<usize> {
        (self.max_vocab > 0).then_some(self.max_vocab)
    }
}
