use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;
use serde_json::json;
use tensorprop_core::corpus::{
    build_vocabulary, downsample_balance, load_corpus, Corpus, Label, Preprocessor, Vocabulary,
};
use tensorprop_core::cpd::write_matrix;
use tensorprop_core::eval::{score, sweep, LabelMask, MetricReport, SweepGrid};
use tensorprop_core::fabp::{write_beliefs, LabelVector};
use tensorprop_core::pipeline::{self, SeedStream, Stage, StageError};
use thiserror::Error;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Error)]
enum LabelFileError {
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: unknown article id {id:?}")]
    UnknownId { path: PathBuf, id: String },
    #[error("{path}: article {id:?} must be labeled real or fake")]
    NotBinary { path: PathBuf, id: String },
}

fn stage_err(stage: Stage) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| StageError::new(stage, e).into()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    File::create(dir.join(name))
        .map(BufWriter::new)
        .map_err(stage_err(Stage::Output))
}

/// Resolved config plus the preprocessed corpus and its vocabulary.
struct Prepared {
    config: RunConfig,
    seeds: SeedStream,
    corpus: Corpus,
    vocab: Vocabulary,
    loaded: usize,
}

fn prepare(config: RunConfig) -> Result<Prepared, CliError> {
    let (config, seeds) = config.resolve()?;
    fs::create_dir_all(config.out_dir()).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory {}: {e}",
            config.out_dir().display()
        ))
    })?;
    let spec = config.corpus_spec();
    let format = spec.format.expect("resolved format");
    let mut corpus =
        load_corpus(&spec.path, format).map_err(|e| StageError::new(Stage::Ingest, e))?;
    let loaded = corpus.len();
    let preprocessor = Preprocessor::from_config(&config.preprocess)
        .map_err(|e| StageError::new(Stage::Ingest, e))?;
    corpus.preprocess(&preprocessor);
    if config.balance {
        corpus = downsample_balance(&corpus, seeds.balance)
            .map_err(|e| StageError::new(Stage::Ingest, e))?;
    }
    let vocab = build_vocabulary(&corpus, config.vocab_cap())
        .map_err(|e| StageError::new(Stage::Vocabulary, e))?;
    info!(
        "{} articles ({} loaded), {} vocabulary words",
        corpus.len(),
        loaded,
        vocab.len()
    );
    Ok(Prepared {
        config,
        seeds,
        corpus,
        vocab,
        loaded,
    })
}

/// Mask built from an explicit `id,label` file: listed articles are
/// revealed, every other article with a known label is held out.
fn mask_from_file(corpus: &Corpus, path: &Path) -> Result<LabelMask, LabelFileError> {
    let malformed = |reason: String| LabelFileError::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let index: HashMap<&str, usize> = corpus
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    let mut values = vec![0i8; corpus.len()];
    for record in reader.deserialize::<(String, String)>() {
        let (id, label) = record.map_err(|e| malformed(e.to_string()))?;
        let pos = *index
            .get(id.as_str())
            .ok_or_else(|| LabelFileError::UnknownId {
                path: path.to_path_buf(),
                id: id.clone(),
            })?;
        let label: Label = label.parse().map_err(malformed)?;
        if !label.is_known() {
            return Err(LabelFileError::NotBinary {
                path: path.to_path_buf(),
                id,
            });
        }
        values[pos] = label.sign();
    }
    let held_out = corpus
        .iter()
        .enumerate()
        .filter(|(i, a)| values[*i] == 0 && a.label.is_known())
        .map(|(i, _)| i)
        .collect();
    let labels = LabelVector::new(values).map_err(|e| malformed(e.to_string()))?;
    Ok(LabelMask { labels, held_out })
}

#[derive(Serialize)]
struct CorpusSummary {
    loaded: usize,
    used: usize,
    real: usize,
    fake: usize,
    unknown: usize,
    vocabulary: usize,
}

impl CorpusSummary {
    fn of(p: &Prepared) -> Self {
        CorpusSummary {
            loaded: p.loaded,
            used: p.corpus.len(),
            real: p.corpus.count(Label::Real),
            fake: p.corpus.count(Label::Fake),
            unknown: p.corpus.count(Label::Unknown),
            vocabulary: p.vocab.len(),
        }
    }
}

fn write_metrics_csv(dir: &Path, report: &MetricReport) -> Result<(), CliError> {
    let mut out = create(dir, "metrics.csv")?;
    let c = &report.confusion;
    (|| {
        writeln!(out, "accuracy,precision,recall,f1,support,tp,fp,tn,fn")?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            report.accuracy,
            report.precision,
            report.recall,
            report.f1,
            report.support,
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        )?;
        out.flush()
    })()
    .map_err(stage_err(Stage::Output))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| StageError::new(Stage::Output, e))?;
    writeln!(out)
        .and_then(|()| out.flush())
        .map_err(stage_err(Stage::Output))
}

pub fn run(config: RunConfig) -> Result<(), CliError> {
    let started = Instant::now();
    let prepared = prepare(config)?;
    let Prepared {
        config,
        seeds,
        corpus,
        vocab,
        ..
    } = &prepared;
    let out = config.out_dir();
    let pipeline_config = config.pipeline();

    let embedding = pipeline::embed(corpus, vocab, &pipeline_config)?;
    let graph = pipeline::build_graph(&embedding.points, &config.graph)?;
    let mask = match &config.labels {
        Some(path) => {
            mask_from_file(corpus, path).map_err(|e| StageError::new(Stage::Labels, e))?
        }
        None => tensorprop_core::eval::make_label_mask(corpus, &config.split)
            .map_err(|e| StageError::new(Stage::Labels, e))?,
    };
    let (beliefs, classification) = pipeline::propagate_labels(&graph, &mask.labels, &config.fabp)?;
    let report = score(&classification.labels, &corpus.labels(), &mask.held_out)
        .map_err(|e| StageError::new(Stage::Score, e))?;

    let mut artifacts = vec!["manifest.json"];
    if let Some(cp) = &embedding.cp {
        for (name, m) in [
            ("A.txt", &cp.factors.a),
            ("B.txt", &cp.factors.b),
            ("C.txt", &cp.factors.c),
        ] {
            let mut f = create(out, name)?;
            write_matrix(&mut f, m)
                .and_then(|()| f.flush())
                .map_err(stage_err(Stage::Output))?;
            artifacts.push(name);
        }
        let mut f = create(out, "weights.txt")?;
        (|| {
            for w in cp.factors.weights.iter() {
                writeln!(f, "{w:e}")?;
            }
            f.flush()
        })()
        .map_err(stage_err(Stage::Output))?;
        artifacts.push("weights.txt");
    }
    if config.write_tensor {
        if let Some(tensor) = &embedding.tensor {
            let mut f = create(out, "tensor.coo")?;
            tensor
                .write_coo(&mut f)
                .map_err(|e| StageError::new(Stage::Output, e))?;
            f.flush().map_err(stage_err(Stage::Output))?;
            artifacts.push("tensor.coo");
        }
    }
    let mut f = create(out, "graph.txt")?;
    graph
        .write_edge_list(&mut f)
        .map_err(|e| StageError::new(Stage::Output, e))?;
    f.flush().map_err(stage_err(Stage::Output))?;

    let ids: Vec<&str> = corpus.iter().map(|a| a.id.as_str()).collect();
    let mut f = create(out, "beliefs.txt")?;
    write_beliefs(&mut f, &ids, &beliefs, &classification)
        .and_then(|()| f.flush())
        .map_err(stage_err(Stage::Output))?;
    let mut f = create(out, "predictions.txt")?;
    (|| {
        for (id, label) in ids.iter().zip(&classification.labels) {
            writeln!(f, "{id} {label}")?;
        }
        f.flush()
    })()
    .map_err(stage_err(Stage::Output))?;
    write_metrics_csv(out, &report)?;
    artifacts.extend(["graph.txt", "beliefs.txt", "predictions.txt", "metrics.csv"]);

    let manifest = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "config": config,
        "seeds": seeds,
        "corpus": CorpusSummary::of(&prepared),
        "labels": {
            "revealed": mask.labels.revealed(),
            "held_out": mask.held_out.len(),
            "source": if config.labels.is_some() { "file" } else { "split" },
        },
        "tensor": embedding.tensor.as_ref().map(|t| json!({
            "dims": t.dims(), "nnz": t.nnz(), "norm": t.norm(),
        })),
        "cp": embedding.cp.as_ref().map(|cp| json!({
            "iterations": cp.iterations,
            "converged": cp.converged,
            "final_residual": cp.final_residual(),
            "final_fit": cp.final_fit(),
            "ridge_events": cp.ridge_events,
            "weights": cp.factors.weights.as_slice(),
        })),
        "graph": {
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "min_degree": graph.min_degree(),
            "max_degree": graph.max_degree(),
        },
        "propagation": {
            "h": beliefs.coefficients.h,
            "a": beliefs.coefficients.a,
            "c_prime": beliefs.coefficients.c_prime,
            "prior_magnitude": config.fabp.prior_magnitude,
            "solver": beliefs.solver,
            "residual": beliefs.residual,
            "iterations": beliefs.iterations,
            "ties": classification.ties,
        },
        "metrics": report,
        "artifacts": artifacts,
        "runtime_ms": started.elapsed().as_millis() as u64,
    });
    write_json(out, "manifest.json", &manifest)?;
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  ({} held out) -> {}",
        report.accuracy,
        report.precision,
        report.recall,
        report.f1,
        report.support,
        out.display()
    );
    Ok(())
}

pub fn run_sweep(mut config: RunConfig, grid_file: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = grid_file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let grid: SweepGrid = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        config.grid = Some(grid);
    }
    let grid = config.grid.clone().ok_or_else(|| {
        CliError::Config("no sweep grid given (add [grid] or pass --grid)".into())
    })?;
    let started = Instant::now();
    let prepared = prepare(config)?;
    let out = prepared.config.out_dir();
    let table = sweep(
        &prepared.corpus,
        &prepared.vocab,
        &grid,
        &prepared.config.pipeline(),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let runs = create(out, "runs.csv")?;
    table
        .write_runs_csv(runs)
        .map_err(|e| StageError::new(Stage::Output, e))?;
    let aggregates = create(out, "aggregates.csv")?;
    table
        .write_aggregates_csv(aggregates)
        .map_err(|e| StageError::new(Stage::Output, e))?;
    let failures = table.rows.iter().filter(|r| r.error.is_some()).count();
    let summary = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "config": prepared.config,
        "corpus": CorpusSummary::of(&prepared),
        "runs": table.rows.len(),
        "failures": failures,
        "aggregates": table.aggregates,
        "runtime_ms": started.elapsed().as_millis() as u64,
    });
    write_json(out, "summary.json", &summary)?;
    for a in &table.aggregates {
        let acc = a.accuracy.as_ref().map_or("failed".to_string(), |m| {
            format!("{:.4} ± {:.4}", m.mean, m.std)
        });
        println!(
            "{} R={} k={} w={} {} p={}: accuracy {acc} ({} runs, {} failed)",
            a.cell.embedding,
            a.cell.rank,
            a.cell.k,
            a.cell.window,
            a.cell.mode,
            a.cell.p,
            a.runs,
            a.failures
        );
    }
    if table.all_failed() {
        return Err(CliError::AllCellsFailed(table.rows.len()));
    }
    Ok(())
}

/// Builds the embedding and graph only, writing `graph.txt` and the
/// `nodes.txt` index-to-id map.
pub fn export_graph(config: RunConfig) -> Result<(), CliError> {
    let prepared = prepare(config)?;
    let out = prepared.config.out_dir();
    let embedding = pipeline::embed(
        &prepared.corpus,
        &prepared.vocab,
        &prepared.config.pipeline(),
    )?;
    let graph = pipeline::build_graph(&embedding.points, &prepared.config.graph)?;
    let mut f = create(out, "graph.txt")?;
    graph
        .write_edge_list(&mut f)
        .map_err(|e| StageError::new(Stage::Output, e))?;
    f.flush().map_err(stage_err(Stage::Output))?;
    let mut f = create(out, "nodes.txt")?;
    (|| {
        for (i, a) in prepared.corpus.iter().enumerate() {
            writeln!(f, "{i} {}", a.id)?;
        }
        f.flush()
    })()
    .map_err(stage_err(Stage::Output))?;
    println!(
        "{} nodes, {} edges -> {}",
        graph.node_count(),
        graph.edge_count(),
        out.join("graph.txt").display()
    );
    Ok(())
}

/// Prints the manifest of a run directory (or a manifest file).
pub fn inspect(path: &Path) -> Result<(), CliError> {
    let file = if path.is_dir() {
        [path.join("manifest.json"), path.join("summary.json")]
            .into_iter()
            .find(|p| p.exists())
            .unwrap_or_else(|| path.join("manifest.json"))
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", file.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("json value")
    );
    Ok(())
}
