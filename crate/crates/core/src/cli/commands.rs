use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{optional_path, require_output, require_path, RunConfig};
use super::CliError;
use crate::amr::{
    load_amr_jsonl, parse_penman_blocks, sssp_from_question, write_amr_jsonl, AmrGraph,
};
use crate::dataset::{load_dataset, QuestionRecord};
use crate::encoder::{save_embeddings, FeatureMode, HashEncoder};
use crate::gnn::{
    load_checkpoint, save_checkpoint, score_questions, train as train_model, FeatureContext,
    GcnModel, GnnError, QuestionInput, Strategy,
};
use crate::metrics::{eval_scores_file, read_qrels, MetricsError};
use crate::pipeline::{
    prepare_question, record_embeddings, record_graph, AmrIndex, InputSources, PipelineError,
};
use crate::rng::derive_seed;
use crate::synthetic::{generate, write_corpus};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| runtime(path, e))
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Io(..) | PipelineError::Gnn(..) => CliError::Runtime(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn gnn_error(e: GnnError) -> CliError {
    match e {
        GnnError::InvalidConfig(_)
        | GnnError::EmptyDataset
        | GnnError::NoPositivesInDataset
        | GnnError::BadCheckpoint(_) => CliError::Validation(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn read_dataset(path: &Path, cfg: &RunConfig) -> Result<Vec<QuestionRecord>, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    load_dataset(BufReader::new(file), cfg.max_docs())
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_amrs(path: &Path) -> Result<Vec<AmrGraph>, CliError> {
    let file =
        File::open(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    load_amr_jsonl(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_amr_index(path: Option<&Path>) -> Result<Option<AmrIndex>, CliError> {
    path.map(|p| read_amrs(p).and_then(|g| AmrIndex::new(g).map_err(pipeline_error)))
        .transpose()
}

/// Penman files in `input_dir`, read in file-name order, become one JSONL
/// stream sorted by question id. A file's stem names the question unless a
/// block's `# ::id` line says otherwise.
pub fn parse_amr(cfg: &RunConfig) -> Result<(), CliError> {
    let input_dir = require_path(&cfg.input_dir, "input_dir")?;
    let out = require_output(&cfg.out, "out")?;
    let mut files: Vec<PathBuf> = fs::read_dir(input_dir)
        .map_err(|e| CliError::Validation(format!("{}: {e}", input_dir.display())))?
        .map(|entry| entry.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(format!("{}: {e}", input_dir.display())))?;
    files.retain(|p| p.is_file());
    files.sort();

    let mut graphs: Vec<(AmrGraph, String)> = Vec::new();
    for path in &files {
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let stem = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        let blocks = parse_penman_blocks(&text, &stem)
            .map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        graphs.extend(blocks.into_iter().map(|b| (b.graph, name.clone())));
    }
    graphs.sort_by(|a, b| a.0.question_id.cmp(&b.0.question_id));
    let mut seen = HashSet::new();
    for (g, name) in &graphs {
        if !seen.insert((g.question_id.as_str(), g.doc_id.as_str())) {
            return Err(CliError::Validation(format!(
                "{name}: question {:?} doc {:?} defined more than once",
                g.question_id, g.doc_id
            )));
        }
    }
    let graphs: Vec<AmrGraph> = graphs.into_iter().map(|(g, _)| g).collect();
    let mut w = create(out)?;
    write_amr_jsonl(&mut w, &graphs)
        .and_then(|_| w.flush())
        .map_err(|e| runtime(out, e))?;
    eprintln!(
        "parse-amr: {} graphs from {} files",
        graphs.len(),
        files.len()
    );
    Ok(())
}

/// Writes `<out_dir>/<question_id>.json` per question, plus `<question_id>.emb`
/// under `embeddings_dir` when that key is set.
pub fn build_graphs(cfg: &RunConfig, threads: usize) -> Result<(), CliError> {
    let dataset = require_path(&cfg.dataset, "dataset")?;
    let amr = require_path(&cfg.amr, "amr")?;
    let out_dir = require_output(&cfg.out_dir, "out_dir")?;
    let records = read_dataset(dataset, cfg)?;
    let amrs = read_amr_index(Some(amr))?.expect("amr path given");
    let opts = cfg.graph_options();
    let emb = match &cfg.embeddings_dir {
        Some(dir) => Some((dir.as_path(), cfg.strategy()?)),
        None => None,
    };
    let encoder = HashEncoder::new(cfg.encoder_dim(), cfg.encoder_seed());

    let built = pool(threads)?.install(|| {
        records
            .par_iter()
            .map(|r| {
                let graph = record_graph(r, &amrs, opts)?;
                let embeddings = match emb {
                    Some((_, strategy)) => {
                        Some(record_embeddings(r, Some(&amrs), strategy, &encoder)?)
                    }
                    None => None,
                };
                Ok((graph, embeddings))
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    });
    let built = built.map_err(pipeline_error)?;

    fs::create_dir_all(out_dir).map_err(|e| runtime(out_dir, e))?;
    if let Some((dir, _)) = emb {
        fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
    }
    for (r, (graph, embeddings)) in records.iter().zip(&built) {
        if graph.edge_count() == 0 && graph.len() > 1 {
            eprintln!(
                "warning: question {:?}: no two documents share a concept; graph has no edges",
                r.question_id
            );
        }
        let path = out_dir.join(format!("{}.json", r.question_id));
        let json = serde_json::to_vec_pretty(&graph.to_json()).expect("graph serializes");
        write_file(&path, &json)?;
        if let (Some((dir, _)), Some(set)) = (emb, embeddings) {
            let path = dir.join(format!("{}.emb", r.question_id));
            save_embeddings(set, &path).map_err(|e| runtime(&path, e))?;
        }
    }
    eprintln!("build-graphs: {} questions", records.len());
    Ok(())
}

fn check_amr_requirement(strategy: Strategy, cfg: &RunConfig) -> Result<(), CliError> {
    let needs_graph = strategy.message_passing() && cfg.graphs_dir.is_none();
    let needs_text =
        strategy.feature_mode() == FeatureMode::AmrAugmented && cfg.embeddings_dir.is_none();
    if cfg.amr.is_none() && (needs_graph || needs_text) {
        return Err(CliError::Validation(format!(
            "strategy {strategy} needs AMR input: set `amr`{}",
            if needs_text { "" } else { " or `graphs_dir`" }
        )));
    }
    Ok(())
}

fn prepare_all(
    records: &[QuestionRecord],
    src: &InputSources,
    pool: &rayon::ThreadPool,
) -> Result<Vec<QuestionInput>, CliError> {
    pool.install(|| {
        records
            .par_iter()
            .map(|r| prepare_question(r, src))
            .collect::<Result<Vec<_>, _>>()
    })
    .map_err(pipeline_error)
}

/// Trains and writes `model.ckpt` (best dev checkpoint) and
/// `train_log.jsonl` under `out_dir`.
pub fn train(cfg: &RunConfig, threads: usize) -> Result<(), CliError> {
    let strategy = cfg.strategy()?;
    let dataset = require_path(&cfg.dataset, "dataset")?;
    let dev_dataset = optional_path(&cfg.dev_dataset, "dev_dataset")?;
    let amr = optional_path(&cfg.amr, "amr")?;
    let graphs_dir = optional_path(&cfg.graphs_dir, "graphs_dir")?;
    let embeddings_dir = optional_path(&cfg.embeddings_dir, "embeddings_dir")?;
    let out_dir = require_output(&cfg.out_dir, "out_dir")?;
    check_amr_requirement(strategy, cfg)?;
    let tc = cfg.train_config(strategy);
    tc.validate().map_err(gnn_error)?;
    let dims = cfg.model_dims()?;
    let model = GcnModel::new(
        &dims,
        cfg.dropout.unwrap_or(super::config::DEFAULT_DROPOUT),
        strategy,
        derive_seed(cfg.seed(), "model"),
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;

    let train_records = read_dataset(dataset, cfg)?;
    let dev_records = match dev_dataset {
        Some(p) => read_dataset(p, cfg)?,
        None => Vec::new(),
    };
    let amrs = read_amr_index(amr)?;
    let src = InputSources {
        strategy,
        amrs: amrs.as_ref(),
        graphs_dir,
        embeddings_dir,
        encoder: HashEncoder::new(cfg.encoder_dim(), cfg.encoder_seed()),
        graph_options: cfg.graph_options(),
    };
    let workers = pool(threads)?;
    let train_set = prepare_all(&train_records, &src, &workers)?;
    let dev_set = prepare_all(&dev_records, &src, &workers)?;
    drop(workers);

    let (best, log) = train_model(&train_set, &dev_set, model, &tc, threads).map_err(gnn_error)?;
    fs::create_dir_all(out_dir).map_err(|e| runtime(out_dir, e))?;
    let ctx = FeatureContext {
        encoder_seed: embeddings_dir.is_none().then(|| cfg.encoder_seed()),
        graph_options: (strategy.message_passing() && graphs_dir.is_none())
            .then(|| cfg.graph_options()),
    };
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &best, log.best_step, ctx).map_err(|e| runtime(&ckpt, e))?;
    write_file(&out_dir.join(TRAIN_LOG_FILE), log.to_jsonl().as_bytes())?;
    match log.best_dev_mrr {
        Some(mrr) => println!("best step {} dev MRR {mrr:.4}", log.best_step),
        None => println!("final step {}", log.best_step),
    }
    Ok(())
}

/// Writes `question_id \t doc_id \t score` rows, questions sorted, documents
/// in dataset order.
pub fn rerank(cfg: &RunConfig, threads: usize) -> Result<(), CliError> {
    let ckpt = require_path(&cfg.checkpoint, "checkpoint")?;
    let dataset = require_path(&cfg.dataset, "dataset")?;
    let amr = optional_path(&cfg.amr, "amr")?;
    let graphs_dir = optional_path(&cfg.graphs_dir, "graphs_dir")?;
    let embeddings_dir = optional_path(&cfg.embeddings_dir, "embeddings_dir")?;
    let out = require_output(&cfg.out, "out")?;
    let (model, header) = load_checkpoint(ckpt).map_err(|e| match e {
        GnnError::Io(io) => CliError::Validation(format!("{}: {io}", ckpt.display())),
        other => CliError::Validation(format!("{}: {other}", ckpt.display())),
    })?;
    if let Some(s) = cfg.strategy.filter(|&s| s != model.strategy) {
        return Err(CliError::Validation(format!(
            "config asks for strategy {s} but the checkpoint was trained as {}",
            model.strategy
        )));
    }
    if let Some(d) = cfg.encoder_dim.filter(|&d| d != model.input_dim()) {
        return Err(CliError::Validation(format!(
            "encoder_dim {d} does not match the checkpoint's input width {}",
            model.input_dim()
        )));
    }
    check_amr_requirement(model.strategy, cfg)?;
    let records = read_dataset(dataset, cfg)?;
    let amrs = read_amr_index(amr)?;
    let src = InputSources {
        strategy: model.strategy,
        amrs: amrs.as_ref(),
        graphs_dir,
        embeddings_dir,
        encoder: HashEncoder::new(
            model.input_dim(),
            header.encoder_seed.unwrap_or_else(|| cfg.encoder_seed()),
        ),
        graph_options: header.graph_options.unwrap_or_else(|| cfg.graph_options()),
    };
    let workers = pool(threads)?;
    let inputs = prepare_all(&records, &src, &workers)?;
    let scores = workers
        .install(|| score_questions(&model, &inputs))
        .map_err(gnn_error)?;

    let mut w = create(out)?;
    for (r, s) in records.iter().zip(&scores) {
        for (d, v) in r.docs.iter().zip(s.iter()) {
            writeln!(w, "{}\t{}\t{}", r.question_id, d.doc_id, v).map_err(|e| runtime(out, e))?;
        }
    }
    w.flush().map_err(|e| runtime(out, e))?;
    eprintln!("rerank: scored {} questions", records.len());
    Ok(())
}

/// Prints the metric table; the full report goes to `out` as JSON when set.
pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let scores = require_path(&cfg.scores, "scores")?;
    let qrels = require_path(&cfg.qrels, "qrels")?;
    let report = eval_scores_file(scores, qrels).map_err(|e| match e {
        MetricsError::Io(..) => CliError::Runtime(e.to_string()),
        other => CliError::Validation(other.to_string()),
    })?;
    println!("{report}");
    if let Some(out) = &cfg.out {
        let json = serde_json::to_vec_pretty(&report).expect("report serializes");
        write_file(out, &json)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathCounts {
    pub docs: usize,
    /// Mean number of retained shortest paths; absent when `docs` is 0.
    pub mean: Option<f64>,
    /// Documents per path count.
    pub histogram: BTreeMap<usize, usize>,
}

impl PathCounts {
    fn add(&mut self, count: usize) {
        self.docs += 1;
        *self.histogram.entry(count).or_default() += 1;
        let total: usize = self.histogram.iter().map(|(k, v)| k * v).sum();
        self.mean = Some(total as f64 / self.docs as f64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathReport {
    pub positive: PathCounts,
    pub negative: PathCounts,
}

/// Number of retained shortest paths per document, split by label. Documents
/// not marked relevant in the qrels count as negatives; a document without a
/// `question` node lands in bucket 0.
pub fn path_report(graphs: &[AmrGraph], positives: &crate::metrics::Qrels) -> PathReport {
    let mut report = PathReport::default();
    for g in graphs {
        let count = sssp_from_question(g).len();
        let positive = positives
            .get(&g.question_id)
            .is_some_and(|p| p.contains(&g.doc_id));
        if positive {
            report.positive.add(count);
        } else {
            report.negative.add(count);
        }
    }
    report
}

pub fn report_paths(cfg: &RunConfig) -> Result<(), CliError> {
    let amr = require_path(&cfg.amr, "amr")?;
    let qrels_path = require_path(&cfg.qrels, "qrels")?;
    let graphs = read_amrs(amr)?;
    let file = File::open(qrels_path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", qrels_path.display())))?;
    let qrels = read_qrels(BufReader::new(file), &qrels_path.display().to_string())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let report = path_report(&graphs, &qrels);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &cfg.out {
        Some(out) => write_file(out, json.as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

pub fn gen_synthetic(cfg: &RunConfig) -> Result<(), CliError> {
    let out_dir = require_output(&cfg.out_dir, "out_dir")?;
    let sc = cfg.synthetic_config();
    sc.validate()
        .map_err(|e| CliError::Validation(format!("synthetic: {e}")))?;
    let corpus = generate(&sc).map_err(|e| CliError::Validation(format!("synthetic: {e}")))?;
    write_corpus(&corpus, out_dir).map_err(|e| runtime(out_dir, e))?;
    eprintln!(
        "gen-synthetic: {} train and {} dev questions in {}",
        corpus.train.len(),
        corpus.dev.len(),
        out_dir.display()
    );
    Ok(())
}
