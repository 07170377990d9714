//! Glue from question records and AMR graphs to GCN inputs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::amr::{amr_text, sssp_from_question, AmrGraph};
use crate::dataset::QuestionRecord;
use crate::docgraph::{build_document_graph, DocumentGraph, GraphError, GraphFile, GraphOptions};
use crate::encoder::{
    build_node_features, load_embeddings, EmbeddingSet, EncoderError, HashEncoder,
};
use crate::gnn::{GnnError, QuestionInput, Strategy};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("question {question_id:?}: no AMR graph for doc {doc_id:?}")]
    MissingAmr { question_id: String, doc_id: String },
    #[error("AMR input lists question {question_id:?} doc {doc_id:?} twice")]
    DuplicateAmr { question_id: String, doc_id: String },
    #[error("strategy {0} needs AMR input")]
    AmrRequired(Strategy),
    #[error(
        "question {question_id:?}: graph file lists docs {found:?}, dataset lists {expected:?}"
    )]
    GraphMismatch {
        question_id: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("question {0:?}: {1}")]
    Graph(String, GraphError),
    #[error("question {0:?}: {1}")]
    Encoder(String, EncoderError),
    #[error("question {0:?}: {1}")]
    Gnn(String, GnnError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

/// AMR graphs keyed by question id, then doc id.
#[derive(Debug, Clone, Default)]
pub struct AmrIndex {
    graphs: BTreeMap<String, HashMap<String, AmrGraph>>,
}

impl AmrIndex {
    pub fn new(amrs: Vec<AmrGraph>) -> Result<Self, PipelineError> {
        let mut graphs: BTreeMap<String, HashMap<String, AmrGraph>> = BTreeMap::new();
        for g in amrs {
            let per_q = graphs.entry(g.question_id.clone()).or_default();
            if per_q.contains_key(&g.doc_id) {
                return Err(PipelineError::DuplicateAmr {
                    question_id: g.question_id,
                    doc_id: g.doc_id,
                });
            }
            per_q.insert(g.doc_id.clone(), g);
        }
        Ok(Self { graphs })
    }

    pub fn get(&self, question_id: &str, doc_id: &str) -> Option<&AmrGraph> {
        self.graphs.get(question_id)?.get(doc_id)
    }

    /// All graphs, ordered by question id then doc id.
    pub fn iter(&self) -> impl Iterator<Item = &AmrGraph> {
        self.graphs.values().flat_map(|m| {
            let mut v: Vec<&AmrGraph> = m.values().collect();
            v.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            v
        })
    }

    /// The question's graphs in the record's document order.
    pub fn for_record(&self, record: &QuestionRecord) -> Result<Vec<AmrGraph>, PipelineError> {
        record
            .docs
            .iter()
            .map(|d| {
                self.get(&record.question_id, &d.doc_id)
                    .cloned()
                    .ok_or_else(|| PipelineError::MissingAmr {
                        question_id: record.question_id.clone(),
                        doc_id: d.doc_id.clone(),
                    })
            })
            .collect()
    }
}

pub fn record_graph(
    record: &QuestionRecord,
    amrs: &AmrIndex,
    opts: GraphOptions,
) -> Result<DocumentGraph, PipelineError> {
    let graphs = amrs.for_record(record)?;
    build_document_graph(&graphs, &record.question_id, opts)
        .map_err(|e| PipelineError::Graph(record.question_id.clone(), e))
}

/// Reads `<dir>/<question_id>.json` and checks it covers the record's docs in
/// order.
pub fn load_record_graph(
    record: &QuestionRecord,
    dir: &Path,
) -> Result<DocumentGraph, PipelineError> {
    let path = dir.join(format!("{}.json", record.question_id));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| PipelineError::Io(path.display().to_string(), e))?;
    let file: GraphFile = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Graph(record.question_id.clone(), e.into()))?;
    let graph = DocumentGraph::from_json(file)
        .map_err(|e| PipelineError::Graph(record.question_id.clone(), e))?;
    if graph.doc_ids() != record.doc_ids().as_slice() {
        return Err(PipelineError::GraphMismatch {
            question_id: record.question_id.clone(),
            expected: record.doc_ids(),
            found: graph.doc_ids().to_vec(),
        });
    }
    Ok(graph)
}

/// Hash-encoded node features; AMR path text is appended for strategies that
/// use it.
pub fn record_embeddings(
    record: &QuestionRecord,
    amrs: Option<&AmrIndex>,
    strategy: Strategy,
    encoder: &HashEncoder,
) -> Result<EmbeddingSet, PipelineError> {
    let docs: Vec<(String, String)> = record
        .docs
        .iter()
        .map(|d| (d.doc_id.clone(), d.text.clone()))
        .collect();
    let mut texts = HashMap::new();
    if let Some(amrs) = amrs {
        for d in &record.docs {
            if let Some(g) = amrs.get(&record.question_id, &d.doc_id) {
                texts.insert(d.doc_id.clone(), amr_text(&sssp_from_question(g)));
            }
        }
    }
    build_node_features(
        &record.question_text,
        &docs,
        &texts,
        strategy.feature_mode(),
        encoder,
    )
    .map_err(|e| match e {
        EncoderError::MissingAmrText(doc_id) => PipelineError::MissingAmr {
            question_id: record.question_id.clone(),
            doc_id,
        },
        other => PipelineError::Encoder(record.question_id.clone(), other),
    })
}

/// Reads `<dir>/<question_id>.emb`.
pub fn load_record_embeddings(
    record: &QuestionRecord,
    dir: &Path,
    dim: Option<usize>,
) -> Result<EmbeddingSet, PipelineError> {
    let path = dir.join(format!("{}.emb", record.question_id));
    load_embeddings(&path, dim).map_err(|e| PipelineError::Encoder(record.question_id.clone(), e))
}

/// Where graphs and features come from.
#[derive(Debug, Clone)]
pub struct InputSources<'a> {
    pub strategy: Strategy,
    pub amrs: Option<&'a AmrIndex>,
    pub graphs_dir: Option<&'a Path>,
    pub embeddings_dir: Option<&'a Path>,
    pub encoder: HashEncoder,
    pub graph_options: GraphOptions,
}

pub fn prepare_question(
    record: &QuestionRecord,
    src: &InputSources,
) -> Result<QuestionInput, PipelineError> {
    let mp = src.strategy.message_passing();
    let graph = if let Some(dir) = src.graphs_dir.filter(|_| mp) {
        load_record_graph(record, dir)?
    } else if let Some(amrs) = src.amrs.filter(|_| mp) {
        record_graph(record, amrs, src.graph_options)?
    } else if mp {
        return Err(PipelineError::AmrRequired(src.strategy));
    } else {
        DocumentGraph::edgeless(&record.question_id, record.doc_ids())
    };
    let embeddings = match src.embeddings_dir {
        Some(dir) => load_record_embeddings(record, dir, Some(src.encoder.dim))?,
        None => {
            if src.strategy.feature_mode() == crate::encoder::FeatureMode::AmrAugmented
                && src.amrs.is_none()
            {
                return Err(PipelineError::AmrRequired(src.strategy));
            }
            record_embeddings(record, src.amrs, src.strategy, &src.encoder)?
        }
    };
    QuestionInput::new(&graph, &embeddings, record.labels(), mp)
        .map_err(|e| PipelineError::Gnn(record.question_id.clone(), e))
}

pub fn prepare_questions(
    records: &[QuestionRecord],
    src: &InputSources,
) -> Result<Vec<QuestionInput>, PipelineError> {
    records.iter().map(|r| prepare_question(r, src)).collect()
}
