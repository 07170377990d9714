//! Per-question document graphs.
//!
//! Documents `i` and `j` are linked when their AMR graphs share at least one
//! concept. Each link carries two raw counts (shared concepts, shared
//! `(src concept, relation, dst concept)` triples) and a normalized 2-channel
//! feature per direction used as message weights by the GCN.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{AmrGraph, QUESTION_CONCEPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Channel 1 divided by its sum over the first index, channel 2 by its
    /// sum over the second index.
    #[default]
    PerChannelDims,
    /// Both channels divided by their row sums.
    PerRowBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphOptions {
    pub norm_mode: NormMode,
    /// Ignore the `question` concept (shared by every parse) when counting.
    pub exclude_question_concept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub common_nodes: u32,
    pub common_edges: u32,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("AMR for doc {doc_id:?} belongs to question {found:?}, expected {expected:?}")]
    MixedQuestionIds {
        expected: String,
        found: String,
        doc_id: String,
    },
    #[error("question {0:?} has no documents")]
    NoDocuments(String),
    #[error("duplicate doc id {0:?}")]
    DuplicateDocId(String),
    #[error("invalid graph file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn concept_set(g: &AmrGraph, exclude_question: bool) -> BTreeSet<&str> {
    g.nodes
        .iter()
        .map(|n| n.concept.as_str())
        .filter(|c| !(exclude_question && *c == QUESTION_CONCEPT))
        .collect()
}

fn triple_set(g: &AmrGraph, exclude_question: bool) -> BTreeSet<(&str, &str, &str)> {
    let concept: std::collections::HashMap<&str, &str> = g
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.concept.as_str()))
        .collect();
    g.edges
        .iter()
        .filter_map(|e| {
            let s = *concept.get(e.src.as_str())?;
            let d = *concept.get(e.dst.as_str())?;
            Some((s, e.rel.as_str(), d))
        })
        .filter(|(s, _, d)| {
            !(exclude_question && (*s == QUESTION_CONCEPT || *d == QUESTION_CONCEPT))
        })
        .collect()
}

/// Shared distinct concepts and shared distinct directed triples.
pub fn common_counts(g_i: &AmrGraph, g_j: &AmrGraph) -> EdgeCounts {
    common_counts_with(g_i, g_j, false)
}

pub fn common_counts_with(g_i: &AmrGraph, g_j: &AmrGraph, exclude_question: bool) -> EdgeCounts {
    let overlap = Overlap::new(g_i, exclude_question);
    overlap.against(&Overlap::new(g_j, exclude_question))
}

struct Overlap<'a> {
    concepts: BTreeSet<&'a str>,
    triples: BTreeSet<(&'a str, &'a str, &'a str)>,
}

impl<'a> Overlap<'a> {
    fn new(g: &'a AmrGraph, exclude_question: bool) -> Self {
        Self {
            concepts: concept_set(g, exclude_question),
            triples: triple_set(g, exclude_question),
        }
    }

    fn against(&self, other: &Overlap<'_>) -> EdgeCounts {
        EdgeCounts {
            common_nodes: self.concepts.intersection(&other.concepts).count() as u32,
            common_edges: self.triples.intersection(&other.triples).count() as u32,
        }
    }
}

/// Normalizes raw counts (keyed by `i < j`) into per-direction features
/// keyed by ordered pairs `(i, j)`. Zero denominators leave zeros.
pub fn normalize_edge_features(
    raw: &BTreeMap<(usize, usize), EdgeCounts>,
    n: usize,
    mode: NormMode,
) -> BTreeMap<(usize, usize), [f64; 2]> {
    // raw is symmetric, so the column sum at j equals the row sum at j.
    let mut sums = vec![[0.0f64; 2]; n];
    for (&(i, j), c) in raw {
        for v in [i, j] {
            sums[v][0] += c.common_nodes as f64;
            sums[v][1] += c.common_edges as f64;
        }
    }
    let div = |x: u32, d: f64| if d > 0.0 { x as f64 / d } else { 0.0 };
    let mut out = BTreeMap::new();
    for (&(a, b), c) in raw {
        for (i, j) in [(a, b), (b, a)] {
            let f = match mode {
                NormMode::PerChannelDims => [
                    div(c.common_nodes, sums[j][0]),
                    div(c.common_edges, sums[i][1]),
                ],
                NormMode::PerRowBoth => [
                    div(c.common_nodes, sums[i][0]),
                    div(c.common_edges, sums[i][1]),
                ],
            };
            out.insert((i, j), f);
        }
    }
    out
}

/// Undirected document graph for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    question_id: String,
    doc_ids: Vec<String>,
    raw: BTreeMap<(usize, usize), EdgeCounts>,
    norm: BTreeMap<(usize, usize), [f64; 2]>,
    neighbors: Vec<Vec<usize>>,
}

impl DocumentGraph {
    fn assemble(
        question_id: String,
        doc_ids: Vec<String>,
        raw: BTreeMap<(usize, usize), EdgeCounts>,
        norm: BTreeMap<(usize, usize), [f64; 2]>,
    ) -> Self {
        let mut neighbors = vec![Vec::new(); doc_ids.len()];
        for &(i, j) in raw.keys() {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            question_id,
            doc_ids,
            raw,
            norm,
            neighbors,
        }
    }

    /// A graph with no edges; every document is isolated.
    pub fn edgeless(question_id: &str, doc_ids: Vec<String>) -> Self {
        Self::assemble(
            question_id.to_string(),
            doc_ids,
            BTreeMap::new(),
            BTreeMap::new(),
        )
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    /// Unordered adjacency as `(i, j)` with `i < j`.
    pub fn adjacency(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.raw.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.raw.len()
    }

    pub fn raw_features(&self, i: usize, j: usize) -> Option<EdgeCounts> {
        self.raw.get(&(i.min(j), i.max(j))).copied()
    }

    /// Normalized feature of the directed edge `i -> j`.
    pub fn edge_feature(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        self.norm.get(&(i, j)).copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Indices with at least one neighbor.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&v| !self.neighbors[v].is_empty())
            .collect()
    }

    pub fn to_json(&self) -> GraphFile {
        let mut edges = Vec::with_capacity(self.norm.len());
        for (&(i, j), f) in &self.norm {
            let c = self.raw_features(i, j).unwrap_or_default();
            edges.push(GraphFileEdge {
                i,
                j,
                common_nodes: c.common_nodes,
                common_edges: c.common_edges,
                f1: f[0],
                f2: f[1],
            });
        }
        GraphFile {
            question_id: self.question_id.clone(),
            doc_ids: self.doc_ids.clone(),
            edges,
        }
    }

    pub fn from_json(file: GraphFile) -> Result<Self, GraphError> {
        let n = file.doc_ids.len();
        let mut seen = HashSet::new();
        for d in &file.doc_ids {
            if !seen.insert(d.as_str()) {
                return Err(GraphError::DuplicateDocId(d.clone()));
            }
        }
        let mut raw = BTreeMap::new();
        let mut norm = BTreeMap::new();
        for e in &file.edges {
            if e.i >= n || e.j >= n || e.i == e.j {
                return Err(GraphError::Invalid(format!("bad edge ({}, {})", e.i, e.j)));
            }
            if !(e.f1.is_finite() && e.f2.is_finite()) {
                return Err(GraphError::Invalid(format!(
                    "non-finite feature on edge ({}, {})",
                    e.i, e.j
                )));
            }
            let counts = EdgeCounts {
                common_nodes: e.common_nodes,
                common_edges: e.common_edges,
            };
            let key = (e.i.min(e.j), e.i.max(e.j));
            if let Some(prev) = raw.insert(key, counts) {
                if prev != counts {
                    return Err(GraphError::Invalid(format!(
                        "asymmetric counts on edge ({}, {})",
                        e.i, e.j
                    )));
                }
            }
            norm.insert((e.i, e.j), [e.f1, e.f2]);
        }
        for &(i, j) in raw.keys() {
            if !norm.contains_key(&(i, j)) || !norm.contains_key(&(j, i)) {
                return Err(GraphError::Invalid(format!(
                    "edge ({i}, {j}) is missing one direction"
                )));
            }
        }
        Ok(Self::assemble(file.question_id, file.doc_ids, raw, norm))
    }
}

/// On-disk form of a [`DocumentGraph`]; `edges` lists both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub question_id: String,
    pub doc_ids: Vec<String>,
    pub edges: Vec<GraphFileEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFileEdge {
    pub i: usize,
    pub j: usize,
    pub common_nodes: u32,
    pub common_edges: u32,
    pub f1: f64,
    pub f2: f64,
}

/// Builds the graph over `amrs` in the given order.
pub fn build_document_graph(
    amrs: &[AmrGraph],
    question_id: &str,
    opts: GraphOptions,
) -> Result<DocumentGraph, GraphError> {
    if amrs.is_empty() {
        return Err(GraphError::NoDocuments(question_id.to_string()));
    }
    let mut seen = HashSet::new();
    for g in amrs {
        if g.question_id != question_id {
            return Err(GraphError::MixedQuestionIds {
                expected: question_id.to_string(),
                found: g.question_id.clone(),
                doc_id: g.doc_id.clone(),
            });
        }
        if !seen.insert(g.doc_id.as_str()) {
            return Err(GraphError::DuplicateDocId(g.doc_id.clone()));
        }
    }
    let overlaps: Vec<Overlap> = amrs
        .iter()
        .map(|g| Overlap::new(g, opts.exclude_question_concept))
        .collect();
    let n = amrs.len();
    let mut raw = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let c = overlaps[i].against(&overlaps[j]);
            if c.common_nodes >= 1 {
                raw.insert((i, j), c);
            }
        }
    }
    let norm = normalize_edge_features(&raw, n, opts.norm_mode);
    Ok(DocumentGraph::assemble(
        question_id.to_string(),
        amrs.iter().map(|g| g.doc_id.clone()).collect(),
        raw,
        norm,
    ))
}
