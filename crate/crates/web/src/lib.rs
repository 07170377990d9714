//! Browser bindings for three interactive operations: shortest AMR paths from
//! the `question` node, a document graph over several AMRs, and tie-aware
//! metrics for a score list. Each returns a JSON string.

use grag::amr::{amr_text, parse_penman, parse_penman_blocks, sssp_from_question};
use grag::docgraph::{build_document_graph, GraphOptions, NormMode};
use grag::metrics::{mhits10, mrr, mtrr, tmhits10, RankedQuestion};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DEMO_QUESTION: &str = "demo";

#[derive(Debug, Serialize)]
struct PathsView {
    nodes: usize,
    edges: usize,
    paths: Vec<Vec<String>>,
    amr_text: String,
}

pub fn amr_paths_json(penman: &str) -> Result<String, String> {
    let g = parse_penman(penman, DEMO_QUESTION, "doc").map_err(|e| e.to_string())?;
    let paths = sssp_from_question(&g);
    let view = PathsView {
        nodes: g.nodes.len(),
        edges: g.edges.len(),
        amr_text: amr_text(&paths).rendered,
        paths: paths.paths,
    };
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

/// `penman` holds one graph per document; `# ::id <doc>` lines name them.
pub fn document_graph_json(
    penman: &str,
    norm_mode: &str,
    exclude_question: bool,
) -> Result<String, String> {
    let norm_mode = match norm_mode {
        "per_channel_dims" => NormMode::PerChannelDims,
        "per_row_both" => NormMode::PerRowBoth,
        other => return Err(format!("unknown norm mode {other:?}")),
    };
    let graphs: Vec<_> = parse_penman_blocks(penman, DEMO_QUESTION)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|b| b.graph)
        .collect();
    let opts = GraphOptions {
        norm_mode,
        exclude_question_concept: exclude_question,
    };
    let graph = build_document_graph(&graphs, DEMO_QUESTION, opts).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&graph.to_json()).expect("graph serializes"))
}

#[derive(Debug, Serialize)]
struct MetricsView {
    ranks: Vec<usize>,
    tie_counts: Vec<usize>,
    mrr: f64,
    mhits10: f64,
    mtrr: f64,
    tmhits10: f64,
}

fn numbers<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("bad {what} {t:?}")))
        .collect()
}

/// `scores` and `positives` (0-based indices) are comma or space separated.
pub fn tie_metrics_json(scores: &str, positives: &str) -> Result<String, String> {
    let scores: Vec<f64> = numbers(scores, "score")?;
    let positives: Vec<usize> = numbers(positives, "index")?;
    if let Some(p) = positives.iter().find(|&&p| p >= scores.len()) {
        return Err(format!(
            "positive index {p} is out of range for {} scores",
            scores.len()
        ));
    }
    let q = RankedQuestion::from_scores(DEMO_QUESTION, &scores, positives)
        .map_err(|e| e.to_string())?;
    let one = std::slice::from_ref(&q);
    let view = MetricsView {
        ranks: (0..scores.len()).map(|i| q.ranking.rank(i)).collect(),
        tie_counts: (0..scores.len()).map(|i| q.ranking.tie_count(i)).collect(),
        mrr: mrr(one),
        mhits10: mhits10(one),
        mtrr: mtrr(one),
        tmhits10: tmhits10(one),
    };
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

#[wasm_bindgen]
pub fn amr_paths(penman: &str) -> Result<String, JsValue> {
    amr_paths_json(penman).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn document_graph(
    penman: &str,
    norm_mode: &str,
    exclude_question: bool,
) -> Result<String, JsValue> {
    document_graph_json(penman, norm_mode, exclude_question).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tie_metrics(scores: &str, positives: &str) -> Result<String, JsValue> {
    tie_metrics_json(scores, positives).map_err(|e| JsValue::from_str(&e))
}
