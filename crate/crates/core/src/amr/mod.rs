//! Abstract Meaning Representation graphs.
//!
//! An [`AmrGraph`] is the parse of one `question:<question><document>`
//! sequence. Graphs come in either as Penman text ([`penman`]) or as
//! pre-parsed JSONL records ([`jsonl`]); [`sssp`] extracts the shortest paths
//! from the `question` concept that extend the document text for encoding.

pub mod jsonl;
pub mod penman;
pub mod sssp;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jsonl::{load_amr_jsonl, write_amr_jsonl};
pub use penman::{parse_penman, parse_penman_blocks, PenmanBlock};
pub use sssp::{amr_text, sssp_from_question, AmrAugmentedText, SsspPathSet};

/// Concept label that roots path extraction.
pub const QUESTION_CONCEPT: &str = "question";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmrNode {
    pub id: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmrEdge {
    pub src: String,
    pub rel: String,
    pub dst: String,
}

/// One parsed AMR for a question-document pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmrGraph {
    pub question_id: String,
    pub doc_id: String,
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
}

/// A broken [`AmrGraph`] invariant; `field` locates the offending value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl AmrGraph {
    /// Checks node-id uniqueness, endpoint existence, non-empty labels and
    /// the absence of self-loops.
    pub fn validate(&self) -> Result<(), Violation> {
        let mut ids = HashSet::with_capacity(self.nodes.len());
        for (k, node) in self.nodes.iter().enumerate() {
            if node.id.is_empty() {
                return Err(Violation::new(format!("nodes[{k}].id"), "empty node id"));
            }
            if node.concept.is_empty() {
                return Err(Violation::new(
                    format!("nodes[{k}].concept"),
                    "empty concept",
                ));
            }
            if !ids.insert(node.id.as_str()) {
                return Err(Violation::new(
                    format!("nodes[{k}].id"),
                    format!("duplicate node id {:?}", node.id),
                ));
            }
        }
        for (k, edge) in self.edges.iter().enumerate() {
            if edge.rel.is_empty() {
                return Err(Violation::new(format!("edges[{k}].rel"), "empty relation"));
            }
            if !ids.contains(edge.src.as_str()) {
                return Err(Violation::new(
                    format!("edges[{k}].src"),
                    format!("unknown node id {:?}", edge.src),
                ));
            }
            if !ids.contains(edge.dst.as_str()) {
                return Err(Violation::new(
                    format!("edges[{k}].dst"),
                    format!("unknown node id {:?}", edge.dst),
                ));
            }
            if edge.src == edge.dst {
                return Err(Violation::new(
                    format!("edges[{k}]"),
                    format!("self-loop on {:?}", edge.src),
                ));
            }
        }
        Ok(())
    }

    pub fn concept_of(&self, id: &str) -> Option<&str> {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .map(|n| n.concept.as_str())
    }

    pub fn has_question_node(&self) -> bool {
        self.nodes.iter().any(|n| n.concept == QUESTION_CONCEPT)
    }
}

#[derive(Debug, Error)]
pub enum AmrError {
    #[error("line {line}: unbalanced parentheses")]
    UnbalancedParens { line: usize },
    #[error("line {line}: variable {var:?} is defined more than once")]
    DuplicateVariableDefinition { var: String, line: usize },
    #[error("no AMR graph in input")]
    EmptyGraph,
    #[error("variable {var:?} is referenced but never defined")]
    DanglingReentrancy { var: String },
    #[error("line {line}: self-loop on variable {var:?}")]
    SelfLoop { var: String, line: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: malformed JSON record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: schema violation at {field}: {reason}")]
    SchemaViolation {
        line: usize,
        field: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
