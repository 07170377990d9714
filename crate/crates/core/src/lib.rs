//! Graph-based document reranking for retrieval-augmented generation.
//!
//! The pipeline has five stages, each in its own module:
//!
//! * [`amr`] ingests Abstract Meaning Representation graphs (Penman or JSONL)
//!   and extracts shortest paths rooted at the `question` concept.
//! * [`docgraph`] links the documents retrieved for one question whenever
//!   their AMR graphs share concepts, with two normalized edge channels.
//! * [`encoder`] turns document text (optionally extended with AMR path text)
//!   into node features.
//! * [`gnn`] is the edge-weighted two-layer GCN reranker with hand-written
//!   reverse-mode gradients, losses and an AdamW training loop.
//! * [`metrics`] scores rankings with MRR / MHits@10 and their tie-aware
//!   variants MTRR / TMHits@10.
//!
//! [`cli`] wires the stages into the `grag` command-line tool.

pub mod amr;
pub mod cli;
pub mod dataset;
pub mod docgraph;
pub mod encoder;
pub mod gnn;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
