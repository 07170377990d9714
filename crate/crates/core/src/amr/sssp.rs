//! Shortest paths from the `question` concept.
//!
//! Edges are traversed in both directions. Among shortest paths to a node the
//! one through the lexicographically smallest predecessor id is kept, which
//! makes the retained paths a BFS tree. A tree path is a subset of another
//! exactly when its end node is an ancestor of the other's, so the maximal
//! paths are the root-to-leaf paths.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{AmrGraph, QUESTION_CONCEPT};

/// Maximal shortest paths from the `question` node, in depth-first order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsspPathSet {
    pub source_concept: String,
    /// Concept labels along each path.
    pub paths: Vec<Vec<String>>,
    /// Node ids along each path, parallel to `paths`.
    pub node_paths: Vec<Vec<String>>,
}

impl SsspPathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

pub fn sssp_from_question(g: &AmrGraph) -> SsspPathSet {
    let empty = SsspPathSet {
        source_concept: QUESTION_CONCEPT.to_string(),
        paths: Vec::new(),
        node_paths: Vec::new(),
    };
    let Some(source) = g
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.concept == QUESTION_CONCEPT)
        .min_by(|a, b| a.1.id.cmp(&b.1.id))
        .map(|(k, _)| k)
    else {
        return empty;
    };

    let index: HashMap<&str, usize> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| (n.id.as_str(), k))
        .collect();
    let n = g.nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &g.edges {
        let (Some(&s), Some(&d)) = (index.get(e.src.as_str()), index.get(e.dst.as_str())) else {
            continue;
        };
        adj[s].push(d);
        adj[d].push(s);
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        if v == source || dist[v] == usize::MAX {
            continue;
        }
        let pred = adj[v]
            .iter()
            .copied()
            .filter(|&u| dist[u] + 1 == dist[v])
            .min_by(|&a, &b| g.nodes[a].id.cmp(&g.nodes[b].id))
            .expect("reachable node has a predecessor");
        children[pred].push(v);
    }

    let mut out = empty;
    let mut trail = vec![source];
    fn walk(
        v: usize,
        children: &[Vec<usize>],
        trail: &mut Vec<usize>,
        g: &AmrGraph,
        out: &mut SsspPathSet,
    ) {
        if children[v].is_empty() {
            out.paths
                .push(trail.iter().map(|&k| g.nodes[k].concept.clone()).collect());
            out.node_paths
                .push(trail.iter().map(|&k| g.nodes[k].id.clone()).collect());
            return;
        }
        for &c in &children[v] {
            trail.push(c);
            walk(c, children, trail, g, out);
            trail.pop();
        }
    }
    walk(source, &children, &mut trail, g, &mut out);
    out
}

/// The AMR path text appended to a document before encoding.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AmrAugmentedText {
    pub tokens: Vec<String>,
    pub rendered: String,
}

/// Concatenates path concepts in order, skipping concepts already emitted.
pub fn amr_text(paths: &SsspPathSet) -> AmrAugmentedText {
    let mut seen = HashSet::new();
    let tokens: Vec<String> = paths
        .paths
        .iter()
        .flatten()
        .filter(|c| seen.insert(c.as_str()))
        .cloned()
        .collect();
    let rendered = tokens.join(" ");
    AmrAugmentedText { tokens, rendered }
}
