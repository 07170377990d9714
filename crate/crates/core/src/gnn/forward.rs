use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GcnModel, GnnError};
use crate::docgraph::DocumentGraph;
use crate::encoder::EmbeddingSet;

/// Directed view of a document graph: every undirected edge appears once per
/// direction, each with its own normalized feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    incoming: Vec<Vec<usize>>,
}

impl Topology {
    pub fn edgeless(n: usize) -> Self {
        Self::from_directed(n, Vec::new())
    }

    pub fn from_graph(graph: &DocumentGraph) -> Self {
        let mut directed = Vec::new();
        for (i, j) in graph.adjacency() {
            for (u, v) in [(i, j), (j, i)] {
                let f = graph
                    .edge_feature(u, v)
                    .expect("document graph stores both directions");
                directed.push(((u, v), f));
            }
        }
        Self::from_directed(graph.len(), directed)
    }

    /// Builds from `((u, v), e_uv)` pairs. The caller supplies both directions
    /// of every undirected edge.
    pub fn from_directed(n: usize, mut directed: Vec<((usize, usize), [f64; 2])>) -> Self {
        directed.sort_by_key(|a| a.0);
        let mut incoming = vec![Vec::new(); n];
        for (k, ((u, v), _)) in directed.iter().enumerate() {
            assert!(*u < n && *v < n && u != v, "edge ({u}, {v}) out of range");
            incoming[*v].push(k);
        }
        let features = Array2::from_shape_fn((directed.len(), 2), |(k, c)| directed[k].1[c]);
        Self {
            n,
            edges: directed.into_iter().map(|(e, _)| e).collect(),
            features,
            incoming,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Directed edges `(u, v)`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Indices into [`Topology::edges`] of the edges ending at `v`.
    pub fn incoming(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }
}

/// Everything needed to score one question's documents.
#[derive(Debug, Clone)]
pub struct QuestionInput {
    pub question_id: String,
    pub doc_ids: Vec<String>,
    pub topology: Topology,
    /// Row `i` is the feature of `doc_ids[i]`.
    pub features: Array2<f64>,
    pub query: Array1<f64>,
    pub labels: Vec<bool>,
}

impl QuestionInput {
    /// Gathers features in graph order. With `message_passing == false` the
    /// graph's edges are ignored.
    pub fn new(
        graph: &DocumentGraph,
        embeddings: &EmbeddingSet,
        labels: Vec<bool>,
        message_passing: bool,
    ) -> Result<Self, GnnError> {
        if labels.len() != graph.len() {
            return Err(GnnError::DimMismatch {
                what: "labels",
                expected: graph.len(),
                found: labels.len(),
            });
        }
        let d = embeddings.dim();
        let mut features = Array2::zeros((graph.len(), d));
        for (i, id) in graph.doc_ids().iter().enumerate() {
            let v = embeddings
                .doc_vector(id)
                .ok_or_else(|| GnnError::MissingEmbedding(id.clone()))?;
            features.row_mut(i).assign(&ArrayView1::from(v));
        }
        let topology = if message_passing {
            Topology::from_graph(graph)
        } else {
            Topology::edgeless(graph.len())
        };
        Ok(Self {
            question_id: graph.question_id().to_string(),
            doc_ids: graph.doc_ids().to_vec(),
            topology,
            features,
            query: Array1::from(embeddings.question_vector().to_vec()),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn positives(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are drawn from the model seed, the step and `salt`
    /// (the question's index in the training set).
    Train {
        step: u64,
        salt: u64,
    },
}

/// Node and edge representations after a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub node_reps: Array2<f64>,
    /// Row `k` belongs to the directed edge `edges[k]`.
    pub edge_reps: Array2<f64>,
    pub edges: Vec<(usize, usize)>,
}

impl LayerState {
    pub fn edge_map(&self) -> BTreeMap<(usize, usize), [f64; 2]> {
        self.edges
            .iter()
            .enumerate()
            .map(|(k, &e)| (e, [self.edge_reps[[k, 0]], self.edge_reps[[k, 1]]]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub(super) struct LayerCache {
    pub x_in: Array2<f64>,
    pub e_in: Array2<f64>,
    pub agg: Array2<f64>,
    pub z: Array2<f64>,
    pub mask: Option<Array2<f64>>,
    /// Mean feature of the edges arriving at each node (n x 2).
    pub edge_mean: Array2<f64>,
    /// Edge update before its ReLU (m x 2).
    pub edge_pre: Array2<f64>,
}

/// Intermediates recorded by [`forward`] for [`super::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(super) stamp: u64,
    pub(super) edges: Vec<(usize, usize)>,
    pub(super) n: usize,
    pub(super) layers: Vec<LayerCache>,
}

/// `(e[0] + e[1]) * x_u`.
pub fn message(x_u: ArrayView1<f64>, e_uv: [f64; 2]) -> Array1<f64> {
    x_u.mapv(|v| (e_uv[0] + e_uv[1]) * v)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn dropout_rng(model: &GcnModel, step: u64, salt: u64) -> rand_chacha::ChaCha8Rng {
    crate::rng::stream(
        model.seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        "dropout",
        salt,
    )
}

pub fn forward(
    model: &GcnModel,
    topo: &Topology,
    x: &Array2<f64>,
    mode: Mode,
) -> Result<(LayerState, ForwardCache), GnnError> {
    if x.nrows() != topo.n {
        return Err(GnnError::DimMismatch {
            what: "feature rows",
            expected: topo.n,
            found: x.nrows(),
        });
    }
    if x.ncols() != model.input_dim() {
        return Err(GnnError::DimMismatch {
            what: "feature width",
            expected: model.input_dim(),
            found: x.ncols(),
        });
    }
    let n = topo.n;
    let m = topo.edges.len();
    let n_layers = model.layers().len();
    let mut rng = match mode {
        Mode::Train { step, salt } if model.dropout > 0.0 => Some(dropout_rng(model, step, salt)),
        _ => None,
    };

    let mut h = x.clone();
    let mut e = topo.features.clone();
    let mut caches = Vec::with_capacity(n_layers);
    for (l, p) in model.layers().iter().enumerate() {
        let mut agg = Array2::zeros((n, p.d_in()));
        let mut edge_mean = Array2::zeros((n, 2));
        for v in 0..n {
            let inc = &topo.incoming[v];
            if inc.is_empty() {
                continue;
            }
            let inv = 1.0 / inc.len() as f64;
            for &k in inc {
                let u = topo.edges[k].0;
                let c = e[[k, 0]] + e[[k, 1]];
                agg.row_mut(v).scaled_add(c * inv, &h.row(u));
                edge_mean.row_mut(v).scaled_add(inv, &e.row(k));
            }
        }
        let z = h.dot(&p.w_self) + agg.dot(&p.w_nbr) + &p.b;

        let (out, mask) = if l + 1 == n_layers {
            (z.clone(), None)
        } else {
            let mut out = z.mapv(relu);
            let mask = rng.as_mut().map(|rng| {
                let keep = 1.0 / (1.0 - model.dropout);
                Array2::from_shape_fn(out.dim(), |_| {
                    if rng.gen::<f64>() < model.dropout {
                        0.0
                    } else {
                        keep
                    }
                })
            });
            if let Some(mask) = &mask {
                out *= mask;
            }
            (out, mask)
        };

        let m_src = Array2::from_shape_fn((m, 2), |(k, c)| edge_mean[[topo.edges[k].0, c]]);
        let edge_pre = e.dot(&p.w_e) + m_src.dot(&p.u_e) + &p.b_e;
        let e_next = edge_pre.mapv(relu);

        caches.push(LayerCache {
            x_in: h,
            e_in: e,
            agg,
            z,
            mask,
            edge_mean,
            edge_pre,
        });
        h = out;
        e = e_next;
    }

    Ok((
        LayerState {
            node_reps: h,
            edge_reps: e,
            edges: topo.edges.clone(),
        },
        ForwardCache {
            stamp: model.stamp(),
            edges: topo.edges.clone(),
            n,
            layers: caches,
        },
    ))
}

/// Per-document scores `y . x_i` for the final node representations.
pub fn score(y: &Array1<f64>, state: &LayerState) -> Result<Array1<f64>, GnnError> {
    if y.len() != state.node_reps.ncols() {
        return Err(GnnError::DimMismatch {
            what: "question vector",
            expected: state.node_reps.ncols(),
            found: y.len(),
        });
    }
    Ok(state.node_reps.dot(y))
}

/// Scores keyed by document, for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub question_id: String,
    pub scores: Vec<(String, f64)>,
}
