//! Edge-weighted GCN reranker.
//!
//! Each layer updates node representations with
//! `x_v' = g(x_v W_self + agg_v W_nbr + b)` where `agg_v` is the mean over
//! neighbors `u` of `(e_uv[0] + e_uv[1]) * x_u`, and `g` is ReLU on every layer
//! but the last. Edge features stay two-dimensional and are updated with
//! `e_uv' = ReLU(e_uv W_e + m_u U_e + b_e)`, `m_u` being the mean feature of the
//! edges arriving at `u`. Documents are scored by `y . x_v` with `y` the
//! question vector.
//!
//! Gradients are written out by hand in [`backward`]; the finite-difference
//! tests in this module are the reference for them.

mod backward;
mod checkpoint;
mod forward;
mod loss;
mod optim;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::FeatureMode;

pub use backward::backward;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader,
    FeatureContext,
};
pub use forward::{
    forward, message, score, ForwardCache, LayerState, Mode, QuestionInput, ScoreVector, Topology,
};
pub use loss::{ce_loss, pairwise_ranking_loss, ranking_loss, ranking_pairs, LossKind};
pub use optim::{lr_at, AdamW};
pub use train::{
    evaluate, question_loss, score_questions, train, LogRecord, TrainConfig, TrainLog,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("cached intermediates do not belong to this model and graph")]
    StaleCache,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("no training question has a positive document")]
    NoPositivesInDataset,
    #[error("document {0:?} has no embedding")]
    MissingEmbedding(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reranker variants. They differ in whether messages are passed, which
/// features the documents carry, and which loss trains them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "gcn")]
    Gcn,
    #[serde(rename = "g-rag")]
    GRag,
    #[serde(rename = "g-rag-rl")]
    GRagRl,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mlp => "mlp",
            Strategy::Gcn => "gcn",
            Strategy::GRag => "g-rag",
            Strategy::GRagRl => "g-rag-rl",
        }
    }

    pub fn message_passing(self) -> bool {
        !matches!(self, Strategy::Mlp)
    }

    pub fn feature_mode(self) -> FeatureMode {
        match self {
            Strategy::Mlp | Strategy::Gcn => FeatureMode::Baseline,
            Strategy::GRag | Strategy::GRagRl => FeatureMode::AmrAugmented,
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Strategy::GRagRl => LossKind::PairwiseRanking,
            _ => LossKind::CrossEntropy,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Strategy::Mlp),
            "gcn" => Ok(Strategy::Gcn),
            "g-rag" => Ok(Strategy::GRag),
            "g-rag-rl" => Ok(Strategy::GRagRl),
            other => Err(format!(
                "unknown strategy {other:?} (expected mlp, gcn, g-rag or g-rag-rl)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of one layer. Matrices act on row vectors: `x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_self: Array2<f64>,
    pub w_nbr: Array2<f64>,
    pub b: Array1<f64>,
    pub w_e: Array2<f64>,
    pub u_e: Array2<f64>,
    pub b_e: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w_self: Array2::zeros((d_in, d_out)),
            w_nbr: Array2::zeros((d_in, d_out)),
            b: Array1::zeros(d_out),
            w_e: Array2::zeros((2, 2)),
            u_e: Array2::zeros((2, 2)),
            b_e: Array1::zeros(2),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w_self.ncols()
    }

    /// Parameter blocks in checkpoint order.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.w_self.as_slice().expect("standard layout"),
            self.w_nbr.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.w_e.as_slice().expect("standard layout"),
            self.u_e.as_slice().expect("standard layout"),
            self.b_e.as_slice().expect("standard layout"),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w_self.as_slice_mut().expect("standard layout"),
            self.w_nbr.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_e.as_slice_mut().expect("standard layout"),
            self.u_e.as_slice_mut().expect("standard layout"),
            self.b_e.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

/// Per-layer parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(model: &GcnModel) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerParams::zeros(l.d_in(), l.d_out()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.blocks_mut().into_iter().zip(b.blocks()) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            for block in l.blocks_mut() {
                block.iter_mut().for_each(|v| *v *= k);
            }
        }
    }

    /// Every entry, layer by layer in checkpoint order.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| {
                l.blocks()
                    .into_iter()
                    .flatten()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct GcnModel {
    layers: Vec<LayerParams>,
    pub dropout: f64,
    pub strategy: Strategy,
    pub seed: u64,
    /// Changes whenever parameters may have changed; forward caches record it.
    stamp: u64,
}

impl PartialEq for GcnModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.dropout == other.dropout
            && self.strategy == other.strategy
            && self.seed == other.seed
    }
}

impl GcnModel {
    /// Seeded uniform init in `±sqrt(6 / (d_in + d_out))`, zero biases.
    /// `dims` lists layer widths, e.g. `[d, h, d]` for two layers.
    pub fn new(
        dims: &[usize],
        dropout: f64,
        strategy: Strategy,
        seed: u64,
    ) -> Result<Self, GnnError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(GnnError::InvalidConfig(format!(
                "layer dims must have at least two positive entries, got {dims:?}"
            )));
        }
        if dims[0] != dims[dims.len() - 1] {
            return Err(GnnError::DimMismatch {
                what: "output width (must equal input width)",
                expected: dims[0],
                found: dims[dims.len() - 1],
            });
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(GnnError::InvalidConfig(format!(
                "dropout must be in [0, 1), got {dropout}"
            )));
        }
        let mut rng = crate::rng::stream(seed, "gnn-init", 0);
        let mut uniform = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
        };
        let layers = dims
            .windows(2)
            .map(|w| LayerParams {
                w_self: uniform(w[0], w[1]),
                w_nbr: uniform(w[0], w[1]),
                b: Array1::zeros(w[1]),
                w_e: uniform(2, 2),
                u_e: uniform(2, 2),
                b_e: Array1::zeros(2),
            })
            .collect();
        Ok(Self {
            layers,
            dropout,
            strategy,
            seed,
            stamp: fresh_stamp(),
        })
    }

    /// Builds a model from explicit parameters.
    pub fn from_layers(
        layers: Vec<LayerParams>,
        dropout: f64,
        strategy: Strategy,
        seed: u64,
    ) -> Result<Self, GnnError> {
        if layers.is_empty() {
            return Err(GnnError::InvalidConfig(
                "model needs at least one layer".into(),
            ));
        }
        for w in layers.windows(2) {
            if w[0].d_out() != w[1].d_in() {
                return Err(GnnError::DimMismatch {
                    what: "layer chain",
                    expected: w[0].d_out(),
                    found: w[1].d_in(),
                });
            }
        }
        for l in &layers {
            let shapes_ok = l.w_nbr.dim() == l.w_self.dim()
                && l.b.len() == l.d_out()
                && l.w_e.dim() == (2, 2)
                && l.u_e.dim() == (2, 2)
                && l.b_e.len() == 2;
            if !shapes_ok {
                return Err(GnnError::InvalidConfig(
                    "inconsistent layer block shapes".into(),
                ));
            }
            if l.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
                return Err(GnnError::InvalidConfig("non-finite parameter".into()));
            }
        }
        let (first, last) = (layers[0].d_in(), layers[layers.len() - 1].d_out());
        if first != last {
            return Err(GnnError::DimMismatch {
                what: "output width (must equal input width)",
                expected: first,
                found: last,
            });
        }
        Ok(Self {
            layers,
            dropout,
            strategy,
            seed,
            stamp: fresh_stamp(),
        })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable parameter access; invalidates earlier forward caches.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        self.stamp = fresh_stamp();
        &mut self.layers
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].d_in()];
        dims.extend(self.layers.iter().map(LayerParams::d_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }
}
