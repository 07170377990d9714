//! `GRAGGNN1` checkpoints: magic, `u32` header length, JSON header, then every
//! parameter block as little-endian `f64` (per layer: W_self, W_nbr, b, W_e,
//! U_e, b_e; matrices row-major).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcnModel, GnnError, LayerParams, Strategy};
use crate::docgraph::GraphOptions;

const MAGIC: &[u8; 8] = b"GRAGGNN1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dims: Vec<usize>,
    pub layers: usize,
    pub dropout: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub step: u64,
    /// Seed of the hash encoder that produced the training features, if any.
    #[serde(default)]
    pub encoder_seed: Option<u64>,
    /// Graph construction options used for training, if graphs were built.
    #[serde(default)]
    pub graph_options: Option<GraphOptions>,
}

/// Feature provenance recorded next to the parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeatureContext {
    pub encoder_seed: Option<u64>,
    pub graph_options: Option<GraphOptions>,
}

impl CheckpointHeader {
    pub fn for_model(model: &GcnModel, step: u64, ctx: FeatureContext) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dims: model.dims(),
            layers: model.layers().len(),
            dropout: model.dropout,
            strategy: model.strategy,
            seed: model.seed,
            step,
            encoder_seed: ctx.encoder_seed,
            graph_options: ctx.graph_options,
        }
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &GcnModel,
    step: u64,
    ctx: FeatureContext,
) -> Result<(), GnnError> {
    let header = serde_json::to_vec(&CheckpointHeader::for_model(model, step, ctx))
        .expect("header serializes");
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for layer in model.layers() {
        for block in layer.blocks() {
            for v in block {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> GnnError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        GnnError::BadCheckpoint("truncated file".into())
    } else {
        GnnError::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(GcnModel, CheckpointHeader), GnnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(GnnError::BadCheckpoint("wrong magic bytes".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(truncated)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header).map_err(truncated)?;
    let header: CheckpointHeader = serde_json::from_slice(&header)
        .map_err(|e| GnnError::BadCheckpoint(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(GnnError::BadCheckpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.dims.len() != header.layers + 1 {
        return Err(GnnError::BadCheckpoint(format!(
            "{} layers need {} dims, header lists {}",
            header.layers,
            header.layers + 1,
            header.dims.len()
        )));
    }
    let mut layers = Vec::with_capacity(header.layers);
    let mut buf = [0u8; 8];
    for w in header.dims.windows(2) {
        let mut layer = LayerParams::zeros(w[0], w[1]);
        for block in layer.blocks_mut() {
            for v in block.iter_mut() {
                r.read_exact(&mut buf).map_err(truncated)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        layers.push(layer);
    }
    if r.read(&mut buf)? != 0 {
        return Err(GnnError::BadCheckpoint(
            "trailing bytes after parameters".into(),
        ));
    }
    let model = GcnModel::from_layers(layers, header.dropout, header.strategy, header.seed)
        .map_err(|e| GnnError::BadCheckpoint(e.to_string()))?;
    Ok((model, header))
}

pub fn save_checkpoint(
    path: &Path,
    model: &GcnModel,
    step: u64,
    ctx: FeatureContext,
) -> Result<(), GnnError> {
    write_checkpoint(BufWriter::new(File::create(path)?), model, step, ctx)
}

pub fn load_checkpoint(path: &Path) -> Result<(GcnModel, CheckpointHeader), GnnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
