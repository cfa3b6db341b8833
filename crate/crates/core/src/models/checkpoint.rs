//! Checkpoint layout:
//!
//! ```text
//! b"PPRMODL1"                 8-byte magic
//! u64 little-endian           header length in bytes
//! header                      UTF-8 JSON (see `Header`)
//! f64 little-endian values    every tensor, concatenated in header order
//! ```
//!
//! Tensor `offset` and `count` in the header are in values, not bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Network, Params, Provenance, SkeletonGraph, TrainedModel};
use crate::autodiff::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PPRMODL1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct GraphEntry {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    classes: Vec<String>,
    majority: usize,
    provenance: Provenance,
    graph: Option<GraphEntry>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(model: &TrainedModel, mut out: W) -> Result<(), ModelError> {
    let mut offset = 0;
    let tensors = model
        .params
        .iter()
        .map(|(name, t)| {
            let entry = TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
                count: t.len(),
            };
            offset += t.len();
            entry
        })
        .collect();
    let header = Header {
        config: model.config.clone(),
        classes: model.classes.clone(),
        majority: model.majority,
        provenance: model.provenance.clone(),
        graph: model.network().map(|n| GraphEntry {
            joint_names: n.graph().joint_names().to_vec(),
            edges: n.graph().edges().to_vec(),
        }),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let io = |e: std::io::Error| corrupt(e.to_string());
    out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    for t in model.params.tensors() {
        for v in t.data() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<TrainedModel, ModelError> {
    let io = |e: std::io::Error| corrupt(e.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| corrupt("header too large"))?;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| corrupt(e.to_string()))?;

    let mut blob = Vec::new();
    input.read_to_end(&mut blob).map_err(io)?;
    if blob.len() % 8 != 0 {
        return Err(corrupt("parameter blob is not a whole number of f64 values"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = Params::new();
    for entry in header.tensors {
        let end = entry.offset.checked_add(entry.count).filter(|&e| e <= values.len());
        let Some(end) = end else {
            return Err(corrupt(format!("tensor {} overruns the blob", entry.name)));
        };
        let tensor = Tensor::new(entry.shape, values[entry.offset..end].to_vec()).map_err(|e| corrupt(e.to_string()))?;
        params.push(entry.name, tensor);
    }
    match header.graph {
        Some(g) => {
            let graph = SkeletonGraph::new(g.joint_names, g.edges)?;
            let network = Network::with_graph(header.config, graph)?;
            TrainedModel::with_network(network, header.classes, header.majority, params, header.provenance)
        }
        None => TrainedModel::new(header.config, header.classes, header.majority, params, header.provenance),
    }
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    write_checkpoint(model, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_checkpoint(std::io::BufReader::new(file))
}
