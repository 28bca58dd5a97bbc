//! Single-file model checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8     magic "DECICKPT"
//! bytes 8..12    u32 format version (1)
//! bytes 12..16   u32 header length H
//! bytes 16..16+H UTF-8 JSON header
//! remainder      f64 tensor data, row-major, in header order
//! ```
//!
//! The header holds the variable specs, the model config, the imputer width
//! (if any) and a tensor directory of `{name, rows, cols, offset}` where
//! `offset` counts f64 values from the start of the data block. Tensors are
//! the model parameters, the posterior logits `graph.gamma` / `graph.theta`
//! and, for models trained on missing data, the `imputer.*` parameters.

use std::io::{Read, Write};
use std::path::Path;

use deci_numerics::{ParamStore, RngStream};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::VariableSpec;
use crate::error::{DeciError, Result};
use crate::graph::VariationalGraphPosterior;
use crate::sem::model::{DeciModel, ModelConfig};
use crate::training::imputer::ImputationNetwork;

pub const MAGIC: &[u8; 8] = b"DECICKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    specs: Vec<VariableSpec>,
    model: ModelConfig,
    imputer_hidden: Option<usize>,
    tensors: Vec<TensorEntry>,
}

/// A trained model with its graph posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DeciModel,
    pub posterior: VariationalGraphPosterior,
    pub imputer: Option<ImputationNetwork>,
}

fn stores(c: &Checkpoint) -> Vec<&ParamStore> {
    let mut s = vec![&c.model.params, &c.posterior.params];
    if let Some(imp) = &c.imputer {
        s.push(&imp.params);
    }
    s
}

fn corrupt(msg: impl Into<String>) -> DeciError {
    DeciError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.posterior.num_nodes() != self.model.specs.len() {
            return Err(DeciError::ShapeMismatch("posterior and model node counts differ".into()));
        }
        let mut tensors = Vec::new();
        let mut data = Vec::new();
        let mut offset = 0;
        for store in stores(self) {
            for p in store.iter() {
                let (rows, cols) = p.value.dim();
                tensors.push(TensorEntry {
                    name: p.name.clone(),
                    rows,
                    cols,
                    offset,
                });
                offset += rows * cols;
                for v in p.value.iter() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            specs: self.model.specs.clone(),
            model: self.model.config.clone(),
            imputer_hidden: self.imputer.as_ref().map(|i| i.hidden_dim()),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a DECI checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let json = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
        let data = &bytes[16 + hlen..];
        if data.len() % 8 != 0 {
            return Err(corrupt("data block is not a whole number of f64 values"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = |name: &str, shape: (usize, usize)| -> Result<Array2<f64>> {
            let e = header
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
            if (e.rows, e.cols) != shape {
                return Err(corrupt(format!(
                    "tensor {name} is {}x{}, expected {}x{}",
                    e.rows, e.cols, shape.0, shape.1
                )));
            }
            let slice = values
                .get(e.offset..e.offset + e.rows * e.cols)
                .ok_or_else(|| corrupt(format!("tensor {name} runs past the data block")))?;
            Ok(Array2::from_shape_vec(shape, slice.to_vec()).unwrap())
        };
        let fill = |store: &mut ParamStore| -> Result<()> {
            for p in store.iter_mut() {
                p.value = tensor(&p.name, p.value.dim())?;
            }
            Ok(())
        };
        // Parameter values are overwritten, so the construction seed is irrelevant.
        let mut rng = RngStream::new(0);
        let d = header.specs.len();
        let mut model = DeciModel::new(header.specs.clone(), header.model.clone(), &mut rng)?;
        fill(&mut model.params)?;
        let mut posterior = VariationalGraphPosterior::new(d);
        fill(&mut posterior.params)?;
        let imputer = match header.imputer_hidden {
            Some(h) => {
                let mut imp = ImputationNetwork::new(d, h, &mut rng);
                fill(&mut imp.params)?;
                Some(imp)
            }
            None => None,
        };
        let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
        if expected != values.len() {
            return Err(corrupt("data block length does not match tensor directory"));
        }
        Ok(Self {
            model,
            posterior,
            imputer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
