//! Model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EQNTCKPT"  u32 version
//! u64 len, JSON header: ModelConfig, TrainConfig, iteration, parameter
//!                       names and shapes, optimizer step count
//! for each parameter in header order: f32 × product(shape)
//! if the header has an optimizer: first moments, then second moments,
//!                                 both in parameter order
//! ```
//!
//! Word vectors are not stored; they come from the cache the model was
//! trained against, whose vocabulary size is recorded for checking.

use std::path::Path;

use equant_core::model::{param_layout, Equant, ModelConfig, ParamStore};
use equant_core::tensor::AdamState;
use equant_core::train::{IntervalMeter, TrainConfig};
use equant_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{put_f32s, put_string, put_u32, read_file, write_atomic, Reader};

const MAGIC: &[u8; 8] = b"EQNTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Optimizer {
    t: u64,
    meter: IntervalMeter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: Option<TrainConfig>,
    iteration: u64,
    word_rows: usize,
    params: Vec<Entry>,
    optimizer: Option<Optimizer>,
}

/// Optimizer moments plus the partially filled log interval, enough to
/// continue a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: AdamState<f32>,
    pub meter: IntervalMeter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    /// Completed training iterations.
    pub iteration: u64,
    /// Rows of the word matrix the parameters were trained with.
    pub word_rows: usize,
    pub params: ParamStore<f32>,
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn of_model(model: &Equant<f32>) -> Self {
        Self {
            model: model.config.clone(),
            train: None,
            iteration: 0,
            word_rows: model.word_vectors.shape()[0],
            params: model.params.clone(),
            state: None,
        }
    }

    /// Reattaches word vectors. The parameter set must be exactly what the
    /// stored config lays out.
    pub fn into_model(self, word_vectors: Tensor<f32>) -> Result<Equant<f32>> {
        if word_vectors.shape().first() != Some(&self.word_rows) {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained with {} word rows, cache has {:?}",
                self.word_rows,
                word_vectors.shape()
            )));
        }
        let char_vocab = self.params.get("char_embedding/table").map_or(0, |t| t.shape()[0]);
        let mut model = Equant::new(self.model, word_vectors, char_vocab, 0)?;
        let layout = param_layout(&model.config, char_vocab);
        let same = layout.len() == self.params.len()
            && layout.iter().zip(self.params.iter()).all(|(s, (n, t))| s.name == n && s.shape == t.shape());
        if !same {
            return Err(Error::Checkpoint("parameters do not match the stored model config".into()));
        }
        model.params = self.params;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.clone(),
            train: self.train.clone(),
            iteration: self.iteration,
            word_rows: self.word_rows,
            params: self.params.iter().map(|(n, t)| Entry { name: n.to_string(), shape: t.shape().to_vec() }).collect(),
            optimizer: self.state.as_ref().map(|s| Optimizer { t: s.adam.t, meter: s.meter.clone() }),
        };
        let json = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_string(&mut out, &json);
        for t in self.params.values() {
            put_f32s(&mut out, t.data());
        }
        if let Some(s) = &self.state {
            for t in s.adam.m.iter().chain(&s.adam.v) {
                put_f32s(&mut out, t.data());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not an equant checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let header: Header =
            serde_json::from_str(&r.string()?).map_err(|e| Error::Checkpoint(format!("checkpoint header: {e}")))?;
        let read_all = |r: &mut Reader<'_>| -> Result<Vec<Tensor<f32>>> {
            header
                .params
                .iter()
                .map(|e| {
                    let n = e.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                    let n = n.ok_or_else(|| Error::Checkpoint(format!("{}: shape overflow", e.name)))?;
                    Ok(Tensor::new(&e.shape, r.f32s(n)?)?)
                })
                .collect()
        };
        let values = read_all(&mut r)?;
        let state = match &header.optimizer {
            Some(o) => {
                let m = read_all(&mut r)?;
                let v = read_all(&mut r)?;
                Some(TrainState { adam: AdamState { m, v, t: o.t }, meter: o.meter.clone() })
            }
            None => None,
        };
        r.finish()?;
        let params = ParamStore::from_named(header.params.iter().map(|e| e.name.clone()).zip(values).collect())?;
        Ok(Self {
            model: header.model,
            train: header.train,
            iteration: header.iteration,
            word_rows: header.word_rows,
            params,
            state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
