//! Preprocessed corpus cache.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EQNTCACH"  u32 version
//! u64 len, JSON header: vocabulary, datasets (examples + index arrays),
//!                       char vectors, word-matrix shape
//! f32 × rows·cols word matrix, row-major
//! ```
//!
//! The header is serialized from ordered structures only, so the same
//! inputs always produce the same bytes.

use std::collections::BTreeSet;
use std::path::Path;

use equant_core::corpus::{EncodedExample, QAExample, Vocabulary};
use equant_core::model::{Init, ParamSpec, ParamStore};
use equant_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glove::{char_rows, word_matrix, Embeddings};
use crate::io::{put_f32s, put_string, put_u32, put_u64, read_file, write_atomic, Reader};

const MAGIC: &[u8; 8] = b"EQNTCACH";
pub const CACHE_VERSION: u32 = 1;

/// Scale of the seeded vectors used when no embedding file is given.
const FALLBACK_SCALE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<QAExample>,
    pub encoded: Vec<EncodedExample>,
}

impl Dataset {
    pub fn ids(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.id.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    max_word_len: usize,
    word_dim: usize,
    word_rows: usize,
    vocabulary: Vocabulary,
    char_vectors: Vec<(u32, Vec<f32>)>,
    datasets: Vec<Dataset>,
}

/// Vocabulary, encoded datasets and the frozen word matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Cache {
    pub max_word_len: usize,
    pub vocabulary: Vocabulary,
    pub datasets: Vec<Dataset>,
    /// `[words × word_dim]`.
    pub word_vectors: Tensor<f32>,
    /// Char-table rows overridden by file vectors.
    pub char_vectors: Vec<(u32, Vec<f32>)>,
}

/// Inputs to [`Cache::build`].
pub struct BuildInputs<'a> {
    pub datasets: Vec<(String, Vec<QAExample>)>,
    pub words: Option<&'a Embeddings>,
    pub chars: Option<&'a Embeddings>,
    pub word_dim: usize,
    pub max_word_len: usize,
    pub seed: u64,
}

impl Cache {
    /// Builds one vocabulary over all datasets. With word vectors, only
    /// words that have one enter the vocabulary; without, every word does
    /// and gets a seeded uniform vector.
    pub fn build(inputs: BuildInputs<'_>) -> Result<Self> {
        let all = inputs.datasets.iter().flat_map(|(_, exs)| exs);
        let (vocabulary, word_vectors) = match inputs.words {
            Some(emb) => {
                if emb.dim != inputs.word_dim {
                    return Err(Error::Config(format!(
                        "embeddings have {} components, model expects {}",
                        emb.dim, inputs.word_dim
                    )));
                }
                let vocab = Vocabulary::build(all, |w| emb.contains(w));
                let m = word_matrix(&vocab, emb);
                (vocab, m)
            }
            None => {
                let vocab = Vocabulary::build(all, |_| true);
                let m = seeded_matrix(vocab.word_count(), inputs.word_dim, inputs.seed);
                (vocab, m)
            }
        };
        let char_vectors = inputs.chars.map(|c| char_rows(&vocabulary, c)).unwrap_or_default();
        let mut names = BTreeSet::new();
        let mut datasets = Vec::new();
        for (name, examples) in inputs.datasets {
            if !names.insert(name.clone()) {
                return Err(Error::Config(format!("dataset `{name}` given twice")));
            }
            let encoded = examples.iter().map(|e| vocabulary.encode(e, inputs.max_word_len)).collect();
            datasets.push(Dataset { name, examples, encoded });
        }
        Ok(Self { max_word_len: inputs.max_word_len, vocabulary, datasets, word_vectors, char_vectors })
    }

    pub fn dataset(&self, name: &str) -> Result<&Dataset> {
        self.datasets.iter().find(|d| d.name == name).ok_or_else(|| {
            let have: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
            Error::Config(format!("cache has no dataset `{name}` (available: {})", have.join(", ")))
        })
    }

    /// Encodes examples that were not part of preprocessing.
    pub fn encode_extra(&self, name: &str, examples: Vec<QAExample>) -> Dataset {
        let encoded = examples.iter().map(|e| self.vocabulary.encode(e, self.max_word_len)).collect();
        Dataset { name: name.to_string(), examples, encoded }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (rows, dim) = self.word_vectors.dims2()?;
        let header = Header {
            max_word_len: self.max_word_len,
            word_dim: dim,
            word_rows: rows,
            vocabulary: self.vocabulary.clone(),
            char_vectors: self.char_vectors.clone(),
            datasets: self.datasets.clone(),
        };
        let json = serde_json::to_string(&header).map_err(|e| Error::Config(format!("cache header: {e}")))?;
        let mut out = Vec::with_capacity(json.len() + rows * dim * 4 + 32);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CACHE_VERSION);
        put_string(&mut out, &json);
        put_u64(&mut out, (rows * dim) as u64);
        put_f32s(&mut out, self.word_vectors.data());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "cache");
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not an equant cache file".into()));
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(Error::Checkpoint(format!("cache version {version}, expected {CACHE_VERSION}")));
        }
        let header: Header = serde_json::from_str(&r.string()?)
            .map_err(|e| Error::Checkpoint(format!("cache header: {e}")))?;
        let n = r.u64()? as usize;
        if n != header.word_rows * header.word_dim || header.word_rows != header.vocabulary.word_count() {
            return Err(Error::Checkpoint("cache word matrix does not match its vocabulary".into()));
        }
        let data = r.f32s(n)?;
        r.finish()?;
        Ok(Self {
            max_word_len: header.max_word_len,
            vocabulary: header.vocabulary,
            datasets: header.datasets,
            word_vectors: Tensor::new(&[header.word_rows, header.word_dim], data)?,
            char_vectors: header.char_vectors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn seeded_matrix(rows: usize, dim: usize, seed: u64) -> Tensor<f32> {
    let spec = ParamSpec { name: "words".into(), shape: vec![rows, dim], init: Init::Uniform(FALLBACK_SCALE) };
    let mut m = ParamStore::<f32>::init(&[spec], seed).values()[0].clone();
    m.data_mut()[..2 * dim].fill(0.0);
    m
}
