use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EncoderSpec, HeadVariant, HighwayWidth, ModelConfig};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// How a parameter starts out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    Uniform(f64),
}

/// Name, shape and initializer of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leading name component, e.g. `model_encoder`.
    pub fn block(&self) -> &str {
        block_of(&self.name)
    }
}

pub fn block_of(name: &str) -> &str {
    name.split('/').next().unwrap_or(name)
}

struct Layout {
    specs: Vec<ParamSpec>,
}

impl Layout {
    fn add(&mut self, name: String, shape: &[usize], init: Init) {
        self.specs.push(ParamSpec { name, shape: shape.to_vec(), init });
    }

    fn dense(&mut self, name: &str, rows: usize, cols: usize) {
        self.add(format!("{name}/weight"), &[rows, cols], Init::Glorot { fan_in: rows, fan_out: cols });
    }

    fn bias(&mut self, name: &str, len: usize) {
        self.add(format!("{name}/bias"), &[len], Init::Zeros);
    }

    fn layer_norm(&mut self, name: &str, d: usize) {
        self.add(format!("{name}/ln/gain"), &[d], Init::Ones);
        self.add(format!("{name}/ln/bias"), &[d], Init::Zeros);
    }

    fn encoder_block(&mut self, prefix: &str, spec: EncoderSpec, d: usize) {
        let k = spec.kernel;
        for c in 0..spec.convs {
            let p = format!("{prefix}/conv{c}");
            self.layer_norm(&p, d);
            self.add(format!("{p}/depthwise"), &[k, d], Init::Glorot { fan_in: k, fan_out: k });
            self.add(format!("{p}/pointwise"), &[d, d], Init::Glorot { fan_in: d, fan_out: d });
            self.bias(&p, d);
        }
        let a = format!("{prefix}/attention");
        self.layer_norm(&a, d);
        for w in ["query", "key", "value"] {
            self.dense(&format!("{a}/{w}"), d, d);
        }
        let f = format!("{prefix}/ffn");
        self.layer_norm(&f, d);
        self.dense(&format!("{f}/inner"), d, d);
        self.bias(&format!("{f}/inner"), d);
        self.dense(&format!("{f}/outer"), d, d);
        self.bias(&format!("{f}/outer"), d);
    }

    fn encoder_stack(&mut self, prefix: &str, spec: EncoderSpec, d: usize) {
        for b in 0..spec.blocks {
            self.encoder_block(&format!("{prefix}/block{b}"), spec, d);
        }
    }

    fn highway(&mut self, width: usize, layers: usize) {
        for l in 0..layers {
            for part in ["gate", "transform"] {
                let name = format!("input_embedding/highway{l}/{part}");
                self.dense(&name, width, width);
                self.bias(&name, width);
            }
        }
    }
}

/// Every parameter of the configured model, in a fixed order.
pub fn param_layout(config: &ModelConfig, char_vocab: usize) -> Vec<ParamSpec> {
    let d = config.hidden;
    let e = config.embed_dim();
    let mut l = Layout { specs: Vec::new() };
    l.add("char_embedding/table".into(), &[char_vocab, config.char_dim], Init::Uniform(0.05));
    let (w, ci, co) = (config.char_conv_width, config.char_dim, config.char_conv_out);
    l.add("input_embedding/char_conv/weight".into(), &[w, ci, co], Init::Glorot { fan_in: w * ci, fan_out: w * co });
    l.bias("input_embedding/char_conv", co);
    match config.highway_width {
        HighwayWidth::Hidden => {
            l.dense("input_embedding/projection", e, d);
            l.highway(d, config.highway_layers);
        }
        HighwayWidth::Embed => {
            l.highway(e, config.highway_layers);
            l.dense("input_embedding/projection", e, d);
        }
    }
    l.encoder_stack("embedding_encoder", config.embedding_encoder, d);
    l.dense("context_query_attention/context", d, 1);
    l.dense("context_query_attention/question", d, 1);
    l.add("context_query_attention/product".into(), &[d], Init::Glorot { fan_in: d, fan_out: 1 });
    l.bias("context_query_attention", 1);
    l.dense("model_encoder/input_projection", 4 * d, d);
    l.encoder_stack("model_encoder", config.model_encoder, d);
    l.dense("output/start", 2 * d, 1);
    l.dense("output/end", 2 * d, 1);
    let h = "answerability_head";
    match config.head_variant {
        HeadVariant::None => {}
        HeadVariant::Equant1 => {
            let k = config.head1_kernel;
            let [c1, c2] = config.head1_channels;
            l.add(format!("{h}/conv0/weight"), &[k, k, 1, c1], Init::Glorot { fan_in: k * k, fan_out: k * k * c1 });
            l.bias(&format!("{h}/conv0"), c1);
            l.add(format!("{h}/conv1/weight"), &[k, k, c1, c2], Init::Glorot { fan_in: k * k * c1, fan_out: k * k * c2 });
            l.bias(&format!("{h}/conv1"), c2);
            l.dense(&format!("{h}/output"), c2, 1);
            l.bias(&format!("{h}/output"), 1);
        }
        HeadVariant::Equant2 => {
            let (k, c, len) = (config.head2_kernel, config.head2_channels, config.equant2_pad_length);
            l.encoder_stack(&format!("{h}/encoder"), config.head_encoder, d);
            l.dense(&format!("{h}/reduce"), d, 1);
            l.bias(&format!("{h}/reduce"), 1);
            l.add(format!("{h}/conv0/weight"), &[k, 1, c], Init::Glorot { fan_in: k, fan_out: k * c });
            l.bias(&format!("{h}/conv0"), c);
            l.add(format!("{h}/conv1/weight"), &[k, c, c], Init::Glorot { fan_in: k * c, fan_out: k * c });
            l.bias(&format!("{h}/conv1"), c);
            l.dense(&format!("{h}/output"), len * c, 1);
            l.bias(&format!("{h}/output"), 1);
        }
        HeadVariant::Equant3 => {
            let [w1, w2] = config.head3_widths;
            l.encoder_stack(&format!("{h}/encoder"), config.head_encoder, d);
            for (name, a, b) in [("ffn0", d, w1), ("ffn1", w1, w2), ("ffn2", w2, 1)] {
                l.dense(&format!("{h}/{name}"), a, b);
                l.bias(&format!("{h}/{name}"), b);
            }
        }
    }
    l.specs
}

/// Trainable scalars per block and in total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub blocks: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn block(&self, name: &str) -> usize {
        self.blocks.iter().find(|(b, _)| b == name).map_or(0, |(_, n)| *n)
    }

    /// Everything except the answerability head.
    pub fn trunk(&self) -> usize {
        self.total - self.block("answerability_head")
    }
}

/// Counts trainable parameters without allocating them. Frozen word
/// vectors are not parameters and are never counted.
pub fn count_params(config: &ModelConfig, char_vocab: usize) -> ParamCount {
    let mut blocks: Vec<(String, usize)> = Vec::new();
    for spec in param_layout(config, char_vocab) {
        match blocks.last_mut() {
            Some((b, n)) if b == spec.block() => *n += spec.len(),
            _ => blocks.push((spec.block().to_string(), spec.len())),
        }
    }
    let total = blocks.iter().map(|(_, n)| n).sum();
    ParamCount { blocks, total }
}

/// Named, ordered parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    /// Allocates and initializes every parameter in `layout` from `seed`.
    pub fn init(layout: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self { names: Vec::new(), values: Vec::new(), index: BTreeMap::new() };
        for spec in layout {
            let n = spec.len();
            let data: Vec<T> = match spec.init {
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
                Init::Uniform(a) => (0..n).map(|_| T::lit(rng.random_range(-a..=a))).collect(),
                Init::Glorot { fan_in, fan_out } => {
                    let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                    (0..n).map(|_| T::lit(rng.random_range(-a..=a))).collect()
                }
            };
            store.index.insert(spec.name.clone(), store.names.len());
            store.names.push(spec.name.clone());
            store.values.push(Tensor::new(&spec.shape, data).expect("layout shapes are nonzero"));
        }
        store
    }

    /// Builds a store from explicit tensors, e.g. a loaded checkpoint.
    pub fn from_named(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut store = Self { names: Vec::new(), values: Vec::new(), index: BTreeMap::new() };
        for (name, value) in entries {
            if store.index.insert(name.clone(), store.names.len()).is_some() {
                return Err(Error::Config(format!("duplicate parameter {name}")));
            }
            store.names.push(name);
            store.values.push(value);
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.values[i])
    }

    /// Replaces a tensor of identical shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = self.index_of(name).ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if self.values[i].shape() != value.shape() {
            return Err(Error::shape("set_param", self.values[i].shape(), value.shape()));
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn shapes(&self) -> Vec<&[usize]> {
        self.values.iter().map(Tensor::shape).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}
