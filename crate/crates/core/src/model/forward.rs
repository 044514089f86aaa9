use alloc::format;
use alloc::vec::Vec;

use super::config::{Head1Input, HeadSource, HeadVariant, ModelConfig};
use super::graph::Graph;
use super::layers::{context_query_attention, encoder_stack, input_embedding};
use super::params::{param_layout, ParamStore};
use crate::corpus::ExampleInput;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Axis, Tensor, Var};

/// An EQuANt network: trainable parameters plus frozen word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Equant<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    /// `[word vocabulary × word_dim]`, never trained.
    pub word_vectors: Tensor<T>,
}

/// Graph handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub start_logits: Var,
    pub end_logits: Var,
    pub p1: Var,
    pub p2: Var,
    pub head_logit: Option<Var>,
    pub p0: Option<Var>,
    pub s: Var,
    pub row_softmax: Var,
}

/// Start/end distributions over the (padded) context and the answerability
/// probability when a head is present.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput<T> {
    pub p1: Vec<T>,
    pub p2: Vec<T>,
    pub p0: Option<T>,
}

impl<T: Real> Equant<T> {
    pub fn new(config: ModelConfig, word_vectors: Tensor<T>, char_vocab: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let (_, dim) = word_vectors.dims2()?;
        if word_vectors.shape().len() != 2 || dim != config.word_dim {
            return Err(Error::Config(format!(
                "word vectors have shape {:?}, expected [_, {}]",
                word_vectors.shape(),
                config.word_dim
            )));
        }
        let params = ParamStore::init(&param_layout(&config, char_vocab), seed);
        Ok(Self { config, params, word_vectors })
    }

    pub fn char_vocab(&self) -> usize {
        self.params.get("char_embedding/table").map_or(0, |t| t.shape()[0])
    }

    pub fn cast<U: Real>(&self) -> Equant<U> {
        Equant {
            config: self.config.clone(),
            params: self.params.cast(),
            word_vectors: self.word_vectors.cast(),
        }
    }

    /// Builds the full network for one example on `g`.
    pub fn forward(&self, g: &mut Graph<'_, T>, input: ExampleInput<'_>) -> Result<ForwardVars> {
        let cfg = &self.config;
        let (c_mask, q_mask) = (input.context.mask, input.question.mask);
        let c = input_embedding(g, &self.word_vectors, input.context, cfg)?;
        let q = input_embedding(g, &self.word_vectors, input.question, cfg)?;
        let c = encoder_stack(g, c, "embedding_encoder", cfg.embedding_encoder, cfg, c_mask)?;
        let q = encoder_stack(g, q, "embedding_encoder", cfg.embedding_encoder, cfg, q_mask)?;
        let att = context_query_attention(g, c, q, c_mask, q_mask)?;
        let fused = g.linear(att.fused, "model_encoder/input_projection")?;
        let fused = g.dropout(fused)?;
        let m0 = encoder_stack(g, fused, "model_encoder", cfg.model_encoder, cfg, c_mask)?;
        let m1 = encoder_stack(g, m0, "model_encoder", cfg.model_encoder, cfg, c_mask)?;
        let m2 = encoder_stack(g, m1, "model_encoder", cfg.model_encoder, cfg, c_mask)?;

        let n = c_mask.len();
        let start = g.tape.concat_cols(&[m0, m1])?;
        let start = g.linear(start, "output/start")?;
        let start_logits = g.tape.reshape(start, &[n])?;
        let end = g.tape.concat_cols(&[m0, m2])?;
        let end = g.linear(end, "output/end")?;
        let end_logits = g.tape.reshape(end, &[n])?;
        let p1 = g.tape.masked_softmax(start_logits, Axis::Cols, c_mask)?;
        let p2 = g.tape.masked_softmax(end_logits, Axis::Cols, c_mask)?;

        let head_logit = match cfg.head_variant {
            HeadVariant::None => None,
            HeadVariant::Equant1 => {
                let map = match cfg.head1_input {
                    Head1Input::RowSoftmax => att.row_softmax,
                    Head1Input::Raw => att.s,
                };
                let map = self.head_input(g, map);
                Some(self.head1(g, map, c_mask, q_mask)?)
            }
            HeadVariant::Equant2 | HeadVariant::Equant3 => {
                let src = match cfg.head_source {
                    HeadSource::M0 => m0,
                    HeadSource::Fused => fused,
                };
                let src = self.head_input(g, src);
                let enc = encoder_stack(g, src, "answerability_head/encoder", cfg.head_encoder, cfg, c_mask)?;
                Some(if cfg.head_variant == HeadVariant::Equant2 {
                    self.head2(g, enc, c_mask)?
                } else {
                    self.head3(g, enc, c_mask)?
                })
            }
        };
        let p0 = head_logit.map(|z| g.tape.sigmoid(z)).transpose()?;
        Ok(ForwardVars { start_logits, end_logits, p1, p2, head_logit, p0, s: att.s, row_softmax: att.row_softmax })
    }

    fn head_input(&self, g: &mut Graph<'_, T>, x: Var) -> Var {
        if self.config.stop_head_gradient {
            g.tape.detach(x)
        } else {
            x
        }
    }

    /// Two 2-D convolutions over the attention map, masked mean pool, linear.
    fn head1(&self, g: &mut Graph<'_, T>, map: Var, c_mask: &[bool], q_mask: &[bool]) -> Result<Var> {
        let (n, m) = (c_mask.len(), q_mask.len());
        let [c1, c2] = self.config.head1_channels;
        let mask: Vec<bool> = c_mask.iter().flat_map(|&ci| q_mask.iter().map(move |&qj| ci && qj)).collect();
        let x = g.tape.reshape(map, &[n * m, 1])?;
        let x = g.tape.mask_rows(x, &mask)?;
        let mut x = g.tape.reshape(x, &[n, m, 1])?;
        for (layer, ch) in [(0, c1), (1, c2)] {
            let name = format!("answerability_head/conv{layer}");
            let w = g.param(&format!("{name}/weight"))?;
            let y = g.tape.conv2d(x, w)?;
            let y = g.tape.reshape(y, &[n * m, ch])?;
            let b = g.param(&format!("{name}/bias"))?;
            let y = g.tape.add_bias(y, b)?;
            let y = g.tape.relu(y)?;
            let y = g.tape.mask_rows(y, &mask)?;
            x = if layer == 0 { g.tape.reshape(y, &[n, m, ch])? } else { y };
        }
        let pooled = g.tape.masked_mean_rows(x, &mask)?;
        let z = g.affine(pooled, "answerability_head/output")?;
        g.tape.reshape(z, &[1])
    }

    /// Per-position score, zero-padded to a fixed length, two 1-D
    /// convolutions and a dense layer over the flattened result.
    fn head2(&self, g: &mut Graph<'_, T>, enc: Var, c_mask: &[bool]) -> Result<Var> {
        let n = c_mask.len();
        let (len, ch) = (self.config.equant2_pad_length, self.config.head2_channels);
        if n > len {
            return Err(Error::Contract(format!("context length {n} exceeds equant2_pad_length {len}")));
        }
        let x = g.affine(enc, "answerability_head/reduce")?;
        let x = g.tape.relu(x)?;
        let x = g.tape.mask_rows(x, c_mask)?;
        let mut x = g.tape.pad_rows(x, len)?;
        for layer in 0..2 {
            let name = format!("answerability_head/conv{layer}");
            let w = g.param(&format!("{name}/weight"))?;
            let y = g.tape.conv1d(x, w)?;
            let b = g.param(&format!("{name}/bias"))?;
            let y = g.tape.add_bias(y, b)?;
            x = g.tape.relu(y)?;
        }
        let flat = g.tape.reshape(x, &[1, len * ch])?;
        let z = g.affine(flat, "answerability_head/output")?;
        g.tape.reshape(z, &[1])
    }

    /// Feedforward chain per position, then a masked mean of the scores.
    fn head3(&self, g: &mut Graph<'_, T>, enc: Var, c_mask: &[bool]) -> Result<Var> {
        let x = g.affine(enc, "answerability_head/ffn0")?;
        let x = g.tape.relu(x)?;
        let x = g.affine(x, "answerability_head/ffn1")?;
        let x = g.tape.relu(x)?;
        let x = g.affine(x, "answerability_head/ffn2")?;
        let z = g.tape.masked_mean_rows(x, c_mask)?;
        g.tape.reshape(z, &[1])
    }

    /// Deterministic forward pass without dropout.
    pub fn infer(&self, input: ExampleInput<'_>) -> Result<ModelOutput<T>> {
        let mut g = Graph::new(&self.params);
        let v = self.forward(&mut g, input)?;
        Ok(ModelOutput {
            p1: g.tape.value(v.p1).data().to_vec(),
            p2: g.tape.value(v.p2).data().to_vec(),
            p0: v.p0.map(|p| g.tape.value(p).data()[0]),
        })
    }

    /// Raw similarity matrix and its row softmax, both `[n × m]`.
    pub fn attention_maps(&self, input: ExampleInput<'_>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new(&self.params);
        let v = self.forward(&mut g, input)?;
        Ok((g.tape.value(v.s).clone(), g.tape.value(v.row_softmax).clone()))
    }
}
