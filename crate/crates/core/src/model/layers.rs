use alloc::format;
use alloc::vec::Vec;

use super::config::{EncoderSpec, HighwayWidth, ModelConfig};
use super::graph::Graph;
use crate::corpus::SeqInput;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{self_attention, depthwise_separable_conv1d, Axis, Tensor, Var};

/// Sinusoidal encoding with interleaved channels:
/// `PE[p][2i] = sin(p / 10000^(2i/d))`, `PE[p][2i+1] = cos(…)`.
pub fn positional_encoding<T: Real>(len: usize, d: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(len * d);
    for pos in 0..len {
        for c in 0..d {
            let i = (c / 2) as f64;
            let angle = pos as f64 / libm::pow(10000.0, 2.0 * i / d as f64);
            data.push(T::lit(if c % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) }));
        }
    }
    Tensor::new(&[len, d], data).expect("nonzero encoding shape")
}

/// One QANet encoder block on `x: [len × d]`.
pub fn encoder_block<T: Real>(
    g: &mut Graph<'_, T>,
    x: Var,
    prefix: &str,
    spec: EncoderSpec,
    config: &ModelConfig,
    mask: &[bool],
) -> Result<Var> {
    let (len, d) = g.tape.value(x).dims2()?;
    let eps = config.layer_norm_eps;
    let pe = g.constant(positional_encoding(len, d));
    let mut x = g.tape.add(x, pe)?;
    for c in 0..spec.convs {
        let p = format!("{prefix}/conv{c}");
        let y = g.layer_norm(x, &p, eps)?;
        let y = g.dropout(y)?;
        let depth = g.param(&format!("{p}/depthwise"))?;
        let point = g.param(&format!("{p}/pointwise"))?;
        let y = depthwise_separable_conv1d(&mut g.tape, y, depth, point, mask)?;
        let b = g.param(&format!("{p}/bias"))?;
        let y = g.tape.add_bias(y, b)?;
        let y = g.tape.relu(y)?;
        x = g.tape.add(x, y)?;
    }
    let a = format!("{prefix}/attention");
    let y = g.layer_norm(x, &a, eps)?;
    let y = g.dropout(y)?;
    let wq = g.param(&format!("{a}/query/weight"))?;
    let wk = g.param(&format!("{a}/key/weight"))?;
    let wv = g.param(&format!("{a}/value/weight"))?;
    let y = self_attention(&mut g.tape, y, wq, wk, wv, mask, config.attention_heads)?;
    x = g.tape.add(x, y)?;
    let f = format!("{prefix}/ffn");
    let y = g.layer_norm(x, &f, eps)?;
    let y = g.dropout(y)?;
    let y = g.affine(y, &format!("{f}/inner"))?;
    let y = g.tape.relu(y)?;
    let y = g.affine(y, &format!("{f}/outer"))?;
    g.tape.add(x, y)
}

pub fn encoder_stack<T: Real>(
    g: &mut Graph<'_, T>,
    mut x: Var,
    prefix: &str,
    spec: EncoderSpec,
    config: &ModelConfig,
    mask: &[bool],
) -> Result<Var> {
    for b in 0..spec.blocks {
        x = encoder_block(g, x, &format!("{prefix}/block{b}"), spec, config, mask)?;
    }
    Ok(x)
}

fn highway<T: Real>(g: &mut Graph<'_, T>, mut x: Var, layers: usize) -> Result<Var> {
    for l in 0..layers {
        let gate = g.affine(x, &format!("input_embedding/highway{l}/gate"))?;
        let gate = g.tape.sigmoid(gate)?;
        let t = g.affine(x, &format!("input_embedding/highway{l}/transform"))?;
        let t = g.tape.relu(t)?;
        let t = g.dropout(t)?;
        // g⊙t + (1−g)⊙x = x + g⊙(t − x)
        let delta = g.tape.sub(t, x)?;
        let gated = g.tape.mul(gate, delta)?;
        x = g.tape.add(x, gated)?;
    }
    Ok(x)
}

/// Frozen word vectors plus the character CNN, projected to the hidden width.
pub fn input_embedding<T: Real>(
    g: &mut Graph<'_, T>,
    word_vectors: &Tensor<T>,
    seq: SeqInput<'_>,
    config: &ModelConfig,
) -> Result<Var> {
    let len = seq.words.len();
    let (vocab, word_dim) = word_vectors.dims2()?;
    let mut rows = Vec::with_capacity(len * word_dim);
    for &id in seq.words {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::Lookup { index: id, rows: vocab });
        }
        rows.extend_from_slice(&word_vectors.data()[id * word_dim..(id + 1) * word_dim]);
    }
    let words = g.constant(Tensor::new(&[len, word_dim], rows)?);
    let words = g.dropout(words)?;

    let wl = seq.word_len;
    let ids: Vec<usize> = seq.chars.iter().map(|&c| c as usize).collect();
    let real: Vec<bool> = seq.chars.iter().map(|&c| c != 0).collect();
    let table = g.param("char_embedding/table")?;
    let chars = g.tape.gather(table, &ids)?;
    let chars = g.tape.mask_rows(chars, &real)?;
    let chars = g.dropout(chars)?;
    let chars = g.tape.reshape(chars, &[len, wl, config.char_dim])?;
    let kernel = g.param("input_embedding/char_conv/weight")?;
    let chars = g.tape.conv1d(chars, kernel)?;
    let bias = g.param("input_embedding/char_conv/bias")?;
    let chars = g.tape.add_bias(chars, bias)?;
    let chars = g.tape.relu(chars)?;
    let chars = g.tape.masked_max(chars, &real)?;

    let x = g.tape.concat_cols(&[words, chars])?;
    match config.highway_width {
        HighwayWidth::Hidden => {
            let x = g.linear(x, "input_embedding/projection")?;
            highway(g, x, config.highway_layers)
        }
        HighwayWidth::Embed => {
            let x = highway(g, x, config.highway_layers)?;
            g.linear(x, "input_embedding/projection")
        }
    }
}

/// Similarity `S[i][j] = w·[c_i; q_j; c_i⊙q_j] + b`, shape `[n × m]`.
pub fn trilinear<T: Real>(g: &mut Graph<'_, T>, c: Var, q: Var) -> Result<Var> {
    let sc = g.linear(c, "context_query_attention/context")?;
    let sq = g.linear(q, "context_query_attention/question")?;
    let w = g.param("context_query_attention/product")?;
    let cw = g.tape.mul_bias(c, w)?;
    let qt = g.tape.transpose(q)?;
    let s = g.tape.matmul(cw, qt)?;
    let s = g.tape.add_row_col(s, sc, sq)?;
    let b = g.param("context_query_attention/bias")?;
    g.tape.add_scalar(s, b)
}

/// Outputs of context-query attention.
pub struct Attention {
    pub s: Var,
    pub row_softmax: Var,
    /// `[c; a; c⊙a; c⊙b]`, `[n × 4d]`.
    pub fused: Var,
}

pub fn context_query_attention<T: Real>(
    g: &mut Graph<'_, T>,
    c: Var,
    q: Var,
    c_mask: &[bool],
    q_mask: &[bool],
) -> Result<Attention> {
    let s = trilinear(g, c, q)?;
    let (n, m) = (c_mask.len(), q_mask.len());
    let row_mask: Vec<bool> = (0..n).flat_map(|_| q_mask.iter().copied()).collect();
    let col_mask: Vec<bool> = c_mask.iter().flat_map(|&ci| core::iter::repeat_n(ci, m)).collect();
    let row_softmax = g.tape.masked_softmax(s, Axis::Cols, &row_mask)?;
    let col_softmax = g.tape.masked_softmax(s, Axis::Rows, &col_mask)?;
    let a = g.tape.matmul(row_softmax, q)?;
    let col_t = g.tape.transpose(col_softmax)?;
    let qc = g.tape.matmul(col_t, c)?;
    let b = g.tape.matmul(row_softmax, qc)?;
    let ca = g.tape.mul(c, a)?;
    let cb = g.tape.mul(c, b)?;
    let fused = g.tape.concat_cols(&[c, a, ca, cb])?;
    Ok(Attention { s, row_softmax, fused })
}
