//! Wengert-list reverse-mode autodiff.
//!
//! Every primitive appends a node holding its forward value and enough
//! saved state to replay its adjoint. [`Tape::backward`] walks the list once
//! in reverse. A tape is single-use: a second `backward` is rejected, and
//! gradients are never accumulated across tapes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, Conv2dShape};
use super::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Softmax direction for 2-D inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Normalize each column (down the rows).
    Rows,
    /// Normalize each row (across the columns).
    Cols,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    MulBias(Var, Var),
    AddScalar(Var, Var),
    AddRowCol { x: Var, col: Var, row: Var },
    Scale(Var, T),
    MulConst(Var, Vec<T>),
    Relu(Var),
    Sigmoid(Var),
    Softmax { x: Var, axis: Axis },
    LogSoftmax { x: Var, mask: Vec<bool> },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    DepthwiseConv1d { x: Var, kernel: Var },
    Conv1d { x: Var, kernel: Var },
    Conv2d { x: Var, kernel: Var, shape: Conv2dShape },
    MaskRows { x: Var, mask: Vec<bool> },
    MaskedMax { x: Var, argmax: Vec<Option<usize>> },
    MaskedMean { x: Var, mask: Vec<bool>, count: usize },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    PadRows(Var),
    Gather { table: Var, ids: Vec<usize> },
    Reshape(Var),
    Sum(Var),
    Pick { x: Var, index: usize },
    BceWithLogit { z: Var, target: T },
    Detach,
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Registers an input. `requires_grad` leaves receive a gradient on
    /// [`backward`](Self::backward).
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes[v.0].value.dims2()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn last_dim(&self, v: Var) -> usize {
        *self.shape(v).last().expect("tensors have rank >= 1")
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims2(a)?;
        let (k2, m) = self.dims2(b)?;
        if self.shape(a).len() != 2 || self.shape(b).len() != 2 || k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = kernels::matmul(self.data(a), self.data(b), n, k, m);
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return Err(Error::shape("transpose", self.shape(x), &[0, 0]));
        }
        let (r, c) = self.dims2(x)?;
        let out = kernels::transpose(self.data(x), r, c);
        let ng = self.ng(&[x]);
        Ok(self.push(Tensor::new(&[c, r], out)?, Op::Transpose(x), ng))
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let out: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a), out)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(value, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn broadcast_last(&mut self, op_name: &'static str, x: Var, b: Var, mul: bool) -> Result<Var> {
        let d = self.last_dim(x);
        if self.value(b).len() != d {
            return Err(Error::shape(op_name, self.shape(x), self.shape(b)));
        }
        let bias = self.data(b);
        let out: Vec<T> = self
            .data(x)
            .chunks(d)
            .flat_map(|row| {
                row.iter()
                    .zip(bias)
                    .map(move |(&v, &w)| if mul { v * w } else { v + w })
            })
            .collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x, b]);
        let op = if mul { Op::MulBias(x, b) } else { Op::AddBias(x, b) };
        Ok(self.push(value, op, ng))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.broadcast_last("add_bias", x, bias, false)
    }

    /// Multiplies by a vector along the last axis.
    pub fn mul_bias(&mut self, x: Var, w: Var) -> Result<Var> {
        self.broadcast_last("mul_bias", x, w, true)
    }

    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("add_scalar", self.shape(x), self.shape(s)));
        }
        let sv = self.data(s)[0];
        let out = self.data(x).iter().map(|&v| v + sv).collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x, s]);
        Ok(self.push(value, Op::AddScalar(x, s), ng))
    }

    /// `out[i][j] = x[i][j] + col[i] + row[j]`
    pub fn add_row_col(&mut self, x: Var, col: Var, row: Var) -> Result<Var> {
        let (n, m) = self.dims2(x)?;
        if self.value(col).len() != n || self.value(row).len() != m {
            return Err(Error::shape("add_row_col", self.shape(x), &[self.value(col).len(), self.value(row).len()]));
        }
        let (xd, cd, rd) = (self.data(x), self.data(col), self.data(row));
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(xd[i * m + j] + cd[i] + rd[j]);
            }
        }
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x, col, row]);
        Ok(self.push(value, Op::AddRowCol { x, col, row }, ng))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v * c).collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::Scale(x, c), ng))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, x: Var, factors: Vec<T>) -> Result<Var> {
        if factors.len() != self.value(x).len() {
            return Err(Error::shape("mul_const", self.shape(x), &[factors.len()]));
        }
        let out = self.data(x).iter().zip(&factors).map(|(&v, &f)| v * f).collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::MulConst(x, factors), ng))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| v.max(T::zero())).collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::Relu(x), ng))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.data(x).iter().map(|&v| kernels::sigmoid(v)).collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::Sigmoid(x), ng))
    }

    /// Stops gradient flow: the result is a constant copy of `x`.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.push(value, Op::Detach, false)
    }

    // ---- normalization --------------------------------------------------

    /// Masked softmax of a 1-D or 2-D tensor. `mask` has the shape of `x`;
    /// masked entries come out exactly zero. A lane with no unmasked entry
    /// is a [`Error::DegenerateSlice`].
    pub fn masked_softmax(&mut self, x: Var, axis: Axis, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.dims2(x)?;
        if mask.len() != r * c {
            return Err(Error::shape("masked_softmax", self.shape(x), &[mask.len()]));
        }
        let mut out = vec![T::zero(); r * c];
        for (lane, off, stride, len) in kernels::lanes(r, c, axis == Axis::Cols) {
            if !kernels::softmax_lane(self.data(x), mask, &mut out, off, stride, len) {
                return Err(Error::DegenerateSlice { index: lane });
            }
        }
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::Softmax { x, axis }, ng))
    }

    /// Masked log-softmax over all entries of `x`. Masked entries are
    /// reported as 0 and carry no gradient.
    pub fn masked_log_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let xd = self.data(x);
        if mask.len() != xd.len() {
            return Err(Error::shape("masked_log_softmax", self.shape(x), &[mask.len()]));
        }
        let max = xd
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() && !mask.iter().any(|&m| m) {
            return Err(Error::DegenerateSlice { index: 0 });
        }
        let lse = max
            + xd
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| (v - max).exp())
                .sum::<T>()
                .ln();
        let out = xd
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v - lse } else { T::zero() })
            .collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::LogSoftmax { x, mask: mask.to_vec() }, ng))
    }

    /// Layer normalization over the last axis with `eps` inside the square root.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let d = self.last_dim(x);
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let rows = self.value(x).len() / d;
        let (y, xhat, rstd) = kernels::layer_norm(self.data(x), self.data(gain), self.data(bias), rows, d, eps);
        let value = Tensor::new(self.shape(x), y)?;
        let ng = self.ng(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    // ---- convolution and pooling ---------------------------------------

    /// Per-channel "same" convolution, `x: [len × ch]`, `kernel: [width × ch]`.
    pub fn depthwise_conv1d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (len, ch) = self.dims2(x)?;
        let (width, kch) = self.dims2(kernel)?;
        if width % 2 == 0 {
            return Err(Error::Config(format!("convolution kernel width must be odd, got {width}")));
        }
        if kch != ch || self.shape(kernel).len() != 2 {
            return Err(Error::shape("depthwise_conv1d", self.shape(x), self.shape(kernel)));
        }
        let out = kernels::depthwise_conv1d(self.data(x), self.data(kernel), len, ch, width);
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x, kernel]);
        Ok(self.push(value, Op::DepthwiseConv1d { x, kernel }, ng))
    }

    /// Dense "same" convolution, `x: [len × cin]` or `[batch × len × cin]`,
    /// `kernel: [width × cin × cout]`.
    pub fn conv1d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (batch, len, cin) = match *self.shape(x) {
            [l, c] => (1, l, c),
            [b, l, c] => (b, l, c),
            _ => return Err(Error::shape("conv1d", self.shape(x), self.shape(kernel))),
        };
        let [width, kin, cout] = *self.shape(kernel) else {
            return Err(Error::shape("conv1d", self.shape(x), self.shape(kernel)));
        };
        if kin != cin {
            return Err(Error::shape("conv1d", self.shape(x), self.shape(kernel)));
        }
        if width % 2 == 0 {
            return Err(Error::Config(format!("convolution kernel width must be odd, got {width}")));
        }
        let out = kernels::conv1d(self.data(x), self.data(kernel), batch, len, cin, cout, width);
        let mut shape = self.shape(x).to_vec();
        *shape.last_mut().unwrap() = cout;
        let value = Tensor::new(&shape, out)?;
        let ng = self.ng(&[x, kernel]);
        Ok(self.push(value, Op::Conv1d { x, kernel }, ng))
    }

    /// Dense "same" 2-D convolution, channels last:
    /// `x: [h × w × cin]`, `kernel: [kh × kw × cin × cout]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let err = || Error::shape("conv2d", self.shape(x), self.shape(kernel));
        let [height, width, cin] = <[usize; 3]>::try_from(self.shape(x)).map_err(|_| err())?;
        let [kh, kw, kin, cout] = <[usize; 4]>::try_from(self.shape(kernel)).map_err(|_| err())?;
        if kin != cin {
            return Err(Error::shape("conv2d", self.shape(x), self.shape(kernel)));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Config(format!("convolution kernel must be odd, got {kh}x{kw}")));
        }
        let shape = Conv2dShape {
            height,
            width,
            cin,
            cout,
            kh,
            kw,
        };
        let out = kernels::conv2d(self.data(x), self.data(kernel), shape);
        let value = Tensor::new(&[height, width, cout], out)?;
        let ng = self.ng(&[x, kernel]);
        Ok(self.push(value, Op::Conv2d { x, kernel, shape }, ng))
    }

    /// Zeroes every row `i` of `x` (leading axis) where `mask[i]` is false.
    pub fn mask_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let rows = self.shape(x)[0];
        if mask.len() != rows {
            return Err(Error::shape("mask_rows", self.shape(x), &[mask.len()]));
        }
        let width = self.value(x).len() / rows;
        let out = self
            .data(x)
            .chunks(width)
            .zip(mask)
            .flat_map(|(row, &m)| row.iter().map(move |&v| if m { v } else { T::zero() }))
            .collect();
        let value = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::MaskRows { x, mask: mask.to_vec() }, ng))
    }

    /// Max over the middle axis of `x: [n × len × ch]`, skipping positions
    /// with `mask[i*len + t] == false`. Fully masked groups yield zeros.
    pub fn masked_max(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let [n, len, ch] = <[usize; 3]>::try_from(self.shape(x)).map_err(|_| Error::shape("masked_max", self.shape(x), &[0, 0, 0]))?;
        if mask.len() != n * len {
            return Err(Error::shape("masked_max", self.shape(x), &[mask.len()]));
        }
        let xd = self.data(x);
        let mut out = vec![T::zero(); n * ch];
        let mut argmax = vec![None; n * ch];
        for i in 0..n {
            for c in 0..ch {
                let mut best: Option<(usize, T)> = None;
                for t in 0..len {
                    if !mask[i * len + t] {
                        continue;
                    }
                    let idx = (i * len + t) * ch + c;
                    if best.is_none_or(|(_, b)| xd[idx] > b) {
                        best = Some((idx, xd[idx]));
                    }
                }
                if let Some((idx, v)) = best {
                    out[i * ch + c] = v;
                    argmax[i * ch + c] = Some(idx);
                }
            }
        }
        let value = Tensor::new(&[n, ch], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::MaskedMax { x, argmax }, ng))
    }

    /// Mean of the unmasked rows of `x: [rows × ch]`, returned as `[1 × ch]`.
    pub fn masked_mean_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (rows, ch) = self.dims2(x)?;
        if mask.len() != rows {
            return Err(Error::shape("masked_mean_rows", self.shape(x), &[mask.len()]));
        }
        let count = mask.iter().filter(|&&m| m).count();
        let mut out = vec![T::zero(); ch];
        if count > 0 {
            let inv = T::one() / T::lit(count as f64);
            for (row, _) in self.data(x).chunks(ch).zip(mask).filter(|(_, &m)| m) {
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let value = Tensor::new(&[1, ch], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(
            value,
            Op::MaskedMean {
                x,
                mask: mask.to_vec(),
                count,
            },
            ng,
        ))
    }

    // ---- structural -----------------------------------------------------

    /// Concatenates 2-D tensors with equal row counts along the columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.dims2(parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if r != rows || self.shape(p).len() != 2 {
                return Err(Error::shape("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(&[rows, total], out)?;
        let ng = self.ng(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        if start >= end || end > cols {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, end]));
        }
        let w = end - start;
        let out = self.data(x).chunks(cols).flat_map(|r| r[start..end].iter().copied()).collect();
        let value = Tensor::new(&[rows, w], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, ng))
    }

    /// Appends zero rows to `x: [n × d]` up to `rows` rows.
    pub fn pad_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let (n, d) = self.dims2(x)?;
        if n > rows {
            return Err(Error::Contract(format!("cannot pad {n} rows down to {rows}")));
        }
        let mut out = self.data(x).to_vec();
        out.resize(rows * d, T::zero());
        let value = Tensor::new(&[rows, d], out)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::PadRows(x), ng))
    }

    /// Row lookup `table[ids[i]]`, giving `[ids.len() × d]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, d) = self.dims2(table)?;
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Lookup { index: id, rows });
            }
            out.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        let value = Tensor::new(&[ids.len(), d], out)?;
        let ng = self.ng(&[table]);
        Ok(self.push(value, Op::Gather { table, ids: ids.to_vec() }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let ng = self.ng(&[x]);
        Ok(self.push(value, Op::Reshape(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        let ng = self.ng(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Selects one entry (flat index) as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let n = self.value(x).len();
        let v = *self.data(x).get(index).ok_or(Error::Lookup { index, rows: n })?;
        let ng = self.ng(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }, ng))
    }

    /// Binary cross-entropy of `σ(z)` against `target`, in logit space:
    /// `softplus(z) − target·z`.
    pub fn bce_with_logit(&mut self, z: Var, target: T) -> Result<Var> {
        if self.value(z).len() != 1 {
            return Err(Error::shape("bce_with_logit", self.shape(z), &[1]));
        }
        let zv = self.data(z)[0];
        let loss = kernels::softplus(zv) - target * zv;
        let ng = self.ng(&[z]);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogit { z, target }, ng))
    }

    // ---- reverse pass ---------------------------------------------------

    /// Propagates `d loss / d node` to every node that needs it. `loss` must
    /// be a single-element tensor.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.done {
            return Err(Error::Contract("backward already ran on this tape; build a new tape per step".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                if !node.needs_grad {
                    return None;
                }
                let data = g.unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                Some(Tensor::new(node.value.shape(), data).expect("gradient matches value shape"))
            })
            .collect();
        Ok(())
    }

    /// Gradient of the last `backward` loss w.r.t. `v`, if `v` needs one.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let needs = |v: &Var| nodes[v.0].needs_grad;
        let val = |v: &Var| nodes[v.0].value.data();
        let out = nodes[idx].value.data();
        // Returns the accumulator for `v`, allocating zeros on first touch.
        fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut [T] {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
        }

        match &nodes[idx].op {
            Op::Leaf | Op::Detach => {}
            Op::MatMul(a, b) => {
                let (n, k) = nodes[a.0].value.dims2().unwrap();
                let m = nodes[b.0].value.dims2().unwrap().1;
                if needs(a) {
                    kernels::matmul_grad_lhs(g, val(b), slot(grads, nodes, *a), n, k, m);
                }
                if needs(b) {
                    kernels::matmul_grad_rhs(val(a), g, slot(grads, nodes, *b), n, k, m);
                }
            }
            Op::Transpose(x) => {
                let (r, c) = nodes[x.0].value.dims2().unwrap();
                let gt = kernels::transpose(g, c, r);
                add_into(slot(grads, nodes, *x), &gt);
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if needs(v) {
                        add_into(slot(grads, nodes, *v), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    add_into(slot(grads, nodes, *a), g);
                }
                if needs(b) {
                    for (s, &gv) in slot(grads, nodes, *b).iter_mut().zip(g) {
                        *s -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let bv = val(b);
                    for ((s, &gv), &w) in slot(grads, nodes, *a).iter_mut().zip(g).zip(bv) {
                        *s += gv * w;
                    }
                }
                if needs(b) {
                    let av = val(a);
                    for ((s, &gv), &w) in slot(grads, nodes, *b).iter_mut().zip(g).zip(av) {
                        *s += gv * w;
                    }
                }
            }
            Op::AddBias(x, b) => {
                if needs(x) {
                    add_into(slot(grads, nodes, *x), g);
                }
                if needs(b) {
                    let d = nodes[b.0].value.len();
                    let gb = slot(grads, nodes, *b);
                    for row in g.chunks(d) {
                        add_into(gb, row);
                    }
                }
            }
            Op::MulBias(x, w) => {
                let d = nodes[w.0].value.len();
                if needs(x) {
                    let wv = val(w);
                    let gx = slot(grads, nodes, *x);
                    for (grow, gxrow) in g.chunks(d).zip(gx.chunks_mut(d)) {
                        for c in 0..d {
                            gxrow[c] += grow[c] * wv[c];
                        }
                    }
                }
                if needs(w) {
                    let xv = val(x);
                    let gw = slot(grads, nodes, *w);
                    for (grow, xrow) in g.chunks(d).zip(xv.chunks(d)) {
                        for c in 0..d {
                            gw[c] += grow[c] * xrow[c];
                        }
                    }
                }
            }
            Op::AddScalar(x, s) => {
                if needs(x) {
                    add_into(slot(grads, nodes, *x), g);
                }
                if needs(s) {
                    slot(grads, nodes, *s)[0] += g.iter().copied().sum::<T>();
                }
            }
            Op::AddRowCol { x, col, row } => {
                let (n, m) = nodes[x.0].value.dims2().unwrap();
                if needs(x) {
                    add_into(slot(grads, nodes, *x), g);
                }
                if needs(col) {
                    let gc = slot(grads, nodes, *col);
                    for i in 0..n {
                        gc[i] += g[i * m..(i + 1) * m].iter().copied().sum::<T>();
                    }
                }
                if needs(row) {
                    let gr = slot(grads, nodes, *row);
                    for i in 0..n {
                        for j in 0..m {
                            gr[j] += g[i * m + j];
                        }
                    }
                }
            }
            Op::Scale(x, c) => {
                for (s, &gv) in slot(grads, nodes, *x).iter_mut().zip(g) {
                    *s += gv * *c;
                }
            }
            Op::MulConst(x, f) => {
                for ((s, &gv), &fv) in slot(grads, nodes, *x).iter_mut().zip(g).zip(f) {
                    *s += gv * fv;
                }
            }
            Op::Relu(x) => {
                for ((s, &gv), &y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(out) {
                    if y > T::zero() {
                        *s += gv;
                    }
                }
            }
            Op::Sigmoid(x) => {
                for ((s, &gv), &y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(out) {
                    *s += gv * y * (T::one() - y);
                }
            }
            Op::Softmax { x, axis } => {
                let (r, c) = nodes[idx].value.dims2().unwrap();
                let gx = slot(grads, nodes, *x);
                for (_, off, stride, len) in kernels::lanes(r, c, *axis == Axis::Cols) {
                    kernels::softmax_lane_backward(out, g, gx, off, stride, len);
                }
            }
            Op::LogSoftmax { x, mask } => {
                let gsum: T = g.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).sum();
                let gx = slot(grads, nodes, *x);
                for i in 0..mask.len() {
                    if mask[i] {
                        gx[i] += g[i] - out[i].exp() * gsum;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = nodes[gain.0].value.len();
                let rows = out.len() / d;
                let gainv = val(gain);
                let mut gx = needs(x).then(|| vec![T::zero(); out.len()]);
                let mut gg = needs(gain).then(|| vec![T::zero(); d]);
                let mut gb = needs(bias).then(|| vec![T::zero(); d]);
                kernels::layer_norm_backward(
                    g,
                    xhat,
                    rstd,
                    gainv,
                    rows,
                    d,
                    gx.as_deref_mut(),
                    gg.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, buf) in [(x, gx), (gain, gg), (bias, gb)] {
                    if let Some(buf) = buf {
                        add_into(slot(grads, nodes, *v), &buf);
                    }
                }
            }
            Op::DepthwiseConv1d { x, kernel } => {
                let (len, ch) = nodes[x.0].value.dims2().unwrap();
                let width = nodes[kernel.0].value.dims2().unwrap().0;
                let mut gx = needs(x).then(|| vec![T::zero(); len * ch]);
                let mut gk = needs(kernel).then(|| vec![T::zero(); width * ch]);
                kernels::depthwise_conv1d_backward(
                    g,
                    val(x),
                    val(kernel),
                    len,
                    ch,
                    width,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                );
                for (v, buf) in [(x, gx), (kernel, gk)] {
                    if let Some(buf) = buf {
                        add_into(slot(grads, nodes, *v), &buf);
                    }
                }
            }
            Op::Conv1d { x, kernel } => {
                let xs = nodes[x.0].value.shape();
                let (batch, len, cin) = match *xs {
                    [l, c] => (1, l, c),
                    [b, l, c] => (b, l, c),
                    _ => unreachable!(),
                };
                let ks = nodes[kernel.0].value.shape();
                let (width, cout) = (ks[0], ks[2]);
                let mut gx = needs(x).then(|| vec![T::zero(); val(x).len()]);
                let mut gk = needs(kernel).then(|| vec![T::zero(); val(kernel).len()]);
                kernels::conv1d_backward(
                    g,
                    val(x),
                    val(kernel),
                    batch,
                    len,
                    cin,
                    cout,
                    width,
                    gx.as_deref_mut(),
                    gk.as_deref_mut(),
                );
                for (v, buf) in [(x, gx), (kernel, gk)] {
                    if let Some(buf) = buf {
                        add_into(slot(grads, nodes, *v), &buf);
                    }
                }
            }
            Op::Conv2d { x, kernel, shape } => {
                let mut gx = needs(x).then(|| vec![T::zero(); val(x).len()]);
                let mut gk = needs(kernel).then(|| vec![T::zero(); val(kernel).len()]);
                kernels::conv2d_backward(g, val(x), val(kernel), *shape, gx.as_deref_mut(), gk.as_deref_mut());
                for (v, buf) in [(x, gx), (kernel, gk)] {
                    if let Some(buf) = buf {
                        add_into(slot(grads, nodes, *v), &buf);
                    }
                }
            }
            Op::MaskRows { x, mask } => {
                let width = out.len() / mask.len();
                let gx = slot(grads, nodes, *x);
                for ((gxrow, grow), &m) in gx.chunks_mut(width).zip(g.chunks(width)).zip(mask) {
                    if m {
                        add_into(gxrow, grow);
                    }
                }
            }
            Op::MaskedMax { x, argmax } => {
                let gx = slot(grads, nodes, *x);
                for (&gv, am) in g.iter().zip(argmax) {
                    if let Some(i) = am {
                        gx[*i] += gv;
                    }
                }
            }
            Op::MaskedMean { x, mask, count } => {
                if *count > 0 {
                    let inv = T::one() / T::lit(*count as f64);
                    let ch = g.len();
                    let gx = slot(grads, nodes, *x);
                    for (gxrow, _) in gx.chunks_mut(ch).zip(mask).filter(|(_, &m)| m) {
                        for (s, &gv) in gxrow.iter_mut().zip(g) {
                            *s += gv * inv;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = nodes[idx].value.dims2().unwrap();
                let mut start = 0;
                for p in parts {
                    let w = nodes[p.0].value.dims2().unwrap().1;
                    if needs(p) {
                        let gp = slot(grads, nodes, *p);
                        for r in 0..rows {
                            add_into(&mut gp[r * w..(r + 1) * w], &g[r * total + start..r * total + start + w]);
                        }
                    }
                    start += w;
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = nodes[x.0].value.dims2().unwrap();
                let w = out.len() / rows;
                let gx = slot(grads, nodes, *x);
                for r in 0..rows {
                    add_into(&mut gx[r * cols + start..r * cols + start + w], &g[r * w..(r + 1) * w]);
                }
            }
            Op::PadRows(x) => {
                let n = val(x).len();
                add_into(slot(grads, nodes, *x), &g[..n]);
            }
            Op::Gather { table, ids } => {
                let d = nodes[table.0].value.dims2().unwrap().1;
                let gt = slot(grads, nodes, *table);
                for (i, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[i * d..(i + 1) * d]);
                }
            }
            Op::Reshape(x) => add_into(slot(grads, nodes, *x), g),
            Op::Sum(x) => {
                let gv = g[0];
                slot(grads, nodes, *x).iter_mut().for_each(|s| *s += gv);
            }
            Op::Pick { x, index } => {
                slot(grads, nodes, *x)[*index] += g[0];
            }
            Op::BceWithLogit { z, target } => {
                let zv = val(z)[0];
                slot(grads, nodes, *z)[0] += g[0] * (kernels::sigmoid(zv) - *target);
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
