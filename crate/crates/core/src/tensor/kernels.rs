//! Slice-level forward and adjoint kernels.
//!
//! Shapes are passed explicitly; callers validate them. Every `*_backward`
//! function accumulates (`+=`) into its output buffers.

use crate::real::Real;

/// `c[n×m] = a[n×k] · b[k×m]`
pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> alloc::vec::Vec<T> {
    let mut c = alloc::vec![T::zero(); n * m];
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
    c
}

/// `ga[n×k] += g[n×m] · b[k×m]ᵀ`
pub fn matmul_grad_lhs<T: Real>(g: &[T], b: &[T], ga: &mut [T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            let mut acc = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            ga[i * k + p] += acc;
        }
    }
}

/// `gb[k×m] += a[n×k]ᵀ · g[n×m]`
pub fn matmul_grad_rhs<T: Real>(a: &[T], g: &[T], gb: &mut [T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let gbrow = &mut gb[p * m..(p + 1) * m];
            for (gbv, &gv) in gbrow.iter_mut().zip(grow) {
                *gbv += aip * gv;
            }
        }
    }
}

pub fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> alloc::vec::Vec<T> {
    let mut out = alloc::vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

/// Iterates softmax lanes of a `rows × cols` matrix: `(lane, offset, stride, len)`.
pub fn lanes(rows: usize, cols: usize, along_cols: bool) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    let (count, stride, len, step) = if along_cols {
        (rows, 1, cols, cols)
    } else {
        (cols, cols, rows, 1)
    };
    (0..count).map(move |lane| (lane, lane * step, stride, len))
}

/// Masked, max-shifted softmax over one lane. Returns `false` when every
/// entry of the lane is masked out.
pub fn softmax_lane<T: Real>(x: &[T], mask: &[bool], out: &mut [T], offset: usize, stride: usize, len: usize) -> bool {
    let idx = |t: usize| offset + t * stride;
    let mut max = T::neg_infinity();
    let mut any = false;
    for t in 0..len {
        if mask[idx(t)] {
            any = true;
            max = max.max(x[idx(t)]);
        }
    }
    if !any {
        return false;
    }
    let mut sum = T::zero();
    for t in 0..len {
        let i = idx(t);
        let e = if mask[i] { (x[i] - max).exp() } else { T::zero() };
        out[i] = e;
        sum += e;
    }
    for t in 0..len {
        out[idx(t)] /= sum;
    }
    true
}

/// `gx += y ⊙ (g − Σ y⊙g)` along one lane.
pub fn softmax_lane_backward<T: Real>(y: &[T], g: &[T], gx: &mut [T], offset: usize, stride: usize, len: usize) {
    let idx = |t: usize| offset + t * stride;
    let dot: T = (0..len).map(|t| y[idx(t)] * g[idx(t)]).sum();
    for t in 0..len {
        let i = idx(t);
        gx[i] += y[i] * (g[i] - dot);
    }
}

/// Layer normalization over the last axis. Returns `(y, xhat, rstd)`.
#[allow(clippy::type_complexity)]
pub fn layer_norm<T: Real>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    rows: usize,
    dim: usize,
    eps: T,
) -> (alloc::vec::Vec<T>, alloc::vec::Vec<T>, alloc::vec::Vec<T>) {
    let mut y = alloc::vec![T::zero(); rows * dim];
    let mut xhat = alloc::vec![T::zero(); rows * dim];
    let mut rstd = alloc::vec![T::zero(); rows];
    let d = T::lit(dim as f64);
    for r in 0..rows {
        let row = &x[r * dim..(r + 1) * dim];
        let mean = row.iter().copied().sum::<T>() / d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..dim {
            let h = (row[c] - mean) * rs;
            xhat[r * dim + c] = h;
            y[r * dim + c] = h * gain[c] + bias[c];
        }
    }
    (y, xhat, rstd)
}

#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Real>(
    g: &[T],
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    rows: usize,
    dim: usize,
    gx: Option<&mut [T]>,
    ggain: Option<&mut [T]>,
    gbias: Option<&mut [T]>,
) {
    if let Some(gg) = ggain {
        for r in 0..rows {
            for c in 0..dim {
                gg[c] += g[r * dim + c] * xhat[r * dim + c];
            }
        }
    }
    if let Some(gb) = gbias {
        for r in 0..rows {
            for c in 0..dim {
                gb[c] += g[r * dim + c];
            }
        }
    }
    if let Some(gx) = gx {
        let d = T::lit(dim as f64);
        for r in 0..rows {
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for c in 0..dim {
                let dxh = g[r * dim + c] * gain[c];
                mean_d += dxh;
                mean_dx += dxh * xhat[r * dim + c];
            }
            mean_d /= d;
            mean_dx /= d;
            for c in 0..dim {
                let i = r * dim + c;
                let dxh = g[i] * gain[c];
                gx[i] += rstd[r] * (dxh - mean_d - xhat[i] * mean_dx);
            }
        }
    }
}

/// Per-channel "same" convolution with zero padding.
/// `x: [len × ch]`, `kernel: [width × ch]`, `width` odd.
pub fn depthwise_conv1d<T: Real>(x: &[T], kernel: &[T], len: usize, ch: usize, width: usize) -> alloc::vec::Vec<T> {
    let half = width / 2;
    let mut y = alloc::vec![T::zero(); len * ch];
    for t in 0..len {
        for o in 0..width {
            let Some(src) = (t + o).checked_sub(half).filter(|&s| s < len) else {
                continue;
            };
            let xrow = &x[src * ch..(src + 1) * ch];
            let krow = &kernel[o * ch..(o + 1) * ch];
            let yrow = &mut y[t * ch..(t + 1) * ch];
            for c in 0..ch {
                yrow[c] += xrow[c] * krow[c];
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn depthwise_conv1d_backward<T: Real>(
    g: &[T],
    x: &[T],
    kernel: &[T],
    len: usize,
    ch: usize,
    width: usize,
    mut gx: Option<&mut [T]>,
    mut gk: Option<&mut [T]>,
) {
    let half = width / 2;
    for t in 0..len {
        for o in 0..width {
            let Some(src) = (t + o).checked_sub(half).filter(|&s| s < len) else {
                continue;
            };
            for c in 0..ch {
                let gv = g[t * ch + c];
                if let Some(gx) = gx.as_deref_mut() {
                    gx[src * ch + c] += gv * kernel[o * ch + c];
                }
                if let Some(gk) = gk.as_deref_mut() {
                    gk[o * ch + c] += gv * x[src * ch + c];
                }
            }
        }
    }
}

/// Dense "same" 1-D convolution over a batch of sequences.
/// `x: [batch × len × cin]`, `w: [width × cin × cout]`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d<T: Real>(
    x: &[T],
    w: &[T],
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    width: usize,
) -> alloc::vec::Vec<T> {
    let half = width / 2;
    let mut y = alloc::vec![T::zero(); batch * len * cout];
    for b in 0..batch {
        for t in 0..len {
            let yoff = (b * len + t) * cout;
            for o in 0..width {
                let Some(src) = (t + o).checked_sub(half).filter(|&s| s < len) else {
                    continue;
                };
                let xoff = (b * len + src) * cin;
                for ci in 0..cin {
                    let xv = x[xoff + ci];
                    if xv == T::zero() {
                        continue;
                    }
                    let woff = (o * cin + ci) * cout;
                    let yrow = &mut y[yoff..yoff + cout];
                    for (yv, &wv) in yrow.iter_mut().zip(&w[woff..woff + cout]) {
                        *yv += xv * wv;
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Real>(
    g: &[T],
    x: &[T],
    w: &[T],
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    width: usize,
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
) {
    let half = width / 2;
    for b in 0..batch {
        for t in 0..len {
            let goff = (b * len + t) * cout;
            let grow = &g[goff..goff + cout];
            for o in 0..width {
                let Some(src) = (t + o).checked_sub(half).filter(|&s| s < len) else {
                    continue;
                };
                let xoff = (b * len + src) * cin;
                for ci in 0..cin {
                    let woff = (o * cin + ci) * cout;
                    let wrow = &w[woff..woff + cout];
                    if let Some(gx) = gx.as_deref_mut() {
                        let mut acc = T::zero();
                        for (&gv, &wv) in grow.iter().zip(wrow) {
                            acc += gv * wv;
                        }
                        gx[xoff + ci] += acc;
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        let xv = x[xoff + ci];
                        for (gwv, &gv) in gw[woff..woff + cout].iter_mut().zip(grow) {
                            *gwv += xv * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Shape descriptor for a "same" 2-D convolution in channels-last layout.
#[derive(Clone, Copy, Debug)]
pub struct Conv2dShape {
    pub height: usize,
    pub width: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl Conv2dShape {
    fn taps(&self, y: usize, x: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let (hh, hw) = (self.kh / 2, self.kw / 2);
        (0..self.kh).flat_map(move |a| {
            (0..self.kw).filter_map(move |b| {
                let sy = (y + a).checked_sub(hh).filter(|&s| s < self.height)?;
                let sx = (x + b).checked_sub(hw).filter(|&s| s < self.width)?;
                Some((a, b, sy, sx))
            })
        })
    }
}

/// `x: [h × w × cin]`, `k: [kh × kw × cin × cout]`.
pub fn conv2d<T: Real>(x: &[T], k: &[T], s: Conv2dShape) -> alloc::vec::Vec<T> {
    let mut out = alloc::vec![T::zero(); s.height * s.width * s.cout];
    for y in 0..s.height {
        for xx in 0..s.width {
            let ooff = (y * s.width + xx) * s.cout;
            for (a, b, sy, sx) in s.taps(y, xx) {
                let xoff = (sy * s.width + sx) * s.cin;
                for ci in 0..s.cin {
                    let xv = x[xoff + ci];
                    let koff = ((a * s.kw + b) * s.cin + ci) * s.cout;
                    for co in 0..s.cout {
                        out[ooff + co] += xv * k[koff + co];
                    }
                }
            }
        }
    }
    out
}

pub fn conv2d_backward<T: Real>(
    g: &[T],
    x: &[T],
    k: &[T],
    s: Conv2dShape,
    mut gx: Option<&mut [T]>,
    mut gk: Option<&mut [T]>,
) {
    for y in 0..s.height {
        for xx in 0..s.width {
            let ooff = (y * s.width + xx) * s.cout;
            for (a, b, sy, sx) in s.taps(y, xx) {
                let xoff = (sy * s.width + sx) * s.cin;
                for ci in 0..s.cin {
                    let koff = ((a * s.kw + b) * s.cin + ci) * s.cout;
                    for co in 0..s.cout {
                        let gv = g[ooff + co];
                        if let Some(gx) = gx.as_deref_mut() {
                            gx[xoff + ci] += gv * k[koff + co];
                        }
                        if let Some(gk) = gk.as_deref_mut() {
                            gk[koff + co] += gv * x[xoff + ci];
                        }
                    }
                }
            }
        }
    }
}

/// Numerically stable `log(1 + exp(z))`.
pub fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (T::one() + (-z.abs()).exp()).ln()
}

pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
