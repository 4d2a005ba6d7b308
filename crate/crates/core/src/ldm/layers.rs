//! Forward and backward passes for the few layer types the denoiser uses.
//! Backward functions add into gradient buffers; parameter gradients are
//! skipped when no buffer is given.

use std::ops::Range;

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use super::tensor::Tensor;

#[inline]
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub fn silu_tensor(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.c, x.h, x.w, x.data.iter().map(|&v| silu(v)).collect())
}

/// Convolution with square kernel, stride and zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

impl Conv2d {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.pad - self.k) / self.stride + 1, (w + 2 * self.pad - self.k) / self.stride + 1)
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Patch matrix of shape (cin·k·k) × (oh·ow).
    fn im2col(&self, x: &Tensor) -> Vec<f64> {
        let (oh, ow) = self.out_hw(x.h, x.w);
        let n = oh * ow;
        let mut cols = vec![0.0; self.cin * self.k * self.k * n];
        for ci in 0..self.cin {
            let plane = x.channel(ci);
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((ci * self.k + ky) * self.k + kx) * n;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize) -> Tensor {
        let (oh, ow) = self.out_hw(h, w);
        let n = oh * ow;
        let mut x = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((ci * self.k + ky) * self.k + kx) * n;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ci * h + iy as usize) * w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                x.data[base + ix as usize] += cols[row + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> Tensor {
        debug_assert_eq!(x.c, self.cin);
        let (oh, ow) = self.out_hw(x.h, x.w);
        let n = oh * ow;
        let mut out = Tensor::zeros(self.cout, oh, ow);
        let bias = &p[self.b.clone()];
        for (o, row) in out.data.chunks_mut(n).enumerate() {
            row.fill(bias[o]);
        }
        let kk = self.cin * self.k * self.k;
        if self.is_pointwise() {
            gemm_nn(&p[self.w.clone()], &x.data, &mut out.data, self.cout, kk, n);
        } else {
            let cols = self.im2col(x);
            gemm_nn(&p[self.w.clone()], &cols, &mut out.data, self.cout, kk, n);
        }
        out
    }

    /// Returns dL/dx when `need_input` is set; adds parameter gradients
    /// into `grads` when given.
    pub fn backward(&self, p: &[f64], x: &Tensor, dy: &Tensor, grads: Option<&mut [f64]>, need_input: bool) -> Option<Tensor> {
        let n = dy.hw();
        let kk = self.cin * self.k * self.k;
        let pointwise = self.is_pointwise();
        let cols = if pointwise { None } else { Some(self.im2col(x)) };
        if let Some(g) = grads {
            let cols_ref: &[f64] = cols.as_deref().unwrap_or(&x.data);
            gemm_nt(&dy.data, cols_ref, &mut g[self.w.clone()], self.cout, n, kk);
            let gb = &mut g[self.b.clone()];
            for (o, row) in dy.data.chunks(n).enumerate() {
                gb[o] += row.iter().sum::<f64>();
            }
        }
        if !need_input {
            return None;
        }
        let mut dcols = vec![0.0; kk * n];
        gemm_tn(&p[self.w.clone()], &dy.data, &mut dcols, kk, self.cout, n);
        if pointwise {
            Some(Tensor::from_vec(self.cin, x.h, x.w, dcols))
        } else {
            Some(self.col2im(&dcols, x.h, x.w))
        }
    }
}

/// y = W x + b on plain vectors; W is out×in.
#[derive(Debug, Clone)]
pub struct Linear {
    pub din: usize,
    pub dout: usize,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

impl Linear {
    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = p[self.b.clone()].to_vec();
        gemm_nn(&p[self.w.clone()], x, &mut y, self.dout, self.din, 1);
        y
    }

    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grads: Option<&mut [f64]>) -> Vec<f64> {
        if let Some(g) = grads {
            gemm_nn(dy, x, &mut g[self.w.clone()], self.dout, 1, self.din);
            for (gb, d) in g[self.b.clone()].iter_mut().zip(dy) {
                *gb += d;
            }
        }
        let mut dx = vec![0.0; self.din];
        gemm_tn(&p[self.w.clone()], dy, &mut dx, self.din, self.dout, 1);
        dx
    }
}

/// Single-head cross-attention with residual output:
/// `y = h + Wo · (softmax_tokens(Q Kᵀ / √d) V) + bo`.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub channels: usize,
    pub ctx_dim: usize,
    pub dim: usize,
    pub wq: Range<usize>,
    pub wk: Range<usize>,
    pub wv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
}

/// Saved activations of one attention call.
#[derive(Debug, Clone)]
pub struct AttnCache {
    /// d × HW
    pub q: Vec<f64>,
    /// L × d
    pub k: Vec<f64>,
    /// L × d
    pub v: Vec<f64>,
    /// L × HW, each column a distribution over tokens.
    pub probs: Vec<f64>,
    /// d × HW
    pub o: Vec<f64>,
    pub tokens: usize,
}

impl CrossAttention {
    /// `ctx` is L × ctx_dim, row-major.
    pub fn forward(&self, p: &[f64], h: &Tensor, ctx: &[f64]) -> (Tensor, AttnCache) {
        let n = h.hw();
        let d = self.dim;
        let l = ctx.len() / self.ctx_dim;
        let mut q = vec![0.0; d * n];
        gemm_nn(&p[self.wq.clone()], &h.data, &mut q, d, self.channels, n);
        let mut k = vec![0.0; l * d];
        gemm_nn(ctx, &p[self.wk.clone()], &mut k, l, self.ctx_dim, d);
        let mut v = vec![0.0; l * d];
        gemm_nn(ctx, &p[self.wv.clone()], &mut v, l, self.ctx_dim, d);

        let scale = 1.0 / (d as f64).sqrt();
        let mut probs = vec![0.0; l * n];
        gemm_nn(&k, &q, &mut probs, l, d, n);
        for j in 0..n {
            let mut mx = f64::NEG_INFINITY;
            for t in 0..l {
                mx = mx.max(probs[t * n + j] * scale);
            }
            let mut sum = 0.0;
            for t in 0..l {
                let e = (probs[t * n + j] * scale - mx).exp();
                probs[t * n + j] = e;
                sum += e;
            }
            for t in 0..l {
                probs[t * n + j] /= sum;
            }
        }
        let mut o = vec![0.0; d * n];
        gemm_tn(&v, &probs, &mut o, d, l, n);
        let mut out = h.clone();
        let bo = &p[self.bo.clone()];
        for (c, row) in out.data.chunks_mut(n).enumerate() {
            for x in row.iter_mut() {
                *x += bo[c];
            }
        }
        gemm_nn(&p[self.wo.clone()], &o, &mut out.data, self.channels, d, n);
        (out, AttnCache { q, k, v, probs, o, tokens: l })
    }

    /// Returns (dL/dh, dL/dctx).
    pub fn backward(
        &self,
        p: &[f64],
        h: &Tensor,
        ctx: &[f64],
        cache: &AttnCache,
        dy: &Tensor,
        mut grads: Option<&mut [f64]>,
    ) -> (Tensor, Vec<f64>) {
        let n = h.hw();
        let d = self.dim;
        let l = cache.tokens;
        let scale = 1.0 / (d as f64).sqrt();
        if let Some(g) = grads.as_deref_mut() {
            gemm_nt(&dy.data, &cache.o, &mut g[self.wo.clone()], self.channels, n, d);
            for (c, row) in dy.data.chunks(n).enumerate() {
                g[self.bo.start + c] += row.iter().sum::<f64>();
            }
        }
        let mut d_o = vec![0.0; d * n];
        gemm_tn(&p[self.wo.clone()], &dy.data, &mut d_o, d, self.channels, n);

        let mut dv = vec![0.0; l * d];
        gemm_nt(&cache.probs, &d_o, &mut dv, l, n, d);
        let mut dprobs = vec![0.0; l * n];
        gemm_nn(&cache.v, &d_o, &mut dprobs, l, d, n);
        // softmax backward per column, folded with the 1/sqrt(d) scale
        let mut ds = dprobs;
        for j in 0..n {
            let mut dotp = 0.0;
            for t in 0..l {
                dotp += ds[t * n + j] * cache.probs[t * n + j];
            }
            for t in 0..l {
                let pv = cache.probs[t * n + j];
                ds[t * n + j] = pv * (ds[t * n + j] - dotp) * scale;
            }
        }
        let mut dk = vec![0.0; l * d];
        gemm_nt(&ds, &cache.q, &mut dk, l, n, d);
        let mut dq = vec![0.0; d * n];
        gemm_tn(&cache.k, &ds, &mut dq, d, l, n);

        let mut dh = dy.clone();
        gemm_tn(&p[self.wq.clone()], &dq, &mut dh.data, self.channels, d, n);

        let mut dctx = vec![0.0; l * self.ctx_dim];
        gemm_nt(&dk, &p[self.wk.clone()], &mut dctx, l, d, self.ctx_dim);
        gemm_nt(&dv, &p[self.wv.clone()], &mut dctx, l, d, self.ctx_dim);
        if let Some(g) = grads {
            gemm_nt(&dq, &h.data, &mut g[self.wq.clone()], d, n, self.channels);
            gemm_tn(ctx, &dk, &mut g[self.wk.clone()], self.ctx_dim, l, d);
            gemm_tn(ctx, &dv, &mut g[self.wv.clone()], self.ctx_dim, l, d);
        }
        (dh, dctx)
    }
}

pub fn upsample2(x: &Tensor) -> Tensor {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            for xx in 0..w {
                out.data[(c * h + y) * w + xx] = x.data[(c * x.h + y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut out = Tensor::zeros(dy.c, h, w);
    for c in 0..dy.c {
        for y in 0..dy.h {
            for x in 0..dy.w {
                out.data[(c * h + y / 2) * w + x / 2] += dy.data[(c * dy.h + y) * dy.w + x];
            }
        }
    }
    out
}

pub fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.c + b.c, a.h, a.w, data)
}

pub fn split(x: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let n = x.hw();
    (
        Tensor::from_vec(ca, x.h, x.w, x.data[..ca * n].to_vec()),
        Tensor::from_vec(x.c - ca, x.h, x.w, x.data[ca * n..].to_vec()),
    )
}

pub fn add_into(a: &mut Tensor, b: &Tensor) {
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}
