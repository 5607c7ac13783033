//! Primitive layers with explicit forward and backward passes.
//!
//! Forward passes borrow parameters immutably and return a cache; backward
//! passes consume that cache and *accumulate* parameter gradients into a
//! gradient holder of the same type as the layer.

use super::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named access to trainable parameters and non-trainable buffers.
pub trait Params {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>);
    fn buffers<'a>(&'a self, _prefix: &str, _out: &mut Vec<(String, &'a [f64])>) {}
    fn buffers_mut<'a>(&'a mut self, _prefix: &str, _out: &mut Vec<(String, &'a mut [f64])>) {}
}

/// A copy of `p` with every trainable parameter zeroed: a gradient holder.
pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut g = p.clone();
    let mut v = Vec::new();
    g.params_mut("", &mut v);
    for (_, s) in v {
        s.fill(0.0);
    }
    g
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `c = a' * b' (+ c)` where `a'` is `m x k` and `b'` is `k x n`, all
/// row-major; `ta`/`tb` mean the stored buffer is the transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], acc: bool) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if acc { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index matrixmultiply touches for
    // the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 2-D convolution with square kernel, zero padding and stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out_c x (in_c * k * k)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    in_shape: [usize; 4],
    out_h: usize,
    out_w: usize,
    cols: Vec<Vec<f64>>,
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng>(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        let fan_in = (in_c * k * k) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        Self {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: (0..out_c * in_c * k * k).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_c],
        }
    }

    pub fn conv3<R: Rng>(in_c: usize, out_c: usize, stride: usize, rng: &mut R) -> Self {
        Self::new(in_c, out_c, 3, stride, 1, rng)
    }

    pub fn conv1<R: Rng>(in_c: usize, out_c: usize, stride: usize, rng: &mut R) -> Self {
        Self::new(in_c, out_c, 1, stride, 0, rng)
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let cols = oh * ow;
        let mut out = vec![0.0; self.in_c * k * k * cols];
        for ci in 0..self.in_c {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut out[((ci * k + ky) * k + kx) * cols..][..cols];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn col2im(&self, cols_buf: &[f64], dx: &mut [f64], h: usize, w: usize, oh: usize, ow: usize) {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let cols = oh * ow;
        for ci in 0..self.in_c {
            let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols_buf[((ci * k + ky) * k + kx) * cols..][..cols];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &g) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, ConvCache) {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_size(x.h, x.w);
        let kk = self.in_c * self.k * self.k;
        let mut y = Tensor::zeros(x.n, self.out_c, oh, ow);
        let mut cols = Vec::with_capacity(x.n);
        for b in 0..x.n {
            let col = self.im2col(x.item(b), x.h, x.w, oh, ow);
            let out = y.item_mut(b);
            for (o, chunk) in out.chunks_mut(oh * ow).enumerate() {
                chunk.fill(self.bias[o]);
            }
            gemm(self.out_c, kk, oh * ow, &self.weight, false, &col, false, out, true);
            cols.push(col);
        }
        (
            y,
            ConvCache {
                in_shape: x.shape(),
                out_h: oh,
                out_w: ow,
                cols,
            },
        )
    }

    pub fn backward(&self, cache: &ConvCache, dy: &Tensor, grads: &mut Conv2d) -> Tensor {
        let [n, _, h, w] = cache.in_shape;
        let (oh, ow) = (cache.out_h, cache.out_w);
        let kk = self.in_c * self.k * self.k;
        let mut dx = Tensor::zeros(n, self.in_c, h, w);
        let mut dcol = vec![0.0; kk * oh * ow];
        for b in 0..n {
            let g = dy.item(b);
            for (o, chunk) in g.chunks(oh * ow).enumerate() {
                grads.bias[o] += chunk.iter().sum::<f64>();
            }
            gemm(self.out_c, oh * ow, kk, g, false, &cache.cols[b], true, &mut grads.weight, true);
            gemm(kk, self.out_c, oh * ow, &self.weight, true, g, false, &mut dcol, false);
            self.col2im(&dcol, dx.item_mut(b), h, w, oh, ow);
        }
        dx
    }
}

impl Params for Conv2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

/// Transposed convolution with kernel size equal to its stride, so output
/// blocks do not overlap: upsamples by `factor` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub factor: usize,
    /// `in_c x (out_c * factor * factor)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvTCache {
    input: Tensor,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, factor: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / in_c as f64).sqrt()).expect("positive std");
        Self {
            in_c,
            out_c,
            factor,
            weight: (0..in_c * out_c * factor * factor).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out_c],
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, ConvTCache) {
        assert_eq!(x.c, self.in_c, "transposed conv input channels");
        let f = self.factor;
        let (h, w) = (x.h, x.w);
        let (oh, ow) = (h * f, w * f);
        let rows = self.out_c * f * f;
        let mut y = Tensor::zeros(x.n, self.out_c, oh, ow);
        let mut z = vec![0.0; rows * h * w];
        for b in 0..x.n {
            gemm(rows, self.in_c, h * w, &self.weight, true, x.item(b), false, &mut z, false);
            let out = y.item_mut(b);
            for o in 0..self.out_c {
                for a in 0..f {
                    for bb in 0..f {
                        let zr = &z[((o * f + a) * f + bb) * h * w..][..h * w];
                        for iy in 0..h {
                            let orow = &mut out[(o * oh + iy * f + a) * ow..][..ow];
                            for ix in 0..w {
                                orow[ix * f + bb] = zr[iy * w + ix] + self.bias[o];
                            }
                        }
                    }
                }
            }
        }
        (y, ConvTCache { input: x.clone() })
    }

    pub fn backward(&self, cache: &ConvTCache, dy: &Tensor, grads: &mut ConvTranspose2d) -> Tensor {
        let x = &cache.input;
        let f = self.factor;
        let (h, w) = (x.h, x.w);
        let (oh, ow) = (h * f, w * f);
        let rows = self.out_c * f * f;
        let mut dx = Tensor::zeros(x.n, self.in_c, h, w);
        let mut dz = vec![0.0; rows * h * w];
        for b in 0..x.n {
            let g = dy.item(b);
            for o in 0..self.out_c {
                grads.bias[o] += g[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
                for a in 0..f {
                    for bb in 0..f {
                        let zr = &mut dz[((o * f + a) * f + bb) * h * w..][..h * w];
                        for iy in 0..h {
                            let grow = &g[(o * oh + iy * f + a) * ow..][..ow];
                            for ix in 0..w {
                                zr[iy * w + ix] = grow[ix * f + bb];
                            }
                        }
                    }
                }
            }
            gemm(self.in_c, h * w, rows, x.item(b), false, &dz, true, &mut grads.weight, true);
            gemm(self.in_c, rows, h * w, &self.weight, false, &dz, false, dx.item_mut(b), false);
        }
        dx
    }
}

impl Params for ConvTranspose2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}

pub const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub c: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    xhat: Tensor,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    count: usize,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        Self {
            c,
            gamma: vec![1.0; c],
            beta: vec![0.0; c],
            running_mean: vec![0.0; c],
            running_var: vec![1.0; c],
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> (Tensor, BnCache) {
        assert_eq!(x.c, self.c, "batch-norm channels");
        let plane = x.plane();
        let count = x.n * plane;
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; self.c];
                let mut var = vec![0.0; self.c];
                for b in 0..x.n {
                    for (ch, chunk) in x.item(b).chunks(plane).enumerate() {
                        mean[ch] += chunk.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for b in 0..x.n {
                    for (ch, chunk) in x.item(b).chunks(plane).enumerate() {
                        var[ch] += chunk.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count as f64);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut y = Tensor::zeros(x.n, x.c, x.h, x.w);
        for b in 0..x.n {
            let src = x.item(b);
            let xh = xhat.item_mut(b);
            for ch in 0..self.c {
                for i in ch * plane..(ch + 1) * plane {
                    xh[i] = (src[i] - mean[ch]) * inv_std[ch];
                }
            }
            let yo = y.item_mut(b);
            for ch in 0..self.c {
                for i in ch * plane..(ch + 1) * plane {
                    yo[i] = self.gamma[ch] * xhat.item(b)[i] + self.beta[ch];
                }
            }
        }
        (
            y,
            BnCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                count,
            },
        )
    }

    pub fn backward(&self, cache: &BnCache, dy: &Tensor, grads: &mut BatchNorm2d) -> Tensor {
        let plane = dy.plane();
        let m = cache.count as f64;
        let mut sum_dy = vec![0.0; self.c];
        let mut sum_dy_xhat = vec![0.0; self.c];
        for b in 0..dy.n {
            let g = dy.item(b);
            let xh = cache.xhat.item(b);
            for ch in 0..self.c {
                for i in ch * plane..(ch + 1) * plane {
                    sum_dy[ch] += g[i];
                    sum_dy_xhat[ch] += g[i] * xh[i];
                }
            }
        }
        for ch in 0..self.c {
            grads.gamma[ch] += sum_dy_xhat[ch];
            grads.beta[ch] += sum_dy[ch];
        }
        let mut dx = Tensor::zeros(dy.n, dy.c, dy.h, dy.w);
        for b in 0..dy.n {
            let g = dy.item(b);
            let xh = cache.xhat.item(b);
            let out = dx.item_mut(b);
            for ch in 0..self.c {
                let k = self.gamma[ch] * cache.inv_std[ch];
                for i in ch * plane..(ch + 1) * plane {
                    out[i] = match cache.mode {
                        Mode::Train => k * (g[i] - sum_dy[ch] / m - xh[i] * sum_dy_xhat[ch] / m),
                        Mode::Eval => k * g[i],
                    };
                }
            }
        }
        dx
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages (unbiased variance).
    pub fn absorb(&mut self, cache: &BnCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let unbias = if cache.count > 1 {
            cache.count as f64 / (cache.count - 1) as f64
        } else {
            1.0
        };
        for ch in 0..self.c {
            self.running_mean[ch] = (1.0 - BN_MOMENTUM) * self.running_mean[ch] + BN_MOMENTUM * cache.batch_mean[ch];
            self.running_var[ch] =
                (1.0 - BN_MOMENTUM) * self.running_var[ch] + BN_MOMENTUM * cache.batch_var[ch] * unbias;
        }
    }
}

impl Params for BatchNorm2d {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "gamma"), &mut self.gamma));
        out.push((join(prefix, "beta"), &mut self.beta));
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        out.push((join(prefix, "running_mean"), &self.running_mean));
        out.push((join(prefix, "running_var"), &self.running_var));
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        out.push((join(prefix, "running_mean"), &mut self.running_mean));
        out.push((join(prefix, "running_var"), &mut self.running_var));
    }
}

/// Pixel-weighted softmax cross-entropy over two or more classes.
///
/// `loss = sum_p w[y_p] * -ln softmax(z_p)[y_p] / sum_p w[y_p]`; returns the
/// loss and its gradient with respect to the logits.
pub fn weighted_cross_entropy(logits: &Tensor, labels: &[u8], weights: &[f64]) -> (f64, Tensor) {
    let plane = logits.plane();
    assert_eq!(labels.len(), logits.n * plane, "one label per pixel");
    assert_eq!(weights.len(), logits.c, "one weight per class");
    let classes = logits.c;
    let mut grad = Tensor::zeros(logits.n, logits.c, logits.h, logits.w);
    let mut total_w = 0.0;
    let mut loss = 0.0;
    let mut probs = vec![0.0; classes];
    for b in 0..logits.n {
        let z = logits.item(b);
        let g = grad.item_mut(b);
        for p in 0..plane {
            let y = labels[b * plane + p] as usize;
            let zmax = (0..classes).map(|c| z[c * plane + p]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..classes {
                probs[c] = (z[c * plane + p] - zmax).exp();
                sum += probs[c];
            }
            let wy = weights[y];
            total_w += wy;
            loss += wy * (sum.ln() - (z[y * plane + p] - zmax));
            for c in 0..classes {
                let pc = probs[c] / sum;
                g[c * plane + p] = wy * (pc - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    if total_w > 0.0 {
        grad.data.iter_mut().for_each(|v| *v /= total_w);
        (loss / total_w, grad)
    } else {
        (0.0, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    // Direct-loop convolution used to check the im2col/gemm path.
    fn naive_conv(c: &Conv2d, x: &Tensor) -> Tensor {
        let (oh, ow) = c.out_size(x.h, x.w);
        let mut y = Tensor::zeros(x.n, c.out_c, oh, ow);
        for b in 0..x.n {
            for o in 0..c.out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = c.bias[o];
                        for i in 0..c.in_c {
                            for ky in 0..c.k {
                                for kx in 0..c.k {
                                    let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                    let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                        s += c.weight[((o * c.in_c + i) * c.k + ky) * c.k + kx]
                                            * x.at(b, i, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        *y.at_mut(b, o, oy, ox) = s;
                    }
                }
            }
        }
        y
    }

    fn random_tensor(r: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut r = rng();
        for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0)] {
            let mut c = Conv2d::new(3, 4, k, s, p, &mut r);
            c.bias = vec![0.1, -0.2, 0.3, 0.0];
            let x = random_tensor(&mut r, 2, 3, 6, 6);
            let (y, _) = c.forward(&x);
            let yn = naive_conv(&c, &x);
            assert_eq!(y.shape(), yn.shape());
            assert!(y.data.iter().zip(&yn.data).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn conv3_preserves_spatial_size() {
        let mut r = rng();
        let c = Conv2d::conv3(2, 5, 1, &mut r);
        let (y, _) = c.forward(&Tensor::zeros(3, 2, 7, 5));
        assert_eq!(y.shape(), [3, 5, 7, 5]);
        let c = Conv2d::conv3(2, 5, 2, &mut r);
        assert_eq!(c.forward(&Tensor::zeros(1, 2, 8, 8)).0.shape(), [1, 5, 4, 4]);
    }

    #[test]
    fn transposed_conv_places_blocks() {
        let mut r = rng();
        let mut t = ConvTranspose2d::new(1, 1, 2, &mut r);
        t.weight = vec![1.0, 2.0, 3.0, 4.0];
        t.bias = vec![0.5];
        let x = Tensor::from_vec(1, 1, 1, 2, vec![1.0, 10.0]);
        let (y, _) = t.forward(&x);
        assert_eq!(y.shape(), [1, 1, 2, 4]);
        assert_eq!(y.data, vec![1.5, 2.5, 10.5, 20.5, 3.5, 4.5, 30.5, 40.5]);
    }

    #[test]
    fn batch_norm_train_normalises() {
        let mut r = rng();
        let bn = BatchNorm2d::new(2);
        let x = random_tensor(&mut r, 3, 2, 4, 4);
        let (y, _) = bn.forward(&x, Mode::Train);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| y.item(b)[ch * 16..(ch + 1) * 16].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn absorb_moves_running_stats() {
        let mut bn = BatchNorm2d::new(1);
        let x = Tensor::from_vec(1, 1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let (_, cache) = bn.forward(&x, Mode::Train);
        bn.absorb(&cache);
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        // unbiased var of 1..4 is 5/3
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        assert!(bn.running_var[0] > 0.0);
    }

    #[test]
    fn cross_entropy_of_confident_correct_logits_is_small() {
        let logits = Tensor::from_vec(1, 2, 1, 2, vec![10.0, -10.0, -10.0, 10.0]);
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 1], &[1.0, 1.0]);
        assert!(loss < 1e-8);
        let (loss, _) = weighted_cross_entropy(&logits, &[1, 0], &[1.0, 1.0]);
        assert!((loss - 20.0).abs() < 1e-6);
    }
}
