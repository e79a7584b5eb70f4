//! Layer primitives with explicit forward caches and backward passes.
//!
//! Tensors are `N × C × H × W`. Every backward accumulates parameter
//! gradients into a slice aligned with the owning [`ParamStore`].

use ndarray::{s, Array1, Array2, Array4, ArrayD, ArrayView2, Axis, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use crate::data::image::bilinear_taps;

fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> ArrayD<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("finite std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || T::of(normal.sample(rng)))
}

fn as_matrix<T: Scalar>(w: &ArrayD<T>, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    w.view()
        .into_shape_with_order((rows, cols))
        .expect("contiguous parameter")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Cached input patches of one convolution call.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Array2<T>,
    input_dims: (usize, usize, usize, usize),
}

impl Conv2d {
    /// Registers He-initialized weights and zero biases.
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = store.push(
            format!("{name}.weight"),
            he_normal(&[out_channels, in_channels, kernel, kernel], fan_in, rng),
        );
        let bias = store.push(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_channels])));
        Conv2d {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let span = |n: usize| (n + 2 * self.padding - self.kernel) / self.stride + 1;
        (span(h), span(w))
    }

    fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array4<T>) -> (Array4<T>, ConvCache<T>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        if self.stride == 1 {
            return self.forward_direct(store, x);
        }
        let (ho, wo) = self.output_dims(h, w);
        let cols = self.im2col(x, ho, wo);
        let wmat = as_matrix(store.get(self.weight), self.out_channels, self.patch_rows());
        let out_mat = wmat.dot(&cols);
        let bias = store.get(self.bias);
        let hw = ho * wo;
        let mut out = Array4::zeros((n, self.out_channels, ho, wo));
        {
            let dst = out.as_slice_mut().expect("fresh array");
            for co in 0..self.out_channels {
                let src = out_mat.row(co);
                let src = src.as_slice().expect("row-major product");
                let bv = bias[co];
                for b in 0..n {
                    let d = &mut dst[(b * self.out_channels + co) * hw..][..hw];
                    for (o, &v) in d.iter_mut().zip(&src[b * hw..][..hw]) {
                        *o = v + bv;
                    }
                }
            }
        }
        (
            out,
            ConvCache {
                cols,
                input_dims: (n, c, h, w),
            },
        )
    }

    /// Accumulates `∂L/∂weight` and `∂L/∂bias` into `grads`; returns
    /// `∂L/∂input` when requested.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &ConvCache<T>,
        grad_out: &Array4<T>,
        grads: &mut [ArrayD<T>],
        input_grad: bool,
    ) -> Option<Array4<T>> {
        if self.stride == 1 {
            return self.backward_direct(store, cache, grad_out, grads, input_grad);
        }
        let (n, co, ho, wo) = grad_out.dim();
        let hw = ho * wo;
        let mut gmat = Array2::<T>::zeros((co, n * hw));
        let gsrc = grad_out.as_standard_layout();
        let gsrc = gsrc.as_slice().expect("standard layout");
        for c in 0..co {
            let mut grow = gmat.row_mut(c);
            let grow = grow.as_slice_mut().expect("fresh array");
            for b in 0..n {
                grow[b * hw..][..hw].copy_from_slice(&gsrc[(b * co + c) * hw..][..hw]);
            }
        }
        {
            let dw = gmat.dot(&cache.cols.t());
            let gw = &mut grads[self.weight.0];
            let gw = gw.as_slice_mut().expect("contiguous gradient");
            for (g, &v) in gw.iter_mut().zip(dw.iter()) {
                *g += v;
            }
            let gb = &mut grads[self.bias.0];
            for (c, g) in gb.iter_mut().enumerate() {
                *g += gmat.row(c).sum();
            }
        }
        if !input_grad {
            return None;
        }
        let wmat = as_matrix(store.get(self.weight), self.out_channels, self.patch_rows());
        let dcols = wmat.t().dot(&gmat);
        Some(self.col2im(&dcols, cache.input_dims, ho, wo))
    }

    /// Stride-1 convolution as shifted multiply-adds over the zero-padded
    /// planes. Outputs live on the padded grid: output `(oh, ow)` sits at
    /// `oh * wp + ow`, and the `wp - wo` trailing slots of each row are
    /// scratch. The cache holds the padded input as `(N·C) × (Hp·Wp)`.
    fn forward_direct<T: Scalar>(&self, store: &ParamStore<T>, x: &Array4<T>) -> (Array4<T>, ConvCache<T>) {
        let (n, c, h, w) = x.dim();
        let (k, p, co) = (self.kernel, self.padding, self.out_channels);
        let (ho, wo) = self.output_dims(h, w);
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let len = (ho - 1) * wp + wo;
        let mut padded = Array4::<T>::zeros((n, c, hp, wp));
        padded.slice_mut(s![.., .., p..p + h, p..p + w]).assign(x);
        let xs = padded.as_slice().expect("fresh array");
        let weight = store.get(self.weight);
        let weight = weight.as_slice().expect("contiguous parameter");
        let bias = store.get(self.bias);
        let mut grid = vec![T::zero(); co * len];
        let mut out = Array4::zeros((n, co, ho, wo));
        let dst = out.as_slice_mut().expect("fresh array");
        let taps = c * k * k;
        let mut terms = Vec::with_capacity(taps);
        for b in 0..n {
            let planes = &xs[b * c * hp * wp..][..c * hp * wp];
            for (o, acc) in grid.chunks_exact_mut(len).enumerate() {
                terms.clear();
                let mut wi = weight[o * taps..][..taps].iter();
                for ci in 0..c {
                    for ki in 0..k {
                        for kj in 0..k {
                            terms.push((*wi.next().expect("tap weight"), ci * hp * wp + ki * wp + kj));
                        }
                    }
                }
                correlate(acc, planes, &terms);
            }
            for (o, acc) in grid.chunks_exact(len).enumerate() {
                let d = &mut dst[(b * co + o) * ho * wo..][..ho * wo];
                let bv = bias[o];
                for oh in 0..ho {
                    for (v, &a) in d[oh * wo..][..wo].iter_mut().zip(&acc[oh * wp..][..wo]) {
                        *v = a + bv;
                    }
                }
            }
        }
        let cols = padded
            .into_shape_with_order((n * c, hp * wp))
            .expect("contiguous padded input");
        (
            out,
            ConvCache {
                cols,
                input_dims: (n, c, h, w),
            },
        )
    }

    fn backward_direct<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        cache: &ConvCache<T>,
        grad_out: &Array4<T>,
        grads: &mut [ArrayD<T>],
        input_grad: bool,
    ) -> Option<Array4<T>> {
        let (n, c, h, w) = cache.input_dims;
        let (_, co, ho, wo) = grad_out.dim();
        let (k, p) = (self.kernel, self.padding);
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let len = (ho - 1) * wp + wo;
        let xs = cache.cols.as_slice().expect("contiguous cache");
        let gsrc = grad_out.as_standard_layout();
        let gsrc = gsrc.as_slice().expect("standard layout");
        let weight = store.get(self.weight);
        let weight = weight.as_slice().expect("contiguous parameter");
        let mut dw = vec![T::zero(); weight.len()];
        let mut db = vec![T::zero(); co];
        // Gradient planes shifted right by the largest tap offset, so the
        // input gradient is a correlation over non-negative indices.
        let front = (k - 1) * wp + (k - 1);
        let span = front + hp * wp;
        let taps = c * k * k;
        let mut grid = vec![T::zero(); co * span];
        let mut terms = Vec::with_capacity(co * k * k);
        let mut dx = if input_grad {
            vec![T::zero(); n * c * hp * wp]
        } else {
            Vec::new()
        };
        for b in 0..n {
            for (o, g) in grid.chunks_exact_mut(span).enumerate() {
                let src = &gsrc[(b * co + o) * ho * wo..][..ho * wo];
                for oh in 0..ho {
                    g[front + oh * wp..][..wo].copy_from_slice(&src[oh * wo..][..wo]);
                }
                db[o] += src.iter().copied().sum::<T>();
            }
            for ci in 0..c {
                let plane = &xs[(b * c + ci) * hp * wp..][..hp * wp];
                for ki in 0..k {
                    for kj in 0..k {
                        let src = &plane[ki * wp + kj..][..len];
                        for (o, g) in grid.chunks_exact(span).enumerate() {
                            dw[o * taps + (ci * k + ki) * k + kj] += dot(&g[front..][..len], src);
                        }
                    }
                }
                if input_grad {
                    // Only rows inside the unpadded image are needed.
                    terms.clear();
                    for o in 0..co {
                        for ki in 0..k {
                            for kj in 0..k {
                                let wv = weight[o * taps + (ci * k + ki) * k + kj];
                                terms.push((wv, o * span + front + p * wp - (ki * wp + kj)));
                            }
                        }
                    }
                    let d = &mut dx[(b * c + ci) * hp * wp..][..hp * wp];
                    correlate(&mut d[p * wp..(p + h) * wp], &grid, &terms);
                }
            }
        }
        let gw = grads[self.weight.0].as_slice_mut().expect("contiguous gradient");
        gw.iter_mut().zip(&dw).for_each(|(g, &v)| *g += v);
        let gb = grads[self.bias.0].as_slice_mut().expect("contiguous gradient");
        gb.iter_mut().zip(&db).for_each(|(g, &v)| *g += v);
        if !input_grad {
            return None;
        }
        let dx = Array4::from_shape_vec((n, c, hp, wp), dx).expect("sized above");
        Some(dx.slice(s![.., .., p..p + h, p..p + w]).to_owned())
    }

    fn im2col<T: Scalar>(&self, x: &Array4<T>, ho: usize, wo: usize) -> Array2<T> {
        let (n, c, h, w) = x.dim();
        let (k, st, p) = (self.kernel, self.stride, self.padding as isize);
        let x = x.as_standard_layout();
        let x = x.as_slice().expect("standard layout");
        let ncols = n * ho * wo;
        let mut col = vec![T::zero(); c * k * k * ncols];
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let dst = &mut col[row * ncols..(row + 1) * ncols];
                    for b in 0..n {
                        let plane = &x[(b * c + ci) * h * w..][..h * w];
                        for oh in 0..ho {
                            let ih = (oh * st + ki) as isize - p;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let src = &plane[ih as usize * w..][..w];
                            let drow = &mut dst[(b * ho + oh) * wo..][..wo];
                            let (lo, hi) = valid_span(kj, st, p, w, wo);
                            let start = (lo * st + kj) as isize - p;
                            if st == 1 {
                                drow[lo..hi].copy_from_slice(&src[start as usize..][..hi - lo]);
                            } else {
                                for (i, d) in drow[lo..hi].iter_mut().enumerate() {
                                    *d = src[start as usize + i * st];
                                }
                            }
                        }
                    }
                }
            }
        }
        Array2::from_shape_vec((c * k * k, ncols), col).expect("sized above")
    }

    fn col2im<T: Scalar>(
        &self,
        cols: &Array2<T>,
        (n, c, h, w): (usize, usize, usize, usize),
        ho: usize,
        wo: usize,
    ) -> Array4<T> {
        let (k, st, p) = (self.kernel, self.stride, self.padding as isize);
        let cols = cols.as_standard_layout();
        let cols = cols.as_slice().expect("standard layout");
        let ncols = n * ho * wo;
        let mut out = vec![T::zero(); n * c * h * w];
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for b in 0..n {
                        let plane = &mut out[(b * c + ci) * h * w..][..h * w];
                        for oh in 0..ho {
                            let ih = (oh * st + ki) as isize - p;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let drow = &mut plane[ih as usize * w..][..w];
                            let srow = &src[(b * ho + oh) * wo..][..wo];
                            let (lo, hi) = valid_span(kj, st, p, w, wo);
                            let start = ((lo * st + kj) as isize - p) as usize;
                            for (i, &v) in srow[lo..hi].iter().enumerate() {
                                drow[start + i * st] += v;
                            }
                        }
                    }
                }
            }
        }
        Array4::from_shape_vec((n, c, h, w), out).expect("sized above")
    }
}

const BLOCK: usize = 32;

/// `out[j] = Σ w · src[off + j]` over `terms = [(w, off)]`, block by block
/// so each block's partial sums stay in registers.
fn correlate<T: Scalar>(out: &mut [T], src: &[T], terms: &[(T, usize)]) {
    for (bi, chunk) in out.chunks_mut(BLOCK).enumerate() {
        let j = bi * BLOCK;
        let mut acc = [T::zero(); BLOCK];
        if chunk.len() == BLOCK {
            for &(w, off) in terms {
                let x: &[T; BLOCK] = src[off + j..][..BLOCK].try_into().expect("full block");
                for t in 0..BLOCK {
                    acc[t] += w * x[t];
                }
            }
        } else {
            for &(w, off) in terms {
                for (a, &v) in acc.iter_mut().zip(&src[off + j..][..chunk.len()]) {
                    *a += w * v;
                }
            }
        }
        let bl = chunk.len();
        chunk.copy_from_slice(&acc[..bl]);
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

/// Output columns `lo..hi` whose tap `kj` lands inside a row of width `w`.
fn valid_span(kj: usize, st: usize, p: isize, w: usize, wo: usize) -> (usize, usize) {
    let first = p - kj as isize;
    let lo = if first > 0 { (first as usize).div_ceil(st) } else { 0 };
    let last = w as isize - 1 + p - kj as isize;
    let hi = if last < 0 { 0 } else { (last as usize / st + 1).min(wo) };
    (lo.min(hi), hi)
}

/// Fully connected layer on `N × in` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.push(
            format!("{name}.weight"),
            he_normal(&[out_features, in_features], in_features, rng),
        );
        let bias = store.push(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_features])));
        Linear {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    fn weights<'a, T: Scalar>(&self, store: &'a ParamStore<T>) -> ArrayView2<'a, T> {
        as_matrix(store.get(self.weight), self.out_features, self.in_features)
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array2<T>) -> Array2<T> {
        let bias = store
            .get(self.bias)
            .view()
            .into_shape_with_order(self.out_features)
            .expect("1-d bias");
        x.dot(&self.weights(store).t()) + bias
    }

    /// `x` is the layer input; returns `∂L/∂x`.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array2<T>,
        grad_out: &Array2<T>,
        grads: &mut [ArrayD<T>],
    ) -> Array2<T> {
        let dw = grad_out.t().dot(x);
        for (g, &v) in grads[self.weight.0].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        let db: Array1<T> = grad_out.sum_axis(Axis(0));
        for (g, &v) in grads[self.bias.0].iter_mut().zip(db.iter()) {
            *g += v;
        }
        grad_out.dot(&self.weights(store))
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Array4<T>) {
    x.mapv_inplace(|v| v.max(T::zero()));
}

/// `max(v, leak · v)`; `leak = 0` is a plain rectifier.
pub fn leaky_relu_inplace<T: Scalar>(x: &mut Array4<T>, leak: T) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { v * leak });
}

/// Backward of [`leaky_relu_inplace`] given its output.
pub fn leaky_relu_backward_inplace<T: Scalar>(grad: &mut Array4<T>, output: &Array4<T>, leak: T) {
    ndarray::Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g *= leak;
        }
    });
}

/// Zeroes `grad` where the rectified output was not positive.
pub fn relu_backward_inplace<T: Scalar>(grad: &mut Array4<T>, output: &Array4<T>) {
    ndarray::Zip::from(grad).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero();
        }
    });
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Bilinear resize of the spatial axes (pixel centres at half-integers).
pub fn upsample_bilinear<T: Scalar>(x: &Array4<T>, target: (usize, usize)) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    if (h, w) == target {
        return x.clone();
    }
    let rows = bilinear_taps(h, target.0);
    let cols = bilinear_taps(w, target.1);
    let mut out = Array4::zeros((n, c, target.0, target.1));
    for b in 0..n {
        for ch in 0..c {
            let src = x.slice(s![b, ch, .., ..]);
            let mut dst = out.slice_mut(s![b, ch, .., ..]);
            for (oi, r) in rows.iter().enumerate() {
                let (fr, fr1) = (T::of(r.frac), T::of(1.0 - r.frac));
                for (oj, cc) in cols.iter().enumerate() {
                    let (fc, fc1) = (T::of(cc.frac), T::of(1.0 - cc.frac));
                    let top = src[[r.lo, cc.lo]] * fc1 + src[[r.lo, cc.hi]] * fc;
                    let bottom = src[[r.hi, cc.lo]] * fc1 + src[[r.hi, cc.hi]] * fc;
                    dst[[oi, oj]] = top * fr1 + bottom * fr;
                }
            }
        }
    }
    out
}

pub fn upsample_bilinear_backward<T: Scalar>(grad_out: &Array4<T>, source: (usize, usize)) -> Array4<T> {
    let (n, c, th, tw) = grad_out.dim();
    if (th, tw) == source {
        return grad_out.clone();
    }
    let rows = bilinear_taps(source.0, th);
    let cols = bilinear_taps(source.1, tw);
    let mut out = Array4::zeros((n, c, source.0, source.1));
    for b in 0..n {
        for ch in 0..c {
            let g = grad_out.slice(s![b, ch, .., ..]);
            let mut dst = out.slice_mut(s![b, ch, .., ..]);
            for (oi, r) in rows.iter().enumerate() {
                let (fr, fr1) = (T::of(r.frac), T::of(1.0 - r.frac));
                for (oj, cc) in cols.iter().enumerate() {
                    let (fc, fc1) = (T::of(cc.frac), T::of(1.0 - cc.frac));
                    let v = g[[oi, oj]];
                    dst[[r.lo, cc.lo]] += v * fr1 * fc1;
                    dst[[r.lo, cc.hi]] += v * fr1 * fc;
                    dst[[r.hi, cc.lo]] += v * fr * fc1;
                    dst[[r.hi, cc.hi]] += v * fr * fc;
                }
            }
        }
    }
    out
}

/// Squeeze-and-excitation gating: global average pool, `C → ⌈C/r⌉ → C`
/// bottleneck with a rectifier, logistic gate per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAttention {
    pub squeeze: Linear,
    pub excite: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    pooled: Array2<T>,
    hidden: Array2<T>,
    gates: Array2<T>,
}

impl<T: Scalar> AttentionCache<T> {
    pub fn gates(&self) -> &Array2<T> {
        &self.gates
    }
}

pub fn reduced_channels(channels: usize, reduction: usize) -> usize {
    channels.div_ceil(reduction.max(1))
}

impl ChannelAttention {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let hidden = reduced_channels(channels, reduction);
        ChannelAttention {
            squeeze: Linear::register(store, &format!("{name}.squeeze"), channels, hidden, rng),
            excite: Linear::register(store, &format!("{name}.excite"), hidden, channels, rng),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let (c, r) = (self.squeeze.in_features, self.squeeze.out_features);
        2 * c * r + r + c
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Array4<T>) -> (Array4<T>, AttentionCache<T>) {
        let (n, c, h, w) = x.dim();
        let inv = T::of(1.0 / (h * w) as f64);
        let pooled = Array2::from_shape_fn((n, c), |(b, ch)| x.slice(s![b, ch, .., ..]).sum() * inv);
        let hidden = self.squeeze.forward(store, &pooled).mapv(|v| v.max(T::zero()));
        let gates = self.excite.forward(store, &hidden).mapv(sigmoid);
        let mut out = x.clone();
        for b in 0..n {
            for ch in 0..c {
                let g = gates[[b, ch]];
                out.slice_mut(s![b, ch, .., ..]).mapv_inplace(|v| v * g);
            }
        }
        (out, AttentionCache { pooled, hidden, gates })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        x: &Array4<T>,
        cache: &AttentionCache<T>,
        grad_out: &Array4<T>,
        grads: &mut [ArrayD<T>],
    ) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let mut dx = grad_out.clone();
        let mut dz = Array2::<T>::zeros((n, c));
        for b in 0..n {
            for ch in 0..c {
                let g = cache.gates[[b, ch]];
                let go = grad_out.slice(s![b, ch, .., ..]);
                let xi = x.slice(s![b, ch, .., ..]);
                let dgate = go.iter().zip(xi.iter()).map(|(&a, &v)| a * v).sum::<T>();
                dz[[b, ch]] = dgate * g * (T::one() - g);
                dx.slice_mut(s![b, ch, .., ..]).mapv_inplace(|v| v * g);
            }
        }
        let mut dhidden = self.excite.backward(store, &cache.hidden, &dz, grads);
        ndarray::Zip::from(&mut dhidden).and(&cache.hidden).for_each(|d, &hv| {
            if hv <= T::zero() {
                *d = T::zero();
            }
        });
        let dpooled = self.squeeze.backward(store, &cache.pooled, &dhidden, grads);
        let inv = T::of(1.0 / (h * w) as f64);
        for b in 0..n {
            for ch in 0..c {
                let d = dpooled[[b, ch]] * inv;
                dx.slice_mut(s![b, ch, .., ..]).mapv_inplace(|v| v + d);
            }
        }
        dx
    }
}
