//! The encoder / fusion-decoder depth network with hand-written backward
//! passes.
//!
//! Data flow for an `H × W` input padded to multiples of 32:
//!
//! ```text
//! encoder scales 1/2 … 1/32
//!   → channel attention → 3×3 compression to `compress_channels`
//!   → bilinear upsampling of scales 1/4 … 1/32 by ×2 … ×16 to 1/2
//!   → concatenation → 5×5 conv → ReLU → 5×5 conv → output activation
//! ```
//!
//! The prediction is cropped back to `ceil(H/2) × ceil(W/2)`.

use ndarray::{concatenate, s, Array3, Array4, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    leaky_relu_backward_inplace, leaky_relu_inplace, relu_backward_inplace, relu_inplace, sigmoid, upsample_bilinear,
    upsample_bilinear_backward, AttentionCache, ChannelAttention, Conv2d, ConvCache,
};
use super::params::ParamStore;
use super::scalar::Scalar;
use super::spec::{BackboneSpec, FusionDecoderSpec, ModelConfig, OutputActivation};
use crate::data::sample::mix_seed;
use crate::error::{Error, Result};

/// Granularity the input is padded to: the coarsest scale's factor.
pub const INPUT_MULTIPLE: usize = 32;

/// Five stride-2 3×3 convolutions with rectifiers.
///
/// External encoder specs are instantiated as this stack with the same
/// per-scale widths, so the decoder sees identical feature shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackbone<T> {
    spec: BackboneSpec,
    params: ParamStore<T>,
    stages: Vec<Conv2d>,
}

/// Builds a toy encoder with He-initialized weights drawn from `seed`.
pub fn make_toy_backbone<T: Scalar>(widths: &[usize], seed: u64) -> Result<ToyBackbone<T>> {
    ToyBackbone::new(BackboneSpec::toy(widths), seed)
}

#[derive(Debug, Clone)]
pub struct BackboneTape<T> {
    caches: Vec<ConvCache<T>>,
}

impl<T: Scalar> ToyBackbone<T> {
    pub fn new(spec: BackboneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut c_in = 3;
        let stages = spec
            .channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = Conv2d::register(&mut params, &format!("stage{i}"), c_in, c, 3, 2, 1, &mut rng);
                c_in = c;
                conv
            })
            .collect();
        Ok(ToyBackbone { spec, params, stages })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Feature maps at factors 2, 4, 8, 16 and 32.
    pub fn forward(&self, x: &Array4<T>) -> Vec<Array4<T>> {
        self.forward_train(x).0
    }

    pub fn forward_train(&self, x: &Array4<T>) -> (Vec<Array4<T>>, BackboneTape<T>) {
        let mut feats: Vec<Array4<T>> = Vec::with_capacity(self.stages.len());
        let mut caches = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            let (mut y, cache) = conv.forward(&self.params, feats.last().unwrap_or(x));
            leaky_relu_inplace(&mut y, T::of(self.spec.leak as f64));
            feats.push(y);
            caches.push(cache);
        }
        (feats, BackboneTape { caches })
    }

    /// `grad_feats[s]` is `∂L/∂feats[s]`.
    pub fn backward(
        &self,
        tape: &BackboneTape<T>,
        feats: &[Array4<T>],
        mut grad_feats: Vec<Array4<T>>,
    ) -> Vec<ArrayD<T>> {
        let mut grads = self.params.zeros_like();
        for s in (0..self.stages.len()).rev() {
            let mut g = std::mem::replace(&mut grad_feats[s], Array4::zeros((0, 0, 0, 0)));
            leaky_relu_backward_inplace(&mut g, &feats[s], T::of(self.spec.leak as f64));
            if let Some(dx) = self.stages[s].backward(&self.params, &tape.caches[s], &g, &mut grads, s > 0) {
                grad_feats[s - 1] += &dx;
            }
        }
        grads
    }
}

/// Channel attention, per-scale compression and the two-layer head.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionDecoder<T> {
    spec: FusionDecoderSpec,
    activation: OutputActivation,
    params: ParamStore<T>,
    attention: Vec<ChannelAttention>,
    compress: Vec<Conv2d>,
    head_hidden: Conv2d,
    head_out: Conv2d,
}

#[derive(Debug, Clone)]
pub struct DecoderTape<T> {
    attention: Vec<AttentionCache<T>>,
    compress: Vec<ConvCache<T>>,
    compressed_dims: Vec<(usize, usize)>,
    head_hidden: ConvCache<T>,
    hidden: Array4<T>,
    head_out: ConvCache<T>,
    pre_activation: Array4<T>,
}

impl<T: Scalar> FusionDecoder<T> {
    pub fn new(
        spec: FusionDecoderSpec,
        in_channels: &[usize],
        activation: OutputActivation,
        output_bias: f32,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut attention = Vec::new();
        let mut compress = Vec::new();
        let (k, c) = (spec.compress_kernel, spec.compress_channels);
        for (i, &ch) in in_channels.iter().enumerate() {
            attention.push(ChannelAttention::register(
                &mut params,
                &format!("attention{i}"),
                ch,
                spec.attention_reduction,
                &mut rng,
            ));
            compress.push(Conv2d::register(
                &mut params,
                &format!("compress{i}"),
                ch,
                c,
                k,
                1,
                k / 2,
                &mut rng,
            ));
        }
        let hk = spec.head_kernel;
        let concat = c * in_channels.len();
        let head_hidden = Conv2d::register(
            &mut params,
            "head.0",
            concat,
            spec.head_hidden_channels,
            hk,
            1,
            hk / 2,
            &mut rng,
        );
        let head_out = Conv2d::register(
            &mut params,
            "head.1",
            spec.head_hidden_channels,
            1,
            hk,
            1,
            hk / 2,
            &mut rng,
        );
        let mut decoder = FusionDecoder {
            spec,
            activation,
            params,
            attention,
            compress,
            head_hidden,
            head_out,
        };
        if let Some((_, b)) = decoder.params.iter_mut().find(|(n, _)| *n == "head.1.bias") {
            b.fill(T::of(output_bias as f64));
        }
        Ok(decoder)
    }

    pub fn spec(&self) -> &FusionDecoderSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn n_scales(&self) -> usize {
        self.attention.len()
    }

    pub fn channel_attention(&self, scale: usize, features: &Array4<T>) -> Array4<T> {
        self.attention[scale].forward(&self.params, features).0
    }

    /// Attention followed by compression of one encoder scale.
    pub fn compress_scale(&self, scale: usize, features: &Array4<T>) -> Array4<T> {
        let attended = self.channel_attention(scale, features);
        self.compress[scale].forward(&self.params, &attended).0
    }

    /// Upsamples every compressed map to the finest scale, concatenates
    /// them and runs the head.
    pub fn fuse_and_predict(&self, compressed: &[Array4<T>]) -> Result<Array4<T>> {
        self.check_scales(compressed)?;
        let fused = fuse(compressed);
        let (mut hidden, _) = self.head_hidden.forward(&self.params, &fused);
        leaky_relu_inplace(&mut hidden, self.leak());
        let (out, _) = self.head_out.forward(&self.params, &hidden);
        Ok(self.activate(out))
    }

    fn leak(&self) -> T {
        T::of(self.spec.head_leak as f64)
    }

    fn check_scales(&self, maps: &[Array4<T>]) -> Result<()> {
        if maps.len() != self.n_scales() {
            return Err(Error::Dimension(format!(
                "expected {} scales, got {}",
                self.n_scales(),
                maps.len()
            )));
        }
        let (_, _, h0, w0) = maps[0].dim();
        for (s, m) in maps.iter().enumerate() {
            let f = 1 << s;
            let (_, c, h, w) = m.dim();
            if c != self.spec.compress_channels || h * f != h0 || w * f != w0 {
                return Err(Error::Dimension(format!(
                    "scale {s} map {:?} does not match 1/{f} of {h0}×{w0} with {} channels",
                    m.dim(),
                    self.spec.compress_channels
                )));
            }
        }
        Ok(())
    }

    fn activate(&self, mut out: Array4<T>) -> Array4<T> {
        match self.activation {
            OutputActivation::Relu => relu_inplace(&mut out),
            OutputActivation::Softplus => out.mapv_inplace(softplus),
            OutputActivation::None => {}
        }
        out
    }

    pub fn forward_train(&self, feats: &[Array4<T>]) -> Result<(Array4<T>, DecoderTape<T>)> {
        if feats.len() != self.n_scales() {
            return Err(Error::Dimension(format!(
                "expected {} encoder scales, got {}",
                self.n_scales(),
                feats.len()
            )));
        }
        let mut attention = Vec::with_capacity(feats.len());
        let mut compress = Vec::with_capacity(feats.len());
        let mut compressed = Vec::with_capacity(feats.len());
        for (s, f) in feats.iter().enumerate() {
            let (a, ac) = self.attention[s].forward(&self.params, f);
            let (c, cc) = self.compress[s].forward(&self.params, &a);
            attention.push(ac);
            compress.push(cc);
            compressed.push(c);
        }
        self.check_scales(&compressed)?;
        let compressed_dims = compressed.iter().map(|c| (c.dim().2, c.dim().3)).collect();
        let fused = fuse(&compressed);
        let (mut hidden, head_hidden) = self.head_hidden.forward(&self.params, &fused);
        leaky_relu_inplace(&mut hidden, self.leak());
        let (pre_activation, head_out) = self.head_out.forward(&self.params, &hidden);
        let out = self.activate(pre_activation.clone());
        Ok((
            out,
            DecoderTape {
                attention,
                compress,
                compressed_dims,
                head_hidden,
                hidden,
                head_out,
                pre_activation,
            },
        ))
    }

    /// Returns parameter gradients and `∂L/∂feats`.
    pub fn backward(
        &self,
        tape: &DecoderTape<T>,
        feats: &[Array4<T>],
        grad_out: &Array4<T>,
    ) -> (Vec<ArrayD<T>>, Vec<Array4<T>>) {
        let mut grads = self.params.zeros_like();
        let mut g = grad_out.clone();
        match self.activation {
            OutputActivation::Relu => relu_backward_inplace(&mut g, &tape.pre_activation),
            OutputActivation::Softplus => {
                ndarray::Zip::from(&mut g)
                    .and(&tape.pre_activation)
                    .for_each(|d, &z| *d *= sigmoid(z));
            }
            OutputActivation::None => {}
        }
        let mut g_hidden = self
            .head_out
            .backward(&self.params, &tape.head_out, &g, &mut grads, true)
            .expect("requested");
        leaky_relu_backward_inplace(&mut g_hidden, &tape.hidden, self.leak());
        let g_fused = self
            .head_hidden
            .backward(&self.params, &tape.head_hidden, &g_hidden, &mut grads, true)
            .expect("requested");
        let c = self.spec.compress_channels;
        let grad_feats = (0..self.n_scales())
            .map(|s| {
                let g_up = g_fused.slice(s![.., s * c..(s + 1) * c, .., ..]).to_owned();
                let g_c = upsample_bilinear_backward(&g_up, tape.compressed_dims[s]);
                let g_a = self.compress[s]
                    .backward(&self.params, &tape.compress[s], &g_c, &mut grads, true)
                    .expect("requested");
                self.attention[s].backward(&self.params, &feats[s], &tape.attention[s], &g_a, &mut grads)
            })
            .collect();
        (grads, grad_feats)
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    // ln(1 + e^z) = max(z, 0) + ln(1 + e^-|z|)
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn fuse<T: Scalar>(compressed: &[Array4<T>]) -> Array4<T> {
    let (_, _, h0, w0) = compressed[0].dim();
    let ups: Vec<Array4<T>> = compressed.iter().map(|c| upsample_bilinear(c, (h0, w0))).collect();
    let views: Vec<_> = ups.iter().map(|u| u.view()).collect();
    concatenate(Axis(1), &views).expect("matching spatial dims")
}

/// Complete network.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthNet<T> {
    config: ModelConfig,
    backbone: ToyBackbone<T>,
    decoder: FusionDecoder<T>,
}

/// Everything the backward pass needs from one training forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    input_dims: (usize, usize),
    padded_out: (usize, usize),
    feats: Vec<Array4<T>>,
    backbone: BackboneTape<T>,
    decoder: DecoderTape<T>,
}

/// Parameter gradients in [`DepthNet::parameters`] order.
pub type Gradients<T> = Vec<ArrayD<T>>;

impl<T: Scalar> DepthNet<T> {
    /// Instantiates the network; `seed` drives every initializer.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let backbone = ToyBackbone::new(config.backbone.clone(), mix_seed(seed, 1))?;
        let decoder = FusionDecoder::new(
            config.decoder,
            &config.backbone.channels,
            config.output_activation,
            config.output_bias,
            mix_seed(seed, 2),
        )?;
        Ok(DepthNet {
            config,
            backbone,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &ToyBackbone<T> {
        &self.backbone
    }

    pub fn decoder(&self) -> &FusionDecoder<T> {
        &self.decoder
    }

    /// Number of trainable scalars actually allocated.
    pub fn parameter_count(&self) -> usize {
        self.backbone.params.scalar_count() + self.decoder.params.scalar_count()
    }

    pub fn parameters(&self) -> impl Iterator<Item = (String, &ArrayD<T>)> {
        let b = self.backbone.params.iter().map(|(n, v)| (format!("backbone.{n}"), v));
        let d = self.decoder.params.iter().map(|(n, v)| (format!("decoder.{n}"), v));
        b.chain(d)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = (String, &mut ArrayD<T>)> {
        let b = self
            .backbone
            .params
            .iter_mut()
            .map(|(n, v)| (format!("backbone.{n}"), v));
        let d = self.decoder.params.iter_mut().map(|(n, v)| (format!("decoder.{n}"), v));
        b.chain(d)
    }

    /// Output size for an `h × w` input.
    pub fn output_dims(h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(2), w.div_ceil(2))
    }

    /// Standardizes and zero-pads to multiples of [`INPUT_MULTIPLE`].
    pub fn prepare_input(&self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let (hp, wp) = (h.next_multiple_of(INPUT_MULTIPLE), w.next_multiple_of(INPUT_MULTIPLE));
        let norm = self.config.input_norm;
        let (mean, inv) = (T::of(norm.mean as f64), T::of(1.0 / norm.std as f64));
        let mut out = Array4::zeros((n, c, hp, wp));
        out.slice_mut(s![.., .., ..h, ..w])
            .assign(&x.mapv(|v| (v - mean) * inv));
        out
    }

    fn check_input(&self, x: &Array4<T>) -> Result<()> {
        let (n, c, h, w) = x.dim();
        if c != 3 || n == 0 || h == 0 || w == 0 {
            return Err(Error::Dimension(format!("input must be N×3×H×W, got {:?}", x.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Depth prediction `N × 1 × ceil(H/2) × ceil(W/2)`.
    pub fn forward(&self, x: &Array4<T>) -> Result<Array4<T>> {
        self.forward_train(x).map(|(y, _)| y)
    }

    pub fn forward_train(&self, x: &Array4<T>) -> Result<(Array4<T>, Tape<T>)> {
        self.check_input(x)?;
        let (_, _, h, w) = x.dim();
        let (feats, backbone) = self.backbone.forward_train(&self.prepare_input(x));
        let (out, decoder) = self.decoder.forward_train(&feats)?;
        let (oh, ow) = Self::output_dims(h, w);
        let padded_out = (out.dim().2, out.dim().3);
        let y = out.slice(s![.., .., ..oh, ..ow]).to_owned();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((
            y,
            Tape {
                input_dims: (h, w),
                padded_out,
                feats,
                backbone,
                decoder,
            },
        ))
    }

    /// Gradients of a loss whose derivative with respect to the prediction
    /// is `grad_out`.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &Array4<T>) -> Gradients<T> {
        let (n, _, oh, ow) = grad_out.dim();
        assert_eq!((oh, ow), Self::output_dims(tape.input_dims.0, tape.input_dims.1));
        let mut g = Array4::zeros((n, 1, tape.padded_out.0, tape.padded_out.1));
        g.slice_mut(s![.., .., ..oh, ..ow]).assign(grad_out);
        let (dec_grads, grad_feats) = self.decoder.backward(&tape.decoder, &tape.feats, &g);
        let mut grads = self.backbone.backward(&tape.backbone, &tape.feats, grad_feats);
        grads.extend(dec_grads);
        grads
    }

    /// Same weights in another precision.
    pub fn cast<U: Scalar>(&self) -> DepthNet<U> {
        let mut out = DepthNet::<U>::new(self.config.clone(), 0).expect("config already validated");
        for ((_, dst), (_, src)) in out.parameters_mut().zip(self.parameters()) {
            *dst = src.mapv(|v| U::of(v.f64()));
        }
        out
    }
}

/// Stacks `H × W × 3` images into an `N × 3 × H × W` batch.
pub fn images_to_batch<'a, T: Scalar>(images: impl IntoIterator<Item = &'a Array3<f32>>) -> Result<Array4<T>> {
    let images: Vec<&Array3<f32>> = images.into_iter().collect();
    let Some(first) = images.first() else {
        return Err(Error::Dimension("empty image batch".into()));
    };
    let (h, w, _) = first.dim();
    let mut out = Array4::zeros((images.len(), 3, h, w));
    for (b, img) in images.iter().enumerate() {
        if img.dim() != (h, w, 3) {
            return Err(Error::Dimension(format!(
                "image {:?} in a batch of {h}×{w}×3",
                img.dim()
            )));
        }
        for c in 0..3 {
            out.slice_mut(s![b, c, .., ..])
                .assign(&img.slice(s![.., .., c]).mapv(|v| T::of(v as f64)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::composite_loss_with_grad;
    use crate::nn::spec::count_parameters;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn random_input(n: usize, h: usize, w: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_simple_fn((n, 3, h, w), || rng.gen_range(0.0..1.0))
    }

    fn loss_and_grad(net: &DepthNet<f64>, x: &Array4<f64>, targets: &[Array2<f64>]) -> (f64, Gradients<f64>) {
        let (y, tape) = net.forward_train(x).unwrap();
        let mut g = Array4::zeros(y.dim());
        let mut total = 0.0;
        for (b, t) in targets.iter().enumerate() {
            let mask = t.mapv(|v| v > 0.0);
            let (terms, grad) = composite_loss_with_grad(y.slice(s![b, 0, .., ..]), t.view(), mask.view()).unwrap();
            total += terms.total;
            g.slice_mut(s![b, 0, .., ..]).assign(&grad);
        }
        (total, net.backward(&tape, &g))
    }

    fn loss(net: &DepthNet<f64>, x: &Array4<f64>, targets: &[Array2<f64>]) -> f64 {
        loss_and_grad(net, x, targets).0
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let mut net = DepthNet::<f64>::new(ModelConfig::toy_student(), 3).unwrap();
        let x = random_input(2, 32, 32, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let targets: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_simple_fn((16, 16), || rng.gen_range(0.5..6.0)))
            .collect();
        let (_, analytic) = loss_and_grad(&net, &x, &targets);
        let shapes: Vec<usize> = net.parameters().map(|(_, v)| v.len()).collect();
        let step = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let t = rng.gen_range(0..shapes.len());
            let i = rng.gen_range(0..shapes[t]);
            let nudge = |net: &mut DepthNet<f64>, d: f64| {
                let (_, p) = net.parameters_mut().nth(t).unwrap();
                p.as_slice_mut().unwrap()[i] += d;
            };
            nudge(&mut net, step);
            let up = loss(&net, &x, &targets);
            nudge(&mut net, -2.0 * step);
            let down = loss(&net, &x, &targets);
            nudge(&mut net, step);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[t].as_slice().unwrap()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn instantiated_parameter_count_matches_analytic() {
        for cfg in [ModelConfig::toy_student(), ModelConfig::toy_teacher()] {
            let net = DepthNet::<f32>::new(cfg.clone(), 0).unwrap();
            assert_eq!(Some(net.parameter_count()), count_parameters(&cfg).total());
        }
        let cfg = ModelConfig::mobilenet_v2_student();
        let net = DepthNet::<f32>::new(cfg.clone(), 0).unwrap();
        let decoder = net.decoder().params().scalar_count();
        assert_eq!(decoder, count_parameters(&cfg).decoder);
    }

    #[test]
    fn full_resolution_output_is_half_size() {
        let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 0).unwrap();
        let y = net.forward(&Array4::from_elem((1, 3, 228, 304), 0.5)).unwrap();
        assert_eq!(y.dim(), (1, 1, 114, 152));
        let y = net.forward(&Array4::from_elem((1, 3, 33, 17), 0.5)).unwrap();
        assert_eq!(y.dim(), (1, 1, 17, 9));
    }

    #[test]
    fn batch_members_are_independent() {
        let net = DepthNet::<f64>::new(ModelConfig::toy_student(), 1).unwrap();
        let one = random_input(1, 32, 32, 2);
        let two = ndarray::concatenate(Axis(0), &[one.view(), one.view()]).unwrap();
        let y1 = net.forward(&one).unwrap();
        let y2 = net.forward(&two).unwrap();
        assert_eq!(y2.slice(s![0..1, .., .., ..]), y1);
        assert_eq!(y2.slice(s![1..2, .., .., ..]), y1);
    }

    #[test]
    fn initial_prediction_tracks_output_bias() {
        let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 1).unwrap();
        let y = net.forward(&Array4::zeros((1, 3, 32, 32))).unwrap();
        assert!(y.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 1).unwrap();
        let mut x = Array4::zeros((1, 3, 32, 32));
        x[[0, 1, 2, 3]] = f32::NAN;
        assert!(matches!(net.forward(&x), Err(Error::NonFinite(_))));
        assert!(matches!(
            net.forward(&Array4::zeros((1, 4, 32, 32))),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn cast_round_trip_is_exact_for_f32_weights() {
        let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 7).unwrap();
        assert_eq!(net.cast::<f64>().cast::<f32>(), net);
    }

    #[test]
    fn decoder_stages_compose_to_forward() {
        let net = DepthNet::<f64>::new(ModelConfig::toy_student(), 2).unwrap();
        let x = random_input(1, 64, 64, 3);
        let feats = net.backbone().forward(&net.prepare_input(&x));
        let compressed: Vec<_> = feats
            .iter()
            .enumerate()
            .map(|(s, f)| net.decoder().compress_scale(s, f))
            .collect();
        let y = net.decoder().fuse_and_predict(&compressed).unwrap();
        assert_eq!(y, net.forward(&x).unwrap());
        assert!(net.decoder().fuse_and_predict(&compressed[1..]).is_err());
    }

    #[test]
    fn images_stack_channel_first() {
        let mut img = Array3::<f32>::zeros((2, 3, 3));
        img[[1, 2, 0]] = 0.25;
        let b: Array4<f32> = images_to_batch([&img, &img]).unwrap();
        assert_eq!(b.dim(), (2, 3, 2, 3));
        assert_eq!(b[[1, 0, 1, 2]], 0.25);
        assert!(images_to_batch::<f32>([&img, &Array3::zeros((2, 2, 3))]).is_err());
    }
}
