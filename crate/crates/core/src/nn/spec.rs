//! Architecture descriptions and analytic parameter accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Downsampling factors of the five encoder scales.
pub const SCALE_FACTORS: [usize; 5] = [2, 4, 8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Five stride-2 3×3 convolutions with rectifiers, built in-crate.
    Toy,
    /// A pretrained encoder described only by its output channels; its
    /// weights are not bundled.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub name: String,
    /// Output channels per scale, finest first.
    pub channels: Vec<usize>,
    /// Downsampling factor of each scale relative to the input.
    pub factors: Vec<usize>,
    pub encoder: EncoderKind,
    /// Negative slope of the rectifier after each toy stage.
    #[serde(default)]
    pub leak: f32,
}

impl BackboneSpec {
    pub fn toy(widths: &[usize]) -> Self {
        BackboneSpec {
            name: format!("toy{widths:?}"),
            channels: widths.to_vec(),
            factors: SCALE_FACTORS.to_vec(),
            encoder: EncoderKind::Toy,
            leak: 0.0,
        }
    }

    /// MobileNet-v2 feature taps at strides 2–32.
    pub fn mobilenet_v2() -> Self {
        BackboneSpec {
            name: "mobilenet_v2".into(),
            channels: vec![16, 24, 32, 96, 320],
            factors: SCALE_FACTORS.to_vec(),
            encoder: EncoderKind::External,
            leak: 0.0,
        }
    }

    /// ResNet-34 stem and residual stages at strides 2–32.
    pub fn resnet34() -> Self {
        BackboneSpec {
            name: "resnet34".into(),
            channels: vec![64, 64, 128, 256, 512],
            factors: SCALE_FACTORS.to_vec(),
            encoder: EncoderKind::External,
            leak: 0.0,
        }
    }

    pub fn with_leak(self, leak: f32) -> Self {
        BackboneSpec { leak, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != SCALE_FACTORS.len() || self.factors.len() != SCALE_FACTORS.len() {
            return Err(Error::Config(format!(
                "backbone `{}` must describe {} scales",
                self.name,
                SCALE_FACTORS.len()
            )));
        }
        if self.factors != SCALE_FACTORS {
            return Err(Error::Config(format!(
                "backbone `{}` factors {:?} must be {SCALE_FACTORS:?}",
                self.name, self.factors
            )));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return Err(Error::Config(format!(
                "backbone `{}` leak {} outside [0, 1)",
                self.name, self.leak
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config(format!(
                "backbone `{}` has a zero-width scale",
                self.name
            )));
        }
        Ok(())
    }
}

/// Rectifier leak of the toy presets, in the backbone and the head. Their
/// narrow layers lose most units under Adam with a plain ReLU.
pub const TOY_LEAK: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionDecoderSpec {
    /// Width every scale is compressed to.
    pub compress_channels: usize,
    pub compress_kernel: usize,
    pub attention_reduction: usize,
    pub head_kernel: usize,
    pub head_hidden_channels: usize,
    /// Negative slope of the rectifier between the head convolutions;
    /// zero gives a plain ReLU.
    #[serde(default)]
    pub head_leak: f32,
}

impl Default for FusionDecoderSpec {
    fn default() -> Self {
        FusionDecoderSpec {
            compress_channels: 16,
            compress_kernel: 3,
            attention_reduction: 4,
            head_kernel: 5,
            head_hidden_channels: 80,
            head_leak: 0.0,
        }
    }
}

impl FusionDecoderSpec {
    /// Channels entering the prediction head.
    pub fn concat_channels(&self) -> usize {
        self.compress_channels * SCALE_FACTORS.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.compress_channels == 0 || self.head_hidden_channels == 0 || self.attention_reduction == 0 {
            return Err(Error::Config(format!("zero-sized decoder dimension in {self:?}")));
        }
        if !(0.0..1.0).contains(&self.head_leak) {
            return Err(Error::Config(format!("head leak {} outside [0, 1)", self.head_leak)));
        }
        if self.compress_kernel.is_multiple_of(2) {
            return Err(Error::Config("compression kernel must be odd".into()));
        }
        if self.head_kernel != 5 {
            return Err(Error::Config(format!(
                "head kernel must be 5, got {}",
                self.head_kernel
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Relu,
    Softplus,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneSpec,
    pub decoder: FusionDecoderSpec,
    pub output_activation: OutputActivation,
    /// Initial bias of the last head convolution, in metres.
    pub output_bias: f32,
    /// Inputs are standardized as `(x - mean) / std` before the encoder.
    #[serde(default)]
    pub input_norm: InputNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputNorm {
    pub mean: f32,
    pub std: f32,
}

impl InputNorm {
    /// Statistics of the rendered training scenes.
    pub const SYNTHETIC: InputNorm = InputNorm { mean: 0.25, std: 0.125 };
}

impl Default for InputNorm {
    /// Per-channel averages of ImageNet statistics.
    fn default() -> Self {
        InputNorm { mean: 0.45, std: 0.225 }
    }
}

impl ModelConfig {
    pub fn new(backbone: BackboneSpec, decoder: FusionDecoderSpec) -> Self {
        ModelConfig {
            backbone,
            decoder,
            output_activation: OutputActivation::Relu,
            output_bias: 3.0,
            input_norm: InputNorm::default(),
        }
    }

    /// The full-size student: MobileNet-v2 taps with the default decoder.
    pub fn mobilenet_v2_student() -> Self {
        Self::new(BackboneSpec::mobilenet_v2(), FusionDecoderSpec::default())
    }

    pub fn resnet34_teacher() -> Self {
        Self::new(BackboneSpec::resnet34(), FusionDecoderSpec::default())
    }

    /// Small student for desk-scale experiments.
    pub fn toy_student() -> Self {
        Self::new(
            BackboneSpec::toy(&[4, 8, 12, 16, 24]).with_leak(TOY_LEAK),
            FusionDecoderSpec {
                compress_channels: 4,
                head_hidden_channels: 8,
                head_leak: TOY_LEAK,
                ..FusionDecoderSpec::default()
            },
        )
        .with_input_norm(InputNorm::SYNTHETIC)
    }

    /// Teacher with 2–4× the student's widths at every stage.
    pub fn toy_teacher() -> Self {
        Self::new(
            BackboneSpec::toy(&[12, 24, 32, 48, 64]).with_leak(TOY_LEAK),
            FusionDecoderSpec {
                compress_channels: 8,
                head_hidden_channels: 8,
                head_leak: TOY_LEAK,
                ..FusionDecoderSpec::default()
            },
        )
        .with_input_norm(InputNorm::SYNTHETIC)
    }

    pub fn with_input_norm(self, input_norm: InputNorm) -> Self {
        ModelConfig { input_norm, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.decoder.validate()?;
        if !(self.input_norm.std > 0.0 && self.input_norm.mean.is_finite() && self.input_norm.std.is_finite()) {
            return Err(Error::Config(
                "input normalization needs a finite mean and positive std".into(),
            ));
        }
        if !self.output_bias.is_finite() {
            return Err(Error::Config("output bias must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    /// `None` for external encoders, whose weights are not part of the crate.
    pub encoder: Option<usize>,
    pub decoder: usize,
}

impl ParameterCount {
    pub fn total(&self) -> Option<usize> {
        self.encoder.map(|e| e + self.decoder)
    }
}

fn conv_params(c_in: usize, c_out: usize, k: usize) -> usize {
    c_in * c_out * k * k + c_out
}

/// Squeeze and excite layers, each with bias.
fn attention_params(c: usize, reduction: usize) -> usize {
    let r = c.div_ceil(reduction);
    2 * c * r + r + c
}

pub fn count_decoder_parameters(channels: &[usize], d: &FusionDecoderSpec) -> usize {
    let per_scale: usize = channels
        .iter()
        .map(|&c| attention_params(c, d.attention_reduction) + conv_params(c, d.compress_channels, d.compress_kernel))
        .sum();
    let head = conv_params(
        channels.len() * d.compress_channels,
        d.head_hidden_channels,
        d.head_kernel,
    ) + conv_params(d.head_hidden_channels, 1, d.head_kernel);
    if channels.is_empty() {
        0
    } else {
        per_scale + head
    }
}

pub fn count_toy_encoder_parameters(widths: &[usize]) -> usize {
    let mut c_in = 3;
    widths
        .iter()
        .map(|&c| {
            let n = conv_params(c_in, c, 3);
            c_in = c;
            n
        })
        .sum()
}

/// Analytic count of every weight and bias in the configured model.
pub fn count_parameters(cfg: &ModelConfig) -> ParameterCount {
    ParameterCount {
        encoder: match cfg.backbone.encoder {
            EncoderKind::Toy => Some(count_toy_encoder_parameters(&cfg.backbone.channels)),
            EncoderKind::External => None,
        },
        decoder: count_decoder_parameters(&cfg.backbone.channels, &cfg.decoder),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_compression_block() {
        let d = FusionDecoderSpec::default();
        // 16 → 16 with a 3×3 kernel: 16·16·9 + 16.
        assert_eq!(conv_params(16, d.compress_channels, 3), 2320);
        let att = attention_params(16, 4);
        assert_eq!(att, 2 * 16 * 4 + 4 + 16);
        let head = conv_params(16, 80, 5) + conv_params(80, 1, 5);
        let block = count_decoder_parameters(&[16], &d) - head;
        assert_eq!(block, 2320 + 148);
    }

    #[test]
    fn mobilenet_decoder_budget() {
        let d = FusionDecoderSpec::default();
        assert_eq!(d.concat_channels(), 80);
        let n = count_decoder_parameters(&BackboneSpec::mobilenet_v2().channels, &d);
        // Per-scale attention 57_346, compression 70_352, head 162_081.
        assert_eq!(n, 289_779);
        let count = count_parameters(&ModelConfig::mobilenet_v2_student());
        assert_eq!(count.encoder, None);
        assert_eq!(count.total(), None);
    }

    #[test]
    fn empty_model_has_no_parameters() {
        assert_eq!(count_decoder_parameters(&[], &FusionDecoderSpec::default()), 0);
        assert_eq!(count_toy_encoder_parameters(&[]), 0);
        assert_eq!(ParameterCount::default().decoder, 0);
    }

    #[test]
    fn wider_compression_costs_more() {
        let mut cfg = ModelConfig::toy_student();
        let base = count_parameters(&cfg).total().unwrap();
        cfg.decoder.compress_channels *= 2;
        assert!(count_parameters(&cfg).total().unwrap() > base);
    }

    #[test]
    fn toy_capacity_gap() {
        let s = count_parameters(&ModelConfig::toy_student()).total().unwrap();
        let t = count_parameters(&ModelConfig::toy_teacher()).total().unwrap();
        assert!(t > 4 * s, "teacher {t} vs student {s}");
    }

    #[test]
    fn validation() {
        let mut cfg = ModelConfig::toy_student();
        cfg.decoder.head_kernel = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::toy_student();
        cfg.backbone.channels.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::toy_student();
        cfg.backbone.factors[4] = 64;
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::toy_teacher().validate().is_ok());
    }
}
