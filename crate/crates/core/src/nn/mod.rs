//! Depth networks: layers, architecture specs, the full model and
//! checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod params;
pub mod scalar;
pub mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{images_to_batch, make_toy_backbone, DepthNet, FusionDecoder, Gradients, Tape, ToyBackbone};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use spec::{
    count_decoder_parameters, count_parameters, count_toy_encoder_parameters, BackboneSpec, EncoderKind,
    FusionDecoderSpec, InputNorm, ModelConfig, OutputActivation, ParameterCount, SCALE_FACTORS, TOY_LEAK,
};
