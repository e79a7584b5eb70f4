//! Parameter accounting and output geometry of the fusion-decoder network.

use litedepth::nn::{count_parameters, DepthNet, ModelConfig};
use ndarray::Array4;

fn main() -> litedepth::Result<()> {
    for (name, cfg) in [
        ("mobilenet_v2", ModelConfig::mobilenet_v2_student()),
        ("resnet34", ModelConfig::resnet34_teacher()),
        ("toy_student", ModelConfig::toy_student()),
        ("toy_teacher", ModelConfig::toy_teacher()),
    ] {
        let c = count_parameters(&cfg);
        let encoder = c.encoder.map_or("external".to_string(), |n| n.to_string());
        println!("{name:>13}: encoder {encoder:>9}, decoder {:>7}", c.decoder);
    }

    let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 0)?;
    let y = net.forward(&Array4::zeros((1, 3, 228, 304)))?;
    println!("228x304 input -> {:?} depth map", &y.shape()[2..]);
    println!("instantiated student scalars: {}", net.parameter_count());
    Ok(())
}
