//! Saves a network, loads it back and confirms identical predictions.

use litedepth::nn::{load_checkpoint, save_checkpoint, DepthNet, ModelConfig};
use ndarray::Array4;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("litedepth-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("student.ckpt");

    let net = DepthNet::<f32>::new(ModelConfig::toy_student(), 42)?;
    save_checkpoint(&net, &path)?;
    let back: DepthNet<f32> = load_checkpoint(&path)?;

    let x = Array4::from_shape_fn((2, 3, 32, 32), |(b, c, i, j)| ((b + c + i * j) % 7) as f32 / 7.0);
    let same = net.forward(&x)? == back.forward(&x)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!(
        "{} parameters, {bytes} bytes, identical predictions: {same}",
        back.parameter_count()
    );
    Ok(())
}
