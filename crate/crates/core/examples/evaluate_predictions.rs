//! Depth metrics on a prediction with known error structure.

use litedepth::metrics::evaluate;
use ndarray::Array2;

fn main() -> litedepth::Result<()> {
    let gt = Array2::from_shape_fn((48, 64), |(i, j)| 1.0 + 0.05 * i as f64 + 0.02 * j as f64);
    let mask = gt.mapv(|d| d < 3.0);
    for (name, pred) in [
        ("exact", gt.clone()),
        ("10% too far", gt.mapv(|d| d * 1.1)),
        ("30% too far", gt.mapv(|d| d * 1.3)),
        ("offset 0.5 m", gt.mapv(|d| d + 0.5)),
    ] {
        let m = evaluate(pred.view(), gt.view(), mask.view())?;
        println!(
            "{name:>13}: rmse {:.3}  rel {:.3}  δ1 {:.3}  δ2 {:.3}  δ3 {:.3}",
            m.rmse, m.rel, m.delta1, m.delta2, m.delta3
        );
    }
    Ok(())
}
