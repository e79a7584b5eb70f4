//! Setting 3 with growing auxiliary subsets.

use litedepth::distill::{aux_size_sweep, sweep_shape, StudyConfig};

fn main() -> litedepth::Result<()> {
    let mut study = StudyConfig::default();
    study.domains.n_train = 250;
    study.domains.n_aux_matched = 800;
    study.experiment.epochs = 6;
    study.experiment.lr0 = 2e-3;
    study.seeds = vec![0];
    let (curve, _) = aux_size_sweep(&study)?;
    for (size, d1) in &curve {
        println!("{size:>5} auxiliary images: δ1 {d1:.3}");
    }
    let (rising, plateau) = sweep_shape(&curve.iter().map(|c| c.1).collect::<Vec<_>>(), 0.01);
    println!("non-decreasing: {rising}, plateau: {plateau}");
    Ok(())
}
