//! Supervised training of the toy teacher, with a per-epoch held-out log
//! and a checkpoint at the end.
//!
//! cargo run --release --example train_teacher -- [CHECKPOINT]

use litedepth::data::{make_domains, DomainConfig};
use litedepth::distill::{train_teacher, ExperimentConfig, Mode, TrainingSets};
use litedepth::nn::save_checkpoint;

fn main() -> litedepth::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "teacher.ckpt".into());
    let domains = make_domains(
        &DomainConfig {
            n_train: 400,
            ..DomainConfig::default()
        },
        0,
    )?;
    let (train, held_out) = domains.original.split(0.2, 0)?;
    let cfg = ExperimentConfig {
        mode: Mode::Supervised,
        epochs: 8,
        lr0: 2e-3,
        ..ExperimentConfig::default()
    };
    let (net, report) = train_teacher(&cfg, &TrainingSets::new(train, held_out))?;
    for e in &report.epochs {
        println!(
            "epoch {:>2}  lr {:.0e}  loss {:>7.4}  rmse {:.3}  δ1 {:.3}",
            e.epoch, e.lr, e.loss, e.metrics.rmse, e.metrics.delta1
        );
    }
    save_checkpoint(&net, path.as_ref())?;
    println!("{} parameters saved to {path}", net.parameter_count());
    Ok(())
}
