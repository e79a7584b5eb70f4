//! Trains one teacher, then the student under every objective: supervised,
//! standard KD and the three auxiliary-data variants.

use litedepth::data::{make_domains, DomainConfig};
use litedepth::distill::{
    predict_dataset, train_student, train_teacher, ExperimentConfig, Mode, TeacherTargets, TrainingSets,
};

fn main() -> litedepth::Result<()> {
    let domains = make_domains(
        &DomainConfig {
            n_train: 300,
            n_aux_matched: 600,
            ..DomainConfig::default()
        },
        1,
    )?;
    let (train, held_out) = domains.original.split(0.2, 1)?;
    let sets = TrainingSets::new(train, held_out);
    let base = ExperimentConfig {
        epochs: 6,
        lr0: 2e-3,
        seed: 1,
        ..ExperimentConfig::default()
    };
    let (teacher, t) = train_teacher(&base, &sets)?;
    println!("{:>20}: δ1 {:.3}", "teacher", t.final_metrics.delta1);

    let on_x = predict_dataset(&teacher, &sets.original, 32)?;
    let on_u = predict_dataset(&teacher, &domains.auxiliary, 32)?;
    for mode in [
        Mode::Supervised,
        Mode::KdStandard,
        Mode::KdAuxOnly,
        Mode::KdMixedUnlabeled,
        Mode::KdMixedLabeled,
    ] {
        let run_sets = match mode {
            Mode::Supervised | Mode::KdStandard => sets.clone(),
            Mode::KdMixedLabeled => sets.with_auxiliary(domains.auxiliary_labeled.clone()),
            _ => sets.with_auxiliary(domains.auxiliary.clone()),
        };
        let targets = TeacherTargets {
            original: &on_x,
            auxiliary: &on_u,
        };
        let (_, r) = train_student(&base.with_mode(mode), &run_sets, mode.uses_teacher().then_some(targets))?;
        println!(
            "{:>20}: δ1 {:.3}  rmse {:.3}",
            format!("{mode:?}"),
            r.final_metrics.delta1,
            r.final_metrics.rmse
        );
    }
    Ok(())
}
