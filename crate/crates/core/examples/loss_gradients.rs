//! Checks the analytic gradients of the composite and distillation losses
//! against central differences on random maps.

use litedepth::losses::gradcheck::{central_difference, max_relative_error, random_pair};
use litedepth::losses::{composite_loss, composite_loss_with_grad, kd_standard, DistillSample, KdWeight};
use ndarray::Array2;

fn main() -> litedepth::Result<()> {
    let mask = Array2::from_elem((6, 6), true);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let (pred, target) = random_pair(6, 6, trial);
        let (_, grad) = composite_loss_with_grad(pred.view(), target.view(), mask.view())?;
        let numeric = central_difference(&pred, 1e-6, |p| {
            composite_loss(p.view(), target.view(), mask.view()).unwrap().total
        });
        worst = worst.max(max_relative_error(&grad, &numeric));
    }
    println!("composite loss: worst relative error {worst:.2e}");

    let (student, teacher) = random_pair(6, 6, 99);
    let (_, truth) = random_pair(6, 6, 100);
    let objective = |s: &Array2<f64>| {
        let sample = DistillSample {
            student: s.view(),
            teacher: teacher.view(),
            ground_truth: Some(truth.view()),
            mask: mask.view(),
        };
        kd_standard(&[sample], KdWeight::DEFAULT).unwrap()
    };
    let analytic = objective(&student).grads.remove(0);
    let numeric = central_difference(&student, 1e-6, |s| objective(s).value);
    println!(
        "standard KD: relative error {:.2e}",
        max_relative_error(&analytic, &numeric)
    );
    Ok(())
}
