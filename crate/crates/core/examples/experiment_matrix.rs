//! The teacher/student experiment matrix over several seeds, written as a
//! per-epoch CSV plus a median summary.
//!
//! cargo run --release --example experiment_matrix -- [CSV]

use litedepth::distill::{run_study, write_curve_csv, Setting, StudyConfig};

fn main() -> litedepth::Result<()> {
    let csv = std::env::args().nth(1).unwrap_or_else(|| "matrix.csv".into());
    let mut study = StudyConfig::default();
    study.domains.n_train = 300;
    study.domains.n_aux_matched = 600;
    study.experiment.epochs = 6;
    study.experiment.lr0 = 2e-3;
    let results = run_study(&study, &Setting::MATRIX, |s, seed, r| {
        eprintln!("{s:>14} seed {seed}: δ1 {:.3}", r.final_metrics.delta1)
    })?;
    write_curve_csv(csv.as_ref(), &results.rows(&Setting::MATRIX))?;
    for s in results.summary(&Setting::MATRIX) {
        println!(
            "{:>14}  median δ1 {:.3}  rmse {:.3}  rel {:.3}",
            s.setting, s.median_delta1, s.median_rmse, s.median_rel
        );
    }
    Ok(())
}
