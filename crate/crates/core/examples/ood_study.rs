//! Imitation on matched versus out-of-domain auxiliary images.

use litedepth::data::{make_domains, DatasetHandle};
use litedepth::distill::{run_study, Setting, StudyConfig};

fn depth_range(ds: &DatasetHandle) -> litedepth::Result<(f32, f32)> {
    let mut range = (f32::INFINITY, f32::NEG_INFINITY);
    for i in 0..ds.len() {
        let (depth, mask) = ds.ground_truth(i)?;
        for (&d, _) in depth.iter().zip(mask).filter(|(_, &m)| m) {
            range = (range.0.min(d), range.1.max(d));
        }
    }
    Ok(range)
}

fn main() -> litedepth::Result<()> {
    let mut study = StudyConfig::default();
    study.domains.n_train = 300;
    study.domains.n_aux_matched = 600;
    study.domains.n_aux_ood = 600;
    study.experiment.epochs = 6;
    study.experiment.lr0 = 2e-3;
    study.seeds = vec![0];
    let d = make_domains(&study.domains, 0)?;
    println!("matched depths {:?}", depth_range(&d.auxiliary_labeled)?);
    println!("ood depths     {:?}", depth_range(&d.ood.relabeled(true))?);

    let results = run_study(&study, &Setting::OOD, |_, _, _| {})?;
    for s in results.summary(&Setting::OOD) {
        println!("{:>6}: δ1 {:.3}  rel {:.3}", s.setting, s.median_delta1, s.median_rel);
    }
    Ok(())
}
