use std::time::Instant;

use ndarray::{s, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Mode, TrainingSets};
use super::optim::{lr_schedule_with, Adam};
use super::report::{config_hash, EpochRecord, Role, TrainReport};
use crate::data::{mix_seed, DatasetHandle};
use crate::error::{Error, Result};
use crate::losses::{
    kd_mixed_labeled, kd_mixed_unlabeled, kd_standard, kd_unlabeled_only, supervised, DistillSample, Objective,
};
use crate::metrics::{MetricAccumulator, MetricReport};
use crate::nn::{images_to_batch, DepthNet};

const TEACHER_INIT: u64 = 0x7EAC;
const STUDENT_INIT: u64 = 0x57D7;
const AUX_DRAWS: u64 = 0xA0C5;

/// Teacher predictions aligned with the training sets, index for index.
#[derive(Debug, Clone, Copy)]
pub struct TeacherTargets<'a> {
    pub original: &'a [Array2<f32>],
    pub auxiliary: &'a [Array2<f32>],
}

/// Runs `net` over every image of `ds` without touching ground truth.
pub fn predict_dataset(net: &DepthNet<f32>, ds: &DatasetHandle, batch_size: usize) -> Result<Vec<Array2<f32>>> {
    let mut out = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let x = images_to_batch::<f32>(chunk.iter().map(|&i| ds.rgb(i)))?;
        let y = net.forward(&x)?;
        for b in 0..chunk.len() {
            out.push(y.slice(s![b, 0, .., ..]).to_owned());
        }
    }
    Ok(out)
}

/// Pooled metrics of `net` on a labeled dataset.
pub fn evaluate_model(net: &DepthNet<f32>, ds: &DatasetHandle, batch_size: usize) -> Result<MetricReport> {
    let preds = predict_dataset(net, ds, batch_size)?;
    let mut acc = MetricAccumulator::new();
    for (i, p) in preds.iter().enumerate() {
        let (gt, mask) = ds.ground_truth(i)?;
        acc.add(p.view(), gt.view(), mask.view())?;
    }
    acc.finish()
}

/// Supervised training of `cfg.teacher` on `X`, or on `X ∪ U′` when the
/// sets carry a labeled auxiliary handle.
pub fn train_teacher(cfg: &ExperimentConfig, sets: &TrainingSets) -> Result<(DepthNet<f32>, TrainReport)> {
    let cfg = cfg.with_mode(Mode::Supervised);
    cfg.validate()?;
    sets.check(Mode::Supervised)?;
    let mut net = DepthNet::new(cfg.teacher.clone(), mix_seed(cfg.seed, TEACHER_INIT))?;
    let report = fit(&mut net, &cfg, sets, None, Role::Teacher)?;
    Ok((net, report))
}

/// Trains `cfg.student` under `cfg.mode`. The teacher only contributes
/// precomputed predictions, so its weights cannot change.
pub fn train_student(
    cfg: &ExperimentConfig,
    sets: &TrainingSets,
    teacher: Option<TeacherTargets>,
) -> Result<(DepthNet<f32>, TrainReport)> {
    cfg.validate()?;
    sets.check(cfg.mode)?;
    let mut net = DepthNet::new(cfg.student.clone(), mix_seed(cfg.seed, STUDENT_INIT))?;
    if cfg.mode.uses_teacher() {
        let t = teacher.ok_or_else(|| Error::Config(format!("mode {:?} needs teacher predictions", cfg.mode)))?;
        if cfg.mode != Mode::KdAuxOnly && t.original.len() != sets.original.len() {
            return Err(Error::Dimension(
                "teacher predictions do not cover the original set".into(),
            ));
        }
        let n_aux = sets.auxiliary.as_ref().map_or(0, DatasetHandle::len);
        if t.auxiliary.len() < n_aux {
            return Err(Error::Dimension(
                "teacher predictions do not cover the auxiliary set".into(),
            ));
        }
    }
    let report = fit(&mut net, cfg, sets, teacher, Role::Student)?;
    Ok((net, report))
}

/// Same as [`train_student`] but computes the teacher predictions first.
pub fn train_student_with_teacher(
    cfg: &ExperimentConfig,
    sets: &TrainingSets,
    teacher: &DepthNet<f32>,
) -> Result<(DepthNet<f32>, TrainReport)> {
    let original = if cfg.mode == Mode::KdAuxOnly {
        Vec::new()
    } else {
        predict_dataset(teacher, &sets.original, cfg.batch_size)?
    };
    let auxiliary = match &sets.auxiliary {
        Some(a) => predict_dataset(teacher, a, cfg.batch_size)?,
        None => Vec::new(),
    };
    train_student(
        cfg,
        sets,
        Some(TeacherTargets {
            original: &original,
            auxiliary: &auxiliary,
        }),
    )
}

/// One batch member as the objectives see it.
struct Member {
    target: Array2<f64>,
    truth: Option<Array2<f64>>,
    mask: Array2<bool>,
}

struct Part {
    indices: Vec<usize>,
    members: Vec<Member>,
}

fn to_f64(a: &Array2<f32>) -> Array2<f64> {
    a.mapv(f64::from)
}

fn gather(ds: &DatasetHandle, indices: Vec<usize>, teacher: Option<&[Array2<f32>]>, with_truth: bool) -> Result<Part> {
    let mut members = Vec::with_capacity(indices.len());
    for &i in &indices {
        let (truth, mask) = if with_truth {
            let (gt, mask) = ds.ground_truth(i)?;
            (Some(to_f64(gt)), mask.clone())
        } else {
            let (h, w, _) = ds.rgb(i).dim();
            (None, Array2::from_elem(DepthNet::<f32>::output_dims(h, w), true))
        };
        let target = match teacher {
            Some(t) => to_f64(&t[i]),
            None => truth
                .clone()
                .ok_or_else(|| Error::Config("no target for sample".into()))?,
        };
        members.push(Member { target, truth, mask });
    }
    Ok(Part { indices, members })
}

fn views<'a>(part: &'a Part, preds: &'a [Array2<f64>]) -> Vec<DistillSample<'a>> {
    part.members
        .iter()
        .zip(preds)
        .map(|(m, p)| DistillSample {
            student: p.view(),
            teacher: m.target.view(),
            ground_truth: m.truth.as_ref().map(|t| t.view()),
            mask: m.mask.view(),
        })
        .collect()
}

fn objective(cfg: &ExperimentConfig, x: &Part, aux: &Part, preds: &[Array2<f64>]) -> Result<Objective> {
    let (px, pa) = preds.split_at(x.members.len());
    let (x, aux) = (views(x, px), views(aux, pa));
    let lambda = cfg.lambda;
    match cfg.mode {
        Mode::Supervised => {
            let a = supervised(&x)?;
            if aux.is_empty() {
                return Ok(a);
            }
            let b = supervised(&aux)?;
            Ok(Objective {
                value: a.value + b.value,
                grads: a.grads.into_iter().chain(b.grads).collect(),
            })
        }
        Mode::KdStandard => kd_standard(&x, lambda),
        Mode::KdAuxOnly => kd_unlabeled_only(&aux, lambda),
        Mode::KdMixedUnlabeled => kd_mixed_unlabeled(&x, &aux, lambda, cfg.aux_weighting),
        Mode::KdMixedLabeled => kd_mixed_labeled(&x, &aux, lambda),
    }
}

fn fit(
    net: &mut DepthNet<f32>,
    cfg: &ExperimentConfig,
    sets: &TrainingSets,
    teacher: Option<TeacherTargets>,
    role: Role,
) -> Result<TrainReport> {
    let started = Instant::now();
    let mode = cfg.mode;
    // Aux-only runs must never see ground truth of X; drop the labels so
    // any access fails loudly.
    let original = if mode == Mode::KdAuxOnly {
        sets.original.relabeled(false)
    } else {
        sets.original.clone()
    };
    let aux = sets.auxiliary.as_ref();
    let aux_labeled = matches!(mode, Mode::Supervised | Mode::KdMixedLabeled);
    let mut adam = Adam::new(cfg.adam(), net);
    let mut draws = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, AUX_DRAWS));
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule_with(epoch, cfg.lr0, cfg.lr_drop_every, cfg.lr_drop_to);
        let order = original.order(epoch);
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let x = if mode == Mode::KdAuxOnly {
                Part {
                    indices: Vec::new(),
                    members: Vec::new(),
                }
            } else {
                gather(&original, chunk.to_vec(), teacher.map(|t| t.original), true)?
            };
            let a = match aux {
                Some(a) => {
                    let idx: Vec<usize> = (0..chunk.len()).map(|_| draws.gen_range(0..a.len())).collect();
                    let targets = if mode.uses_teacher() {
                        teacher.map(|t| t.auxiliary)
                    } else {
                        None
                    };
                    gather(a, idx, targets, aux_labeled)?
                }
                None => Part {
                    indices: Vec::new(),
                    members: Vec::new(),
                },
            };
            let images = x
                .indices
                .iter()
                .map(|&i| original.rgb(i))
                .chain(a.indices.iter().map(|&i| aux.expect("drawn from aux").rgb(i)));
            let input = images_to_batch::<f32>(images)?;
            let (pred, tape) = net.forward_train(&input)?;
            let preds: Vec<Array2<f64>> = (0..pred.dim().0)
                .map(|b| pred.slice(s![b, 0, .., ..]).mapv(f64::from))
                .collect();
            let obj = objective(cfg, &x, &a, &preds)?;
            if !obj.value.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
            }
            let mut grad = Array4::<f32>::zeros(pred.dim());
            for (b, g) in obj.grads.iter().enumerate() {
                grad.slice_mut(s![b, 0, .., ..]).assign(&g.mapv(|v| v as f32));
            }
            let grads = net.backward(&tape, &grad);
            adam.step(net, &grads, lr);
            loss_sum += obj.value;
            steps += 1;
        }
        let metrics = evaluate_model(net, &sets.held_out, cfg.batch_size.max(32))?;
        epochs.push(EpochRecord {
            epoch,
            lr,
            loss: loss_sum / steps.max(1) as f64,
            metrics,
        });
    }
    let final_metrics = match epochs.last() {
        Some(e) => e.metrics,
        None => evaluate_model(net, &sets.held_out, cfg.batch_size.max(32))?,
    };
    Ok(TrainReport {
        role,
        mode,
        seed: cfg.seed,
        config_hash: config_hash(cfg)?,
        n_train: sets.original.len(),
        n_auxiliary: aux.map_or(0, DatasetHandle::len),
        n_held_out: sets.held_out.len(),
        epochs,
        final_metrics,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
