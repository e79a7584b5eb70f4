//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line
//! straight to stdout so the lines survive test-output capture, and the test
//! fails if any criterion does.
//!
//! The synthetic-domain study behind criteria 4 to 6 trains every setting on
//! three seeds and takes about 35 minutes on one core.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use litedepth::data::io::{decode_pfm, decode_ppm, encode_pfm, encode_ppm};
use litedepth::data::{make_domains, DomainConfig};
use litedepth::distill::{
    run_study, sweep_shape, train_student_with_teacher, train_teacher, ExperimentConfig, Mode, Setting, StudyConfig,
    StudyResults, TrainReport, TrainingSets,
};
use litedepth::losses::gradcheck::{central_difference, max_relative_error, random_map, random_pair};
use litedepth::losses::{
    composite_loss, composite_loss_with_grad, kd_mixed_labeled, kd_mixed_unlabeled, kd_standard, AuxWeighting,
    DistillSample, KdWeight, Objective,
};
use litedepth::metrics::{evaluate, MetricReport};
use litedepth::nn::checkpoint::encode_checkpoint;
use litedepth::nn::{count_decoder_parameters, count_parameters, DepthNet, FusionDecoderSpec, ModelConfig};
use litedepth::Error;
use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, started: Instant, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let line = format!(
        "criterion {n} [{verdict}] {name} ({:.1}s): {}\n",
        started.elapsed().as_secs_f64(),
        o.detail
    );
    let mut out = std::io::stdout();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

// ---------------------------------------------------------------- criterion 1

/// Worst relative error of one objective over `trials` random 6×6 batches.
/// `objective` maps the student maps to an objective value and gradients.
fn kd_gradient_error(trials: u64, salt: u64, objective: impl Fn(&[Array2<f64>], u64) -> Objective) -> f64 {
    (0..trials)
        .map(|t| {
            let seed = salt * 1000 + t;
            let students: Vec<Array2<f64>> = (0..3).map(|k| random_pair(6, 6, seed * 7 + k).0).collect();
            let analytic = objective(&students, seed).grads;
            (0..students.len())
                .map(|k| {
                    let numeric = central_difference(&students[k], 1e-6, |s| {
                        let mut probe = students.clone();
                        probe[k] = s.clone();
                        objective(&probe, seed).value
                    });
                    max_relative_error(&analytic[k], &numeric)
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Teacher and truth maps kept away from the student so no error term sits
/// on the smoothed kink of `|x|`.
fn references(seed: u64, n: usize) -> Vec<(Array2<f64>, Array2<f64>)> {
    (0..n as u64)
        .map(|k| {
            (
                random_map(6, 6, seed ^ (0x7E + k), 6.0, 9.0),
                random_map(6, 6, seed ^ (0x9D + k), 10.0, 14.0),
            )
        })
        .collect()
}

fn distill_sample<'a>(
    student: &'a Array2<f64>,
    refs: &'a (Array2<f64>, Array2<f64>),
    labeled: bool,
    mask: &'a Array2<bool>,
) -> DistillSample<'a> {
    DistillSample {
        student: student.view(),
        teacher: refs.0.view(),
        ground_truth: labeled.then(|| refs.1.view()),
        mask: mask.view(),
    }
}

fn criterion_gradients() -> Outcome {
    const TRIALS: u64 = 100;
    let mask = Array2::from_elem((6, 6), true);
    let composite = (0..TRIALS)
        .map(|t| {
            let (pred, target) = random_pair(6, 6, t);
            let (_, grad) = composite_loss_with_grad(pred.view(), target.view(), mask.view()).unwrap();
            let numeric = central_difference(&pred, 1e-6, |p| {
                composite_loss(p.view(), target.view(), mask.view()).unwrap().total
            });
            max_relative_error(&grad, &numeric)
        })
        .fold(0.0, f64::max);

    let lambda = KdWeight::new(0.3).unwrap();
    let standard = kd_gradient_error(TRIALS, 1, |s, seed| {
        let refs = references(seed, s.len());
        let batch: Vec<_> = s
            .iter()
            .zip(&refs)
            .map(|(s, r)| distill_sample(s, r, true, &mask))
            .collect();
        kd_standard(&batch, lambda).unwrap()
    });
    let mixed_unlabeled = kd_gradient_error(TRIALS, 2, |s, seed| {
        let refs = references(seed, s.len());
        let x: Vec<_> = s[..1]
            .iter()
            .zip(&refs)
            .map(|(s, r)| distill_sample(s, r, true, &mask))
            .collect();
        let u: Vec<_> = s[1..]
            .iter()
            .zip(&refs[1..])
            .map(|(s, r)| distill_sample(s, r, false, &mask))
            .collect();
        kd_mixed_unlabeled(&x, &u, lambda, AuxWeighting::AsWritten).unwrap()
    });
    let mixed_labeled = kd_gradient_error(TRIALS, 3, |s, seed| {
        let refs = references(seed, s.len());
        let x: Vec<_> = s[..2]
            .iter()
            .zip(&refs)
            .map(|(s, r)| distill_sample(s, r, true, &mask))
            .collect();
        let u: Vec<_> = s[2..]
            .iter()
            .zip(&refs[2..])
            .map(|(s, r)| distill_sample(s, r, true, &mask))
            .collect();
        kd_mixed_labeled(&x, &u, lambda).unwrap()
    });
    let worst = [composite, standard, mixed_unlabeled, mixed_labeled];
    Outcome {
        pass: worst.iter().all(|&e| e < 1e-4),
        detail: format!(
            "max relative error over {TRIALS} trials: composite {composite:.1e}, kd_standard {standard:.1e}, \
             kd_mixed_unlabeled {mixed_unlabeled:.1e}, kd_mixed_labeled {mixed_labeled:.1e} (limit 1e-4)"
        ),
    }
}

// ---------------------------------------------------------------- criterion 2

/// Straight per-pixel transcription of RMSE, REL and δ1..δ3.
fn naive_metrics(pred: &Array2<f64>, gt: &Array2<f64>, mask: &Array2<bool>) -> [f64; 5] {
    let (mut sq, mut rel, mut hits, mut n) = (0.0, 0.0, [0.0; 3], 0.0);
    for i in 0..gt.nrows() {
        for j in 0..gt.ncols() {
            if !mask[[i, j]] {
                continue;
            }
            let (p, g) = (pred[[i, j]], gt[[i, j]]);
            sq += (p - g) * (p - g);
            rel += (p - g).abs() / g;
            let ratio = if p / g > g / p { p / g } else { g / p };
            for (k, h) in hits.iter_mut().enumerate() {
                if ratio < 1.25f64.powi(k as i32 + 1) {
                    *h += 1.0;
                }
            }
            n += 1.0;
        }
    }
    [(sq / n).sqrt(), rel / n, hits[0] / n, hits[1] / n, hits[2] / n]
}

fn as_array(m: &MetricReport) -> [f64; 5] {
    [m.rmse, m.rel, m.delta1, m.delta2, m.delta3]
}

fn criterion_metrics() -> Outcome {
    const PAIRS: u64 = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut monotone, mut invariant) = (0.0f64, true, true);
    for _ in 0..PAIRS {
        let gt = Array2::from_shape_fn((8, 8), |_| rng.gen_range(0.1..10.0));
        let pred = gt.mapv(|g| g * rng.gen_range(0.5..1.9));
        let mut mask = Array2::from_shape_fn((8, 8), |_| rng.gen_bool(0.8));
        mask[[rng.gen_range(0..8), rng.gen_range(0..8)]] = true;
        let got = as_array(&evaluate(pred.view(), gt.view(), mask.view()).unwrap());
        let want = naive_metrics(&pred, &gt, &mask);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        monotone &= got[2] <= got[3] && got[3] <= got[4];

        let c = rng.gen_range(0.1..20.0);
        let scaled = as_array(&evaluate(pred.mapv(|p| p * c).view(), gt.mapv(|g| g * c).view(), mask.view()).unwrap());
        invariant &= (scaled[0] - c * got[0]).abs() <= 1e-9 * c.max(1.0) * got[0].max(1.0)
            && (scaled[1] - got[1]).abs() <= 1e-12
            && scaled[2..] == got[2..];
    }
    Outcome {
        pass: worst < 1e-9 && monotone && invariant,
        detail: format!(
            "{PAIRS} pairs, max |evaluate − loop| {worst:.1e}; δ1≤δ2≤δ3 {monotone}; scale invariance {invariant}"
        ),
    }
}

// ---------------------------------------------------------------- criterion 3

/// Hand count: per scale a squeeze/excite pair reducing by 4 and a 3×3
/// compression, then two 5×5 head convolutions, every layer with bias.
fn hand_decoder_count(channels: &[usize], compress: usize, hidden: usize) -> usize {
    let mut n = 0;
    for &c in channels {
        let r = c.div_ceil(4);
        n += c * r + r + r * c + c;
        n += c * compress * 9 + compress;
    }
    n + channels.len() * compress * hidden * 25 + hidden + hidden * 25 + 1
}

fn hand_toy_encoder_count(widths: &[usize]) -> usize {
    let mut c_in = 3;
    widths
        .iter()
        .map(|&c| {
            let n = c_in * c * 9 + c;
            c_in = c;
            n
        })
        .sum()
}

fn criterion_architecture() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let student = DepthNet::<f32>::new(ModelConfig::mobilenet_v2_student(), 0).unwrap();
    let y = student.forward(&Array4::zeros((1, 3, 228, 304))).unwrap();
    let shape_ok = y.shape() == [1, 1, 114, 152];
    pass &= shape_ok;
    notes.push(format!("228×304 → {}×{}", y.shape()[2], y.shape()[3]));

    let concat = FusionDecoderSpec::default().concat_channels();
    let head_in = student
        .parameters()
        .find(|(n, _)| n == "decoder.head.0.weight")
        .map(|(_, w)| w.shape()[1])
        .unwrap_or(0);
    pass &= concat == 80 && head_in == 80;
    notes.push(format!("concat width {concat} (head input {head_in})"));

    let mut counts_ok = true;
    for cfg in [ModelConfig::toy_student(), ModelConfig::toy_teacher()] {
        let net = DepthNet::<f32>::new(cfg.clone(), 1).unwrap();
        let analytic = count_parameters(&cfg).total().unwrap();
        let by_hand = hand_toy_encoder_count(&cfg.backbone.channels)
            + hand_decoder_count(
                &cfg.backbone.channels,
                cfg.decoder.compress_channels,
                cfg.decoder.head_hidden_channels,
            );
        counts_ok &= analytic == net.parameter_count() && analytic == by_hand;
    }
    let mobile_decoder = count_parameters(&ModelConfig::mobilenet_v2_student()).decoder;
    counts_ok &= mobile_decoder == student.decoder().params().scalar_count()
        && mobile_decoder == hand_decoder_count(&[16, 24, 32, 96, 320], 16, 80);
    pass &= counts_ok;
    notes.push(format!("analytic = instantiated = hand counts {counts_ok}"));

    let budget = count_decoder_parameters(&[16, 24, 32, 96, 320], &FusionDecoderSpec::default());
    let budget_ok = (240_000..=360_000).contains(&budget);
    pass &= budget_ok;
    notes.push(format!("MobileNet-v2-class decoder {budget} parameters (0.3M ± 20%)"));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

// ------------------------------------------------------------ criteria 4 to 6

/// Desk-scale study: 2000 training and 500 held-out images, four times as
/// many auxiliary images, 20 epochs.
fn study_config() -> StudyConfig {
    let mut study = StudyConfig::default();
    study.domains.n_train = 2500;
    study.domains.n_aux_matched = 8000;
    study.domains.n_aux_ood = 8000;
    study.experiment.lr0 = 2e-3;
    study
}

fn study_settings(study: &StudyConfig) -> Vec<Setting> {
    let mut settings = Setting::MATRIX.to_vec();
    settings.push(Setting::KdOod);
    settings.extend(study.sweep_settings());
    settings
}

const TIE: f64 = 0.005;

fn criterion_capacity_gap(r: &StudyResults, study: &StudyConfig, minutes: f64) -> Outcome {
    let m = |s| r.median_delta1(s).unwrap();
    let (t, txu, sx, s1, s3, s4) = (
        m(Setting::TeacherX),
        m(Setting::TeacherXu),
        m(Setting::StudentX),
        m(Setting::KdX),
        m(Setting::KdXu),
        m(Setting::KdXuLabeled),
    );
    let teacher = count_parameters(&study.experiment.teacher).total().unwrap();
    let student = count_parameters(&study.experiment.student).total().unwrap();
    let checks = [
        ("teacher > student", t > sx),
        ("teacher(X∪U′) ≥ teacher(X)", txu >= t - TIE),
        ("setting 3 ≥ setting 1", s3 >= s1 - TIE),
        ("setting 4 ≥ setting 3", s4 >= s3 - TIE),
        ("teacher ≥ 4× student parameters", teacher >= 4 * student),
        ("matrix within 30 min", minutes <= 30.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome {
        pass: failed.is_empty(),
        detail: format!(
            "median δ1 teacher {t:.4}, teacher(X∪U′) {txu:.4}, student {sx:.4}, s1 {s1:.4}, s3 {s3:.4}, s4 {s4:.4}; \
             {teacher} vs {student} parameters; {} train / {} held out; matrix {minutes:.1} min{}",
            study.n_train_split(),
            study.domains.n_train - study.n_train_split(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; violated: {}", failed.join(", "))
            }
        ),
    }
}

fn criterion_ood(r: &StudyResults) -> Outcome {
    let (u, ood) = (
        r.median_delta1(Setting::KdU).unwrap(),
        r.median_delta1(Setting::KdOod).unwrap(),
    );
    Outcome {
        pass: ood < u,
        detail: format!("median δ1 with matched U only {u:.4}, with U_ood only {ood:.4}"),
    }
}

fn criterion_sweep(r: &StudyResults, study: &StudyConfig) -> Outcome {
    let curve: Vec<(usize, f64)> = study
        .sweep_settings()
        .into_iter()
        .zip(study.sweep_sizes())
        .map(|(s, n)| (n, r.median_delta1(s).unwrap()))
        .collect();
    let d: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let (non_decreasing, plateau) = sweep_shape(&d, 0.01);
    let points: Vec<String> = curve.iter().map(|(n, d)| format!("{n}:{d:.4}")).collect();
    Outcome {
        pass: non_decreasing,
        detail: format!(
            "median δ1 by auxiliary size [{}]; non-decreasing within 0.01 {non_decreasing}; plateau {plateau}",
            points.join(", ")
        ),
    }
}

// ---------------------------------------------------------------- criterion 7

fn criterion_determinism() -> Outcome {
    let domains = make_domains(
        &DomainConfig {
            n_train: 40,
            n_aux_matched: 24,
            n_aux_ood: 8,
            ..DomainConfig::default()
        },
        11,
    )
    .unwrap();
    let (train, held_out) = domains.original.split(0.2, 11).unwrap();
    let sets = TrainingSets::new(train, held_out);
    let cfg = ExperimentConfig {
        epochs: 3,
        lr0: 2e-3,
        seed: 11,
        ..ExperimentConfig::default()
    };
    let (teacher, _) = train_teacher(&cfg, &sets).unwrap();
    let before = encode_checkpoint(&teacher).unwrap();

    let mixed = sets.with_auxiliary(domains.auxiliary.clone());
    let kd = cfg.with_mode(Mode::KdMixedUnlabeled);
    let (_, a) = train_student_with_teacher(&kd, &mixed, &teacher).unwrap();
    let (_, b) = train_student_with_teacher(&kd, &mixed, &teacher).unwrap();
    let curves_equal = a.loss_curve() == b.loss_curve() && a.same_outcome(&b);
    let teacher_unchanged = encode_checkpoint(&teacher).unwrap() == before;

    let guarded = matches!(domains.auxiliary.ground_truth(0), Err(Error::UnlabeledAccess(_)))
        && matches!(domains.auxiliary.sample(3), Err(Error::UnlabeledAccess(_)));
    Outcome {
        pass: curves_equal && teacher_unchanged && guarded,
        detail: format!(
            "identical loss curves {curves_equal}; teacher bytes unchanged {teacher_unchanged}; \
             unlabeled ground-truth access rejected {guarded}"
        ),
    }
}

// ---------------------------------------------------------------- criterion 8

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_litedepth"))
        .args(args)
        .output()
        .unwrap()
}

fn criterion_io() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pfm_exact = true;
    let mut ppm_exact = true;
    for _ in 0..50 {
        let (h, w) = (rng.gen_range(1..40), rng.gen_range(1..40));
        // Every finite non-negative bit pattern, subnormals included.
        let depth = Array2::from_shape_fn((h, w), |_| f32::from_bits(rng.gen_range(0..0x7F80_0000u32)));
        let back = decode_pfm(&encode_pfm(&depth).unwrap(), "mem.pfm".as_ref()).unwrap();
        pfm_exact &= back.iter().zip(&depth).all(|(a, b)| a.to_bits() == b.to_bits()) && back.dim() == depth.dim();
        let rgb = Array3::from_shape_fn((h, w, 3), |_| rng.gen::<u8>());
        ppm_exact &= decode_ppm(&encode_ppm(&rgb).unwrap(), "mem.ppm".as_ref()).unwrap() == rgb;
    }

    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let first_s = first.to_str().unwrap();
    let small = [
        "--override",
        "data.n_train=30",
        "--override",
        "data.n_aux_matched=10",
        "--override",
        "data.n_aux_ood=10",
        "--override",
        "train.epochs=2",
    ];
    let mut args = vec!["train", "--model", "student", "--seed", "4", "--output-dir", first_s];
    args.extend(small);
    let run1 = cli(&args);
    let effective = first.join("effective_config.json");
    let run2 = cli(&[
        "train",
        "--model",
        "student",
        "--config",
        effective.to_str().unwrap(),
        "--output-dir",
        second.to_str().unwrap(),
    ]);
    let reports = || -> Option<(TrainReport, TrainReport)> {
        Some((
            TrainReport::read_json(&first.join("student_report.json")).ok()?,
            TrainReport::read_json(&second.join("student_report.json")).ok()?,
        ))
    };
    let rerun_identical = run1.status.success()
        && run2.status.success()
        && reports().is_some_and(|(a, b)| a.same_outcome(&b) && a.seed == 4 && a.epochs.len() == 2);
    Outcome {
        pass: pfm_exact && ppm_exact && rerun_identical,
        detail: format!(
            "PFM bit-exact {pfm_exact}; PPM bit-exact {ppm_exact}; effective-config re-run identical {rerun_identical}"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let mut all = true;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let o = f();
        report(n, name, started, &o);
        all &= o.pass;
    };
    run(1, "gradient correctness", &mut || {
        let started = Instant::now();
        let mut o = criterion_gradients();
        let secs = started.elapsed().as_secs_f64();
        o.pass &= secs < 60.0;
        o
    });
    run(2, "metric oracle equivalence", &mut criterion_metrics);
    run(3, "shape and architecture invariants", &mut criterion_architecture);

    let study = study_config();
    // Wall time between progress calls, data generation and teacher
    // inference included, charged to the setting that just finished.
    let mut last = Instant::now();
    let mut matrix_secs = 0.0;
    let results = run_study(&study, &study_settings(&study), |s, seed, r| {
        let secs = last.elapsed().as_secs_f64();
        last = Instant::now();
        if Setting::MATRIX.contains(&s) {
            matrix_secs += secs;
        }
        eprintln!("  {s} seed {seed}: δ1 {:.4} ({secs:.0}s)", r.final_metrics.delta1);
    })
    .unwrap();
    run(4, "KD capacity gap", &mut || {
        criterion_capacity_gap(&results, &study, matrix_secs / 60.0)
    });
    run(5, "out-of-domain auxiliary harm", &mut || criterion_ood(&results));
    run(6, "auxiliary-size sweep", &mut || criterion_sweep(&results, &study));

    run(7, "determinism and contracts", &mut criterion_determinism);
    run(8, "file formats and CLI re-run", &mut criterion_io);
    assert!(all, "at least one acceptance criterion failed; see the lines above");
}
