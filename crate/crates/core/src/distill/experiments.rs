use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode, TrainingSets};
use super::report::{curve_rows, median, CurveRow, TrainReport};
use super::train::{predict_dataset, train_student, train_teacher, TeacherTargets};
use crate::data::{make_domains, DatasetHandle, DomainConfig, Domains};
use crate::error::{Error, Result};
use crate::nn::DepthNet;

/// A named run of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Supervised teacher on `X`.
    TeacherX,
    /// Supervised teacher on `X ∪ U′`.
    TeacherXu,
    /// Supervised student on `X`.
    StudentX,
    /// Setting 1.
    KdX,
    /// Setting 2.
    KdU,
    /// Setting 3.
    KdXu,
    /// Setting 4.
    KdXuLabeled,
    /// Imitation on the out-of-domain set only.
    KdOod,
    /// Setting 3 with the first `n` auxiliary samples.
    AuxSize(usize),
}

impl Setting {
    /// The experiment matrix: both teachers, the supervised student and the
    /// four KD settings.
    pub const MATRIX: [Setting; 7] = [
        Setting::TeacherX,
        Setting::TeacherXu,
        Setting::StudentX,
        Setting::KdX,
        Setting::KdU,
        Setting::KdXu,
        Setting::KdXuLabeled,
    ];

    pub const OOD: [Setting; 2] = [Setting::KdU, Setting::KdOod];

    pub fn name(self) -> String {
        match self {
            Setting::TeacherX => "teacher_x".into(),
            Setting::TeacherXu => "teacher_xu".into(),
            Setting::StudentX => "student_x".into(),
            Setting::KdX => "kd_x".into(),
            Setting::KdU => "kd_u".into(),
            Setting::KdXu => "kd_xu".into(),
            Setting::KdXuLabeled => "kd_xu_labeled".into(),
            Setting::KdOod => "kd_ood".into(),
            Setting::AuxSize(n) => format!("aux_{n}"),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Everything needed to regenerate a multi-seed study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub domains: DomainConfig,
    /// Fraction of the original set held out for evaluation.
    pub held_out_fraction: f64,
    /// Shared hyperparameters; `mode` and `seed` are set per run.
    pub experiment: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Auxiliary subset sizes for the sweep, as multiples of the training
    /// split size.
    pub sweep_multiples: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            domains: DomainConfig::default(),
            held_out_fraction: 0.2,
            experiment: ExperimentConfig::default(),
            seeds: vec![0, 1, 2],
            sweep_multiples: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.domains.validate()?;
        self.experiment.validate()?;
        if !(self.held_out_fraction > 0.0 && self.held_out_fraction < 1.0) {
            return Err(Error::Config("held-out fraction must lie in (0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("a study needs at least one seed".into()));
        }
        if self.sweep_multiples.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(Error::Config("sweep multiples must be non-negative".into()));
        }
        Ok(())
    }

    /// Training-split size after holding out the evaluation samples.
    pub fn n_train_split(&self) -> usize {
        let held = (self.domains.n_train as f64 * self.held_out_fraction).round() as usize;
        self.domains.n_train - held
    }

    /// Auxiliary subset sizes of the sweep, in sample counts.
    pub fn sweep_sizes(&self) -> Vec<usize> {
        let n = self.n_train_split() as f64;
        self.sweep_multiples.iter().map(|m| (m * n).round() as usize).collect()
    }

    pub fn sweep_settings(&self) -> Vec<Setting> {
        self.sweep_sizes().into_iter().map(Setting::AuxSize).collect()
    }
}

/// Runs of one seed, sharing data, teacher and teacher predictions.
pub struct SeedRunner<'a> {
    study: &'a StudyConfig,
    seed: u64,
    domains: Domains,
    sets: TrainingSets,
    teacher: Option<Teacher>,
    reports: BTreeMap<Setting, TrainReport>,
}

struct Teacher {
    net: DepthNet<f32>,
    original: Vec<Array2<f32>>,
    auxiliary: Vec<Array2<f32>>,
    ood: Vec<Array2<f32>>,
}

impl<'a> SeedRunner<'a> {
    pub fn new(study: &'a StudyConfig, seed: u64) -> Result<Self> {
        study.validate()?;
        let domains = make_domains(&study.domains, seed)?;
        let (train, held_out) = domains.original.split(study.held_out_fraction, seed)?;
        Ok(SeedRunner {
            study,
            seed,
            sets: TrainingSets::new(train, held_out),
            domains,
            teacher: None,
            reports: BTreeMap::new(),
        })
    }

    pub fn domains(&self) -> &Domains {
        &self.domains
    }

    pub fn sets(&self) -> &TrainingSets {
        &self.sets
    }

    fn config(&self, mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            seed: self.seed,
            ..self.study.experiment.clone()
        }
    }

    /// The teacher trained on `X`, trained on first use.
    pub fn teacher(&mut self) -> Result<&DepthNet<f32>> {
        self.ensure_teacher()?;
        Ok(&self.teacher.as_ref().expect("just trained").net)
    }

    fn ensure_teacher(&mut self) -> Result<()> {
        if self.teacher.is_some() {
            return Ok(());
        }
        let cfg = self.config(Mode::Supervised);
        let (net, report) = train_teacher(&cfg, &self.sets)?;
        let bs = cfg.batch_size.max(32);
        self.teacher = Some(Teacher {
            original: predict_dataset(&net, &self.sets.original, bs)?,
            auxiliary: predict_dataset(&net, &self.domains.auxiliary, bs)?,
            ood: predict_dataset(&net, &self.domains.ood, bs)?,
            net,
        });
        self.reports.insert(Setting::TeacherX, report);
        Ok(())
    }

    /// Runs `setting` unless an equivalent run already exists.
    pub fn run(&mut self, setting: Setting) -> Result<&TrainReport> {
        let key = self.canonical(setting)?;
        if !self.reports.contains_key(&key) {
            let report = self.execute(key)?;
            self.reports.insert(key, report);
        }
        Ok(&self.reports[&key])
    }

    fn canonical(&self, setting: Setting) -> Result<Setting> {
        Ok(match setting {
            Setting::AuxSize(0) => Setting::KdX,
            Setting::AuxSize(n) if n == self.domains.auxiliary.len() => Setting::KdXu,
            Setting::AuxSize(n) if n > self.domains.auxiliary.len() => {
                return Err(Error::Config(format!(
                    "sweep size {n} exceeds the {} auxiliary samples",
                    self.domains.auxiliary.len()
                )))
            }
            s => s,
        })
    }

    fn execute(&mut self, setting: Setting) -> Result<TrainReport> {
        if setting == Setting::TeacherX {
            self.ensure_teacher()?;
            return Ok(self.reports[&Setting::TeacherX].clone());
        }
        if setting == Setting::TeacherXu {
            let sets = self.sets.with_auxiliary(self.domains.auxiliary_labeled.clone());
            return Ok(train_teacher(&self.config(Mode::Supervised), &sets)?.1);
        }
        if setting == Setting::StudentX {
            return Ok(train_student(&self.config(Mode::Supervised), &self.sets, None)?.1);
        }
        self.ensure_teacher()?;
        let t = self.teacher.as_ref().expect("ensured");
        let (mode, aux, aux_preds): (Mode, Option<DatasetHandle>, &[Array2<f32>]) = match setting {
            Setting::KdX => (Mode::KdStandard, None, &[]),
            Setting::KdU => (Mode::KdAuxOnly, Some(self.domains.auxiliary.clone()), &t.auxiliary),
            Setting::KdXu => (
                Mode::KdMixedUnlabeled,
                Some(self.domains.auxiliary.clone()),
                &t.auxiliary,
            ),
            Setting::KdXuLabeled => (
                Mode::KdMixedLabeled,
                Some(self.domains.auxiliary_labeled.clone()),
                &t.auxiliary,
            ),
            Setting::KdOod => (Mode::KdAuxOnly, Some(self.domains.ood.clone()), &t.ood),
            Setting::AuxSize(n) => (
                Mode::KdMixedUnlabeled,
                Some(self.domains.auxiliary.prefix(n)?),
                &t.auxiliary[..n],
            ),
            Setting::TeacherX | Setting::TeacherXu | Setting::StudentX => unreachable!("handled above"),
        };
        let sets = match aux {
            Some(a) => self.sets.with_auxiliary(a),
            None => self.sets.clone(),
        };
        let targets = TeacherTargets {
            original: &t.original,
            auxiliary: aux_preds,
        };
        Ok(train_student(&self.config(mode), &sets, Some(targets))?.1)
    }
}

/// Reports of a multi-seed study, keyed by setting then seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub runs: BTreeMap<String, BTreeMap<u64, TrainReport>>,
}

impl StudyResults {
    pub fn get(&self, setting: Setting, seed: u64) -> Option<&TrainReport> {
        self.runs.get(&setting.name())?.get(&seed)
    }

    /// Median final δ1 over seeds.
    pub fn median_delta1(&self, setting: Setting) -> Option<f64> {
        let runs = self.runs.get(&setting.name())?;
        let d: Vec<f64> = runs.values().map(|r| r.final_metrics.delta1).collect();
        (!d.is_empty()).then(|| median(&d))
    }

    /// Per-epoch rows for every run, ordered by setting then seed.
    pub fn rows(&self, order: &[Setting]) -> Vec<CurveRow> {
        order
            .iter()
            .filter_map(|s| self.runs.get(&s.name()).map(|r| (s.name(), r)))
            .flat_map(|(name, runs)| {
                runs.values()
                    .flat_map(move |r| curve_rows(&name, r))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn summary(&self, order: &[Setting]) -> Vec<SettingSummary> {
        order
            .iter()
            .filter_map(|&s| {
                let runs = self.runs.get(&s.name())?;
                Some(SettingSummary {
                    setting: s.name(),
                    seeds: runs.keys().copied().collect(),
                    delta1: runs.values().map(|r| r.final_metrics.delta1).collect(),
                    median_delta1: self.median_delta1(s)?,
                    median_rmse: median(&runs.values().map(|r| r.final_metrics.rmse).collect::<Vec<_>>()),
                    median_rel: median(&runs.values().map(|r| r.final_metrics.rel).collect::<Vec<_>>()),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting: String,
    pub seeds: Vec<u64>,
    pub delta1: Vec<f64>,
    pub median_delta1: f64,
    pub median_rmse: f64,
    pub median_rel: f64,
}

/// Runs `settings` for every seed of the study, sharing work within a
/// seed. `progress` sees each finished run.
pub fn run_study(
    study: &StudyConfig,
    settings: &[Setting],
    mut progress: impl FnMut(Setting, u64, &TrainReport),
) -> Result<StudyResults> {
    let mut results = StudyResults::default();
    for &seed in &study.seeds {
        let mut runner = SeedRunner::new(study, seed)?;
        for &s in settings {
            let report = runner.run(s)?.clone();
            progress(s, seed, &report);
            results.runs.entry(s.name()).or_default().insert(seed, report);
        }
    }
    Ok(results)
}

/// Both teachers, the supervised student and KD settings 1–4.
pub fn run_matrix(study: &StudyConfig) -> Result<StudyResults> {
    run_study(study, &Setting::MATRIX, |_, _, _| {})
}

/// Setting 3 at each sweep size; returns `(size, median δ1)` pairs with the
/// underlying runs.
pub fn aux_size_sweep(study: &StudyConfig) -> Result<(Vec<(usize, f64)>, StudyResults)> {
    let settings = study.sweep_settings();
    let results = run_study(study, &settings, |_, _, _| {})?;
    Ok((sweep_curve(&results, &settings), results))
}

pub fn sweep_curve(results: &StudyResults, settings: &[Setting]) -> Vec<(usize, f64)> {
    settings
        .iter()
        .filter_map(|&s| match s {
            Setting::AuxSize(n) => results.median_delta1(s).map(|d| (n, d)),
            _ => None,
        })
        .collect()
}

/// Whether each point is at least its predecessor minus `tol`, and the
/// last two points differ by less than `tol`.
pub fn sweep_shape(curve: &[f64], tol: f64) -> (bool, bool) {
    let non_decreasing = curve.windows(2).all(|w| w[1] >= w[0] - tol);
    let plateau = match curve {
        [.., a, b] => (b - a).abs() < tol,
        _ => false,
    };
    (non_decreasing, plateau)
}
