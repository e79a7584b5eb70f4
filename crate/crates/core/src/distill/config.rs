use serde::{Deserialize, Serialize};

use super::optim::AdamConfig;
use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::losses::{AuxWeighting, KdWeight};
use crate::nn::ModelConfig;

/// Which objective a student run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Composite loss against ground truth; with a labeled auxiliary set
    /// both sets are used.
    Supervised,
    /// Setting 1: ground truth plus λ-weighted imitation on `X`.
    KdStandard,
    /// Setting 2: imitation on the unlabeled auxiliary set only.
    KdAuxOnly,
    /// Setting 3: standard KD on `X` plus imitation on unlabeled `U`.
    KdMixedUnlabeled,
    /// Setting 4: standard KD on `X` and on labeled `U′`.
    KdMixedLabeled,
}

impl Mode {
    pub fn uses_teacher(self) -> bool {
        !matches!(self, Mode::Supervised)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub teacher: ModelConfig,
    pub student: ModelConfig,
    pub lambda: KdWeight,
    #[serde(default)]
    pub aux_weighting: AuxWeighting,
    pub epochs: usize,
    pub lr0: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub lr_drop_every: usize,
    pub lr_drop_to: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::KdStandard,
            teacher: ModelConfig::toy_teacher(),
            student: ModelConfig::toy_student(),
            lambda: KdWeight::DEFAULT,
            aux_weighting: AuxWeighting::AsWritten,
            epochs: 20,
            lr0: 1e-4,
            weight_decay: 1e-4,
            betas: (0.9, 0.999),
            lr_drop_every: 5,
            lr_drop_to: 0.1,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn with_mode(&self, mode: Mode) -> Self {
        ExperimentConfig { mode, ..self.clone() }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            betas: self.betas,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        self.student.validate()?;
        self.adam().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr0)));
        }
        if self.lr_drop_every == 0 || !(self.lr_drop_to > 0.0 && self.lr_drop_to <= 1.0) {
            return Err(Error::Config(
                "learning-rate drops need a positive period and a factor in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Data a run draws from. `held_out` is labeled and only used for
/// evaluation.
#[derive(Debug, Clone)]
pub struct TrainingSets {
    pub original: DatasetHandle,
    pub auxiliary: Option<DatasetHandle>,
    pub held_out: DatasetHandle,
}

impl TrainingSets {
    pub fn new(original: DatasetHandle, held_out: DatasetHandle) -> Self {
        TrainingSets {
            original,
            auxiliary: None,
            held_out,
        }
    }

    pub fn with_auxiliary(&self, auxiliary: DatasetHandle) -> Self {
        TrainingSets {
            auxiliary: Some(auxiliary),
            ..self.clone()
        }
    }

    /// Checks the mode/dataset contract.
    pub fn check(&self, mode: Mode) -> Result<()> {
        if !self.held_out.labeled() || self.held_out.is_empty() {
            return Err(Error::Config("held-out split must be labeled and non-empty".into()));
        }
        if self.original.is_empty() {
            return Err(Error::Config("original training set is empty".into()));
        }
        if mode != Mode::KdAuxOnly && !self.original.labeled() {
            return Err(Error::UnlabeledAccess(self.original.domain_tag().to_string()));
        }
        let aux = self.auxiliary.as_ref();
        match (mode, aux) {
            (Mode::KdStandard, Some(_)) => Err(Error::Config("standard KD takes no auxiliary set".into())),
            (Mode::Supervised, Some(a)) if !a.labeled() => Err(Error::UnlabeledAccess(a.domain_tag().to_string())),
            (Mode::KdMixedLabeled, Some(a)) if !a.labeled() => {
                Err(Error::Config("labeled mixed KD needs a labeled auxiliary set".into()))
            }
            (Mode::KdAuxOnly | Mode::KdMixedUnlabeled, Some(a)) if a.labeled() => Err(Error::Config(
                "unlabeled-auxiliary modes need an unlabeled handle".into(),
            )),
            (Mode::KdAuxOnly | Mode::KdMixedUnlabeled | Mode::KdMixedLabeled, None) => {
                Err(Error::Config(format!("mode {mode:?} needs an auxiliary set")))
            }
            (_, Some(a)) if a.is_empty() => Err(Error::Config("auxiliary set is empty".into())),
            _ => Ok(()),
        }
    }
}
