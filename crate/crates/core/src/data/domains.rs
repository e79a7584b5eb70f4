use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::Preprocess;
use super::sample::{mix_seed, DatasetHandle};
use super::scene::{generate_scene, SceneRecipe};
use crate::error::{Error, Result};

/// Ranges from which per-scene recipes are drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDistribution {
    pub wall_distance: (f32, f32),
    /// Inclusive bounds on the number of cuboids.
    pub n_boxes: (usize, usize),
    pub scale_factor: (f32, f32),
    pub depth_range: (f32, f32),
}

impl Default for SceneDistribution {
    fn default() -> Self {
        SceneDistribution {
            wall_distance: (3.0, 6.0),
            n_boxes: (0, 4),
            scale_factor: (0.8, 1.25),
            depth_range: (0.5, 10.0),
        }
    }
}

impl SceneDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f32, f32)| lo > 0.0 && hi >= lo && hi.is_finite();
        if !ok(self.wall_distance) || !ok(self.scale_factor) || !ok(self.depth_range) {
            return Err(Error::Config(format!("degenerate scene distribution {self:?}")));
        }
        if self.n_boxes.0 > self.n_boxes.1 {
            return Err(Error::Config(format!("box count bounds {:?}", self.n_boxes)));
        }
        Ok(())
    }

    /// The same distribution with every scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f32) -> Self {
        SceneDistribution {
            scale_factor: (self.scale_factor.0 * factor, self.scale_factor.1 * factor),
            ..self.clone()
        }
    }

    pub fn draw(&self, rng: &mut impl Rng, resolution: (usize, usize)) -> SceneRecipe {
        let uniform = |rng: &mut _, (lo, hi): (f32, f32)| if hi > lo { Rng::gen_range(rng, lo..hi) } else { lo };
        SceneRecipe {
            depth_range: self.depth_range,
            n_boxes: rng.gen_range(self.n_boxes.0..=self.n_boxes.1),
            wall_distance: uniform(rng, self.wall_distance),
            texture_seed: rng.gen(),
            scale_factor: uniform(rng, self.scale_factor),
            resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub n_train: usize,
    pub n_aux_matched: usize,
    pub n_aux_ood: usize,
    /// Render size before preprocessing.
    pub resolution: (usize, usize),
    pub preprocess: Preprocess,
    pub matched: SceneDistribution,
    /// The out-of-domain set draws scale factors from the matched range
    /// multiplied by this value.
    pub ood_scale_multiplier: f32,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            n_train: 200,
            n_aux_matched: 800,
            n_aux_ood: 200,
            resolution: (32, 32),
            preprocess: Preprocess::native((32, 32)),
            matched: SceneDistribution::default(),
            ood_scale_multiplier: 8.0,
        }
    }
}

/// Minimum ratio between the smallest out-of-domain scale and the largest
/// matched scale.
pub const MIN_OOD_SCALE_RATIO: f32 = 5.0;

impl DomainConfig {
    pub fn ood_distribution(&self) -> SceneDistribution {
        self.matched.rescaled(self.ood_scale_multiplier)
    }

    pub fn validate(&self) -> Result<()> {
        self.matched.validate()?;
        self.preprocess.validate()?;
        let ood = self.ood_distribution();
        if ood.scale_factor.0 < MIN_OOD_SCALE_RATIO * self.matched.scale_factor.1 {
            return Err(Error::Config(format!(
                "out-of-domain scales {:?} must start at ≥{MIN_OOD_SCALE_RATIO}× the matched maximum {}",
                ood.scale_factor, self.matched.scale_factor.1
            )));
        }
        Ok(())
    }
}

/// The original labeled set, the matched auxiliary set (unlabeled and
/// labeled views over the same samples) and an out-of-domain auxiliary set.
#[derive(Debug, Clone)]
pub struct Domains {
    pub original: DatasetHandle,
    pub auxiliary: DatasetHandle,
    pub auxiliary_labeled: DatasetHandle,
    pub ood: DatasetHandle,
}

pub const ORIGINAL_TAG: &str = "original";
pub const AUXILIARY_TAG: &str = "auxiliary";
pub const OOD_TAG: &str = "ood";

/// Renders `n` scenes from `dist` and preprocesses them.
pub fn generate_dataset(
    dist: &SceneDistribution,
    n: usize,
    resolution: (usize, usize),
    preprocess: &Preprocess,
    labeled: bool,
    tag: &str,
    seed: u64,
) -> Result<DatasetHandle> {
    let samples = (0..n)
        .map(|i| {
            let scene_seed = mix_seed(seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
            let recipe = dist.draw(&mut rng, resolution);
            let mut sample = preprocess.apply(&generate_scene(&recipe, rng.gen())?)?;
            sample.domain_tag = tag.to_string();
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetHandle::new(samples, labeled, tag, seed))
}

/// Builds the four datasets from independent seed streams.
pub fn make_domains(cfg: &DomainConfig, seed: u64) -> Result<Domains> {
    cfg.validate()?;
    let gen = |dist: &SceneDistribution, n, labeled, tag, stream| {
        generate_dataset(
            dist,
            n,
            cfg.resolution,
            &cfg.preprocess,
            labeled,
            tag,
            mix_seed(seed, stream),
        )
    };
    let original = gen(&cfg.matched, cfg.n_train, true, ORIGINAL_TAG, 1)?;
    let auxiliary = gen(&cfg.matched, cfg.n_aux_matched, false, AUXILIARY_TAG, 2)?;
    let ood = gen(&cfg.ood_distribution(), cfg.n_aux_ood, false, OOD_TAG, 3)?;
    Ok(Domains {
        auxiliary_labeled: auxiliary.relabeled(true),
        original,
        auxiliary,
        ood,
    })
}
