use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// An RGB image with its aligned metric depth map.
///
/// `rgb` is stored `H × W × 3` with values in `[0, 1]`. `depth` and
/// `valid_mask` share the depth resolution, which may differ from the image
/// resolution (after preprocessing the depth map is half the image size).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSample {
    pub rgb: Array3<f32>,
    pub depth: Array2<f32>,
    pub valid_mask: Array2<bool>,
    pub domain_tag: String,
}

impl DepthSample {
    /// Builds a sample and checks the shape and value invariants.
    pub fn new(
        rgb: Array3<f32>,
        depth: Array2<f32>,
        valid_mask: Array2<bool>,
        domain_tag: impl Into<String>,
    ) -> Result<Self> {
        let sample = DepthSample {
            rgb,
            depth,
            valid_mask,
            domain_tag: domain_tag.into(),
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.rgb.dim();
        if c != 3 || h == 0 || w == 0 {
            return Err(Error::Dimension(format!(
                "rgb must be H×W×3 with H, W ≥ 1, got {h}×{w}×{c}"
            )));
        }
        if self.depth.dim() != self.valid_mask.dim() {
            return Err(Error::Dimension(format!(
                "depth {:?} and mask {:?} differ",
                self.depth.dim(),
                self.valid_mask.dim()
            )));
        }
        if let Some(v) = self.rgb.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("rgb value {v} outside [0, 1]")));
        }
        for (&d, &m) in self.depth.iter().zip(self.valid_mask.iter()) {
            if m && !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "valid depth must be positive and finite, got {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn image_dims(&self) -> (usize, usize) {
        let (h, w, _) = self.rgb.dim();
        (h, w)
    }

    pub fn depth_dims(&self) -> (usize, usize) {
        self.depth.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.valid_mask.iter().filter(|&&m| m).count()
    }
}

/// An ordered, seeded collection of samples from one domain.
///
/// Unlabeled handles refuse to hand out depth maps: every ground-truth read
/// goes through [`DatasetHandle::ground_truth`], which fails with
/// [`Error::UnlabeledAccess`] when `labeled` is false.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    samples: Arc<Vec<DepthSample>>,
    len: usize,
    labeled: bool,
    domain_tag: String,
    seed: u64,
}

impl DatasetHandle {
    pub fn new(samples: Vec<DepthSample>, labeled: bool, domain_tag: impl Into<String>, seed: u64) -> Self {
        let len = samples.len();
        DatasetHandle {
            samples: Arc::new(samples),
            len,
            labeled,
            domain_tag: domain_tag.into(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    pub fn domain_tag(&self) -> &str {
        &self.domain_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Shares the same samples under a different labeling contract.
    pub fn relabeled(&self, labeled: bool) -> Self {
        DatasetHandle {
            labeled,
            ..self.clone()
        }
    }

    /// The first `n` samples, sharing storage with `self`.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n > self.len {
            return Err(Error::InvalidArgument(format!(
                "prefix of {n} samples requested from a dataset of {}",
                self.len
            )));
        }
        Ok(DatasetHandle { len: n, ..self.clone() })
    }

    pub fn rgb(&self, index: usize) -> &Array3<f32> {
        &self.samples[..self.len][index].rgb
    }

    pub fn ground_truth(&self, index: usize) -> Result<(&Array2<f32>, &Array2<bool>)> {
        let sample = self.sample(index)?;
        Ok((&sample.depth, &sample.valid_mask))
    }

    /// Full access to a labeled sample.
    pub fn sample(&self, index: usize) -> Result<&DepthSample> {
        if !self.labeled {
            return Err(Error::UnlabeledAccess(self.domain_tag.clone()));
        }
        Ok(&self.samples[..self.len][index])
    }

    pub fn image_dims(&self) -> Option<(usize, usize)> {
        self.samples[..self.len].first().map(|s| s.image_dims())
    }

    /// Visiting order for `epoch`; a pure function of `(seed, epoch)`.
    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, epoch as u64));
        order.shuffle(&mut rng);
        order
    }

    /// Seeded split into `(train, held_out)`, with `round(len · fraction)`
    /// samples held out.
    pub fn split(&self, held_out_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&held_out_fraction) {
            return Err(Error::InvalidArgument(format!(
                "held-out fraction {held_out_fraction} outside [0, 1]"
            )));
        }
        let mut order: Vec<usize> = (0..self.len).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5_911)));
        let n_held = (self.len as f64 * held_out_fraction).round() as usize;
        let (held, train) = order.split_at(n_held);
        let pick = |idx: &[usize], salt: u64| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            DatasetHandle::new(
                idx.iter().map(|&i| self.samples[i].clone()).collect(),
                self.labeled,
                self.domain_tag.clone(),
                mix_seed(self.seed, salt),
            )
        };
        Ok((pick(train, 1), pick(held, 2)))
    }
}

/// SplitMix64 finalizer over `seed ⊕ salt`; used to derive independent
/// streams from one user seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
