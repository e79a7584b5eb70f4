use serde::{Deserialize, Serialize};

use super::image::{center_crop, resize_bilinear, resize_depth_masked};
use super::sample::DepthSample;
use crate::error::{Error, Result};

/// Resize-then-centre-crop pipeline. The depth map follows the same
/// geometry at half the image resolution, so it stays pixel-aligned with
/// the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocess {
    /// Image size after resizing, `(rows, cols)`.
    pub resize: (usize, usize),
    /// Image size after the centre crop, `(rows, cols)`.
    pub crop: (usize, usize),
}

impl Default for Preprocess {
    fn default() -> Self {
        Self::nyu()
    }
}

impl Preprocess {
    /// 640×480 → 320×240 → 304×228 image, 152×114 depth.
    pub const fn nyu() -> Self {
        Preprocess {
            resize: (240, 320),
            crop: (228, 304),
        }
    }

    /// No resizing or cropping of the image; depth halved.
    pub const fn native(size: (usize, usize)) -> Self {
        Preprocess {
            resize: size,
            crop: size,
        }
    }

    pub fn depth_resize(&self) -> (usize, usize) {
        (self.resize.0 / 2, self.resize.1 / 2)
    }

    pub fn depth_crop(&self) -> (usize, usize) {
        (self.crop.0 / 2, self.crop.1 / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let (r, c) = (self.resize, self.crop);
        if c.0 < 2 || c.1 < 2 || c.0 > r.0 || c.1 > r.1 {
            return Err(Error::Dimension(format!(
                "crop {c:?} must be at least 2×2 and fit inside resize {r:?}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, sample: &DepthSample) -> Result<DepthSample> {
        self.validate()?;
        if sample.image_dims() == self.crop && sample.depth_dims() == self.depth_crop() {
            return Ok(sample.clone());
        }
        let rgb = center_crop(&resize_bilinear(&sample.rgb, self.resize)?, self.crop)?;
        let (depth, mask) = resize_depth_masked(sample.depth.view(), sample.valid_mask.view(), self.depth_resize())?;
        let depth = center_crop(&depth, self.depth_crop())?;
        let valid_mask = center_crop(&mask, self.depth_crop())?;
        Ok(DepthSample {
            rgb: rgb.mapv(|v| v.clamp(0.0, 1.0)),
            depth,
            valid_mask,
            domain_tag: sample.domain_tag.clone(),
        })
    }
}

/// Applies the standard 640×480 pipeline.
pub fn preprocess(sample: &DepthSample) -> Result<DepthSample> {
    Preprocess::nyu().apply(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn raw(h: usize, w: usize) -> DepthSample {
        DepthSample::new(
            Array3::from_shape_fn((h, w, 3), |(i, j, c)| ((i + j + c) % 7) as f32 / 7.0),
            Array2::from_shape_fn((h, w), |(i, j)| 1.0 + ((i * j) % 5) as f32),
            Array2::from_elem((h, w), true),
            "raw",
        )
        .unwrap()
    }

    #[test]
    fn full_resolution_frame_lands_on_network_dims() {
        let out = preprocess(&raw(480, 640)).unwrap();
        assert_eq!(out.rgb.dim(), (228, 304, 3));
        assert_eq!(out.depth.dim(), (114, 152));
        assert!(out.valid_mask.iter().all(|&m| m));
        out.validate().unwrap();
    }

    #[test]
    fn idempotent_on_target_dims() {
        let once = preprocess(&raw(480, 640)).unwrap();
        let twice = preprocess(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn any_large_enough_input_maps_to_the_same_dims() {
        for (h, w) in [(240, 320), (300, 401), (481, 641)] {
            let out = preprocess(&raw(h, w)).unwrap();
            assert_eq!(out.rgb.dim(), (228, 304, 3));
            assert_eq!(out.depth.dim(), (114, 152));
        }
    }

    #[test]
    fn native_pipeline_only_halves_depth() {
        let out = Preprocess::native((32, 32)).apply(&raw(32, 32)).unwrap();
        assert_eq!(out.rgb.dim(), (32, 32, 3));
        assert_eq!(out.depth.dim(), (16, 16));
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let p = Preprocess {
            resize: (10, 10),
            crop: (12, 8),
        };
        assert!(p.apply(&raw(20, 20)).is_err());
    }
}
