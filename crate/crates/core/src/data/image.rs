//! Resampling and cropping over the two leading (row, column) axes.
//!
//! Bilinear sampling places pixel centres at half-integer coordinates
//! (the "align corners off" convention): output pixel `o` samples the source
//! at `(o + 0.5) · src / dst − 0.5`, clamped to the valid range.

use ndarray::{Array, Array2, ArrayView2, Axis, Dimension, Slice};

use crate::error::{Error, Result};

/// One output coordinate of a separable linear resampler: the two source
/// indices and the weight given to the second one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (x.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = if hi == lo { 0.0 } else { x - lo as f64 };
            Tap { lo, hi, frac }
        })
        .collect()
}

fn nearest_index(o: usize, src: usize, dst: usize) -> usize {
    let x = (o as f64 + 0.5) * src as f64 / dst as f64;
    (x.floor() as usize).min(src - 1)
}

fn check_dims<A, D: Dimension>(img: &Array<A, D>, target: (usize, usize)) -> Result<(usize, usize)> {
    if img.ndim() < 2 {
        return Err(Error::Dimension(format!("expected ≥2 axes, got {}", img.ndim())));
    }
    let (h, w) = (img.shape()[0], img.shape()[1]);
    if h == 0 || w == 0 || img.is_empty() {
        return Err(Error::Dimension(format!("zero-sized input {:?}", img.shape())));
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::Dimension(format!("zero-sized target {target:?}")));
    }
    Ok((h, w))
}

/// Bilinear resize of the leading two axes; trailing axes (e.g. colour
/// channels) are carried along.
pub fn resize_bilinear<D: Dimension>(img: &Array<f32, D>, target: (usize, usize)) -> Result<Array<f32, D>> {
    let (h, w) = check_dims(img, target)?;
    let rest: usize = img.shape()[2..].iter().product();
    let src = img.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let (th, tw) = target;
    let rows = bilinear_taps(h, th);
    let cols = bilinear_taps(w, tw);
    let mut out = vec![0f32; th * tw * rest];
    for (oi, r) in rows.iter().enumerate() {
        for (oj, c) in cols.iter().enumerate() {
            let at = |i: usize, j: usize, k: usize| src[(i * w + j) * rest + k] as f64;
            for k in 0..rest {
                let top = at(r.lo, c.lo, k) * (1.0 - c.frac) + at(r.lo, c.hi, k) * c.frac;
                let bottom = at(r.hi, c.lo, k) * (1.0 - c.frac) + at(r.hi, c.hi, k) * c.frac;
                out[(oi * tw + oj) * rest + k] = (top * (1.0 - r.frac) + bottom * r.frac) as f32;
            }
        }
    }
    let mut dim = img.raw_dim();
    dim[0] = th;
    dim[1] = tw;
    Ok(Array::from_shape_vec(dim, out).expect("shape computed above"))
}

/// Nearest-neighbour resize of the leading two axes.
pub fn resize_nearest<A: Clone>(img: &Array2<A>, target: (usize, usize)) -> Result<Array2<A>> {
    let (h, w) = check_dims(img, target)?;
    Ok(Array2::from_shape_fn(target, |(i, j)| {
        img[[nearest_index(i, h, target.0), nearest_index(j, w, target.1)]].clone()
    }))
}

/// Bilinear resize of a depth map that only blends valid pixels.
///
/// Each output depth is the bilinear average over the valid taps with the
/// weights renormalized. The output mask comes from nearest-neighbour
/// sampling of the input mask, and is cleared wherever no valid tap carried
/// weight.
pub fn resize_depth_masked(
    depth: ArrayView2<f32>,
    mask: ArrayView2<bool>,
    target: (usize, usize),
) -> Result<(Array2<f32>, Array2<bool>)> {
    if depth.dim() != mask.dim() {
        return Err(Error::Dimension(format!(
            "depth {:?} and mask {:?} differ",
            depth.dim(),
            mask.dim()
        )));
    }
    let (h, w) = depth.dim();
    if h == 0 || w == 0 {
        return Err(Error::Dimension("zero-sized depth map".into()));
    }
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::Dimension(format!("zero-sized target {target:?}")));
    }
    let rows = bilinear_taps(h, target.0);
    let cols = bilinear_taps(w, target.1);
    let mut out = Array2::zeros(target);
    let mut out_mask = Array2::from_elem(target, false);
    for (oi, r) in rows.iter().enumerate() {
        for (oj, c) in cols.iter().enumerate() {
            let mut acc = 0.0f64;
            let mut wsum = 0.0f64;
            for (i, wi) in [(r.lo, 1.0 - r.frac), (r.hi, r.frac)] {
                for (j, wj) in [(c.lo, 1.0 - c.frac), (c.hi, c.frac)] {
                    let wt = wi * wj;
                    if mask[[i, j]] && wt > 0.0 {
                        acc += wt * depth[[i, j]] as f64;
                        wsum += wt;
                    }
                }
            }
            let nearest = mask[[nearest_index(oi, h, target.0), nearest_index(oj, w, target.1)]];
            if wsum > 0.0 {
                out[[oi, oj]] = (acc / wsum) as f32;
                out_mask[[oi, oj]] = nearest;
            }
        }
    }
    Ok((out, out_mask))
}

/// Top-left offset of a centred window, floor division per axis.
pub fn crop_offsets(src: (usize, usize), target: (usize, usize)) -> Result<(usize, usize)> {
    if target.0 > src.0 || target.1 > src.1 {
        return Err(Error::Dimension(format!("crop {target:?} larger than source {src:?}")));
    }
    Ok(((src.0 - target.0) / 2, (src.1 - target.1) / 2))
}

/// Centred sub-window of the leading two axes.
pub fn center_crop<A: Clone, D: Dimension>(img: &Array<A, D>, target: (usize, usize)) -> Result<Array<A, D>> {
    if img.ndim() < 2 {
        return Err(Error::Dimension(format!("expected ≥2 axes, got {}", img.ndim())));
    }
    let src = (img.shape()[0], img.shape()[1]);
    let (oy, ox) = crop_offsets(src, target)?;
    let view = img
        .slice_axis(Axis(0), Slice::from(oy..oy + target.0))
        .slice_axis_move(Axis(1), Slice::from(ox..ox + target.1));
    Ok(view.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use proptest::prelude::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = Array3::from_elem((7, 5, 3), 0.7f32);
        for target in [(1, 1), (3, 9), (14, 10)] {
            let out = resize_bilinear(&img, target).unwrap();
            assert_eq!(out.dim(), (target.0, target.1, 3));
            assert!(out.iter().all(|&v| (v - 0.7).abs() < 1e-6));
        }
    }

    #[test]
    fn two_by_two_to_one_pixel_averages_columns() {
        let img = array![[0.0f32, 1.0], [0.0, 1.0]];
        let out = resize_bilinear(&img, (1, 1)).unwrap();
        assert_eq!(out[[0, 0]], 0.5);
    }

    #[test]
    fn halving_rgb() {
        let img = Array3::<f32>::zeros((480, 640, 3));
        assert_eq!(resize_bilinear(&img, (240, 320)).unwrap().dim(), (240, 320, 3));
    }

    #[test]
    fn zero_sized_input_is_a_dimension_error() {
        let img = Array2::<f32>::zeros((0, 4));
        assert!(matches!(resize_bilinear(&img, (2, 2)), Err(Error::Dimension(_))));
        let img = Array2::<f32>::zeros((3, 4));
        assert!(matches!(resize_bilinear(&img, (0, 2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn crop_offsets_floor() {
        assert_eq!(crop_offsets((240, 320), (228, 304)).unwrap(), (6, 8));
        assert_eq!(crop_offsets((5, 4), (2, 1)).unwrap(), (1, 1));
        assert!(crop_offsets((4, 4), (5, 4)).is_err());
    }

    #[test]
    fn crop_identity_and_center() {
        let img = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f32);
        assert_eq!(center_crop(&img, (3, 3)).unwrap(), img);
        assert_eq!(center_crop(&img, (1, 1)).unwrap(), array![[4.0f32]]);
        let rgb = Array3::<f32>::zeros((240, 320, 3));
        assert_eq!(center_crop(&rgb, (228, 304)).unwrap().dim(), (228, 304, 3));
        assert!(matches!(center_crop(&img, (4, 1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn masked_resize_ignores_invalid_pixels() {
        let depth = array![[2.0f32, 0.0], [2.0, 0.0]];
        let mask = array![[true, false], [true, false]];
        let (d, m) = resize_depth_masked(depth.view(), mask.view(), (1, 1)).unwrap();
        assert_eq!(d[[0, 0]], 2.0);
        // Nearest sample of the 2×2 grid at (1, 1) is invalid.
        assert!(!m[[0, 0]]);
    }

    proptest! {
        #[test]
        fn bilinear_stays_within_source_range(
            h in 1usize..9, w in 1usize..9, th in 1usize..12, tw in 1usize..12, seed in 0u64..1000,
        ) {
            let mut state = seed;
            let img = Array2::from_shape_fn((h, w), |_| {
                state = crate::data::sample::mix_seed(state, 1);
                (state % 1000) as f32 / 1000.0
            });
            let lo = img.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = img.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&img, (th, tw)).unwrap();
            prop_assert_eq!(out.dim(), (th, tw));
            for &v in out.iter() {
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }
}
