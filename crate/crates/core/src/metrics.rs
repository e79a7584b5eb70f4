//! Depth accuracy metrics and depth-distribution histograms.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::{Error, Result};

/// Base of the δ-accuracy thresholds: δk counts pixels whose ratio to the
/// ground truth is within `DELTA_BASE^k`.
pub const DELTA_BASE: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub rel: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_valid: usize,
}

/// Pools errors over any number of prediction/ground-truth pairs.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    sq_err: f64,
    rel: f64,
    within: [usize; 3],
    n: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<P, G>(&mut self, pred: ArrayView2<P>, gt: ArrayView2<G>, mask: ArrayView2<bool>) -> Result<()>
    where
        P: Copy + Into<f64>,
        G: Copy + Into<f64>,
    {
        if pred.dim() != gt.dim() || gt.dim() != mask.dim() {
            return Err(Error::Dimension(format!(
                "prediction {:?}, ground truth {:?} and mask {:?} must match",
                pred.dim(),
                gt.dim(),
                mask.dim()
            )));
        }
        let thresholds = [DELTA_BASE, DELTA_BASE.powi(2), DELTA_BASE.powi(3)];
        for ((&p, &g), &m) in pred.iter().zip(gt.iter()).zip(mask.iter()) {
            if !m {
                continue;
            }
            let (p, g): (f64, f64) = (p.into(), g.into());
            if !(g > 0.0) {
                return Err(Error::InvalidArgument(format!("ground truth {g} on a valid pixel")));
            }
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("prediction {p} on a valid pixel")));
            }
            let e = p - g;
            self.sq_err += e * e;
            self.rel += e.abs() / g;
            // Non-positive predictions are never within any threshold.
            if p > 0.0 {
                let ratio = (p / g).max(g / p);
                for (count, t) in self.within.iter_mut().zip(thresholds) {
                    if ratio < t {
                        *count += 1;
                    }
                }
            }
            self.n += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricReport> {
        if self.n == 0 {
            return Err(Error::EmptyMask("metrics need at least one valid pixel"));
        }
        let n = self.n as f64;
        Ok(MetricReport {
            rmse: (self.sq_err / n).sqrt(),
            rel: self.rel / n,
            delta1: self.within[0] as f64 / n,
            delta2: self.within[1] as f64 / n,
            delta3: self.within[2] as f64 / n,
            n_valid: self.n,
        })
    }
}

/// RMSE, mean relative error and δ1..δ3 over the masked pixels.
pub fn evaluate<P, G>(pred: ArrayView2<P>, gt: ArrayView2<G>, mask: ArrayView2<bool>) -> Result<MetricReport>
where
    P: Copy + Into<f64>,
    G: Copy + Into<f64>,
{
    let mut acc = MetricAccumulator::new();
    acc.add(pred, gt, mask)?;
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub n_bins: usize,
    pub range: (f64, f64),
}

impl Default for HistogramBins {
    /// 50 uniform bins over 0–10 m.
    fn default() -> Self {
        HistogramBins {
            n_bins: 50,
            range: (0.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthHistogram {
    pub bin_edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl DepthHistogram {
    pub fn argmax_bin(&self) -> usize {
        self.mass
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &m)| if m > best.1 { (i, m) } else { best },
            )
            .0
    }
}

/// Pooled, normalized histogram of every valid depth in a labeled dataset.
/// Depths outside the range are counted in the nearest end bin.
pub fn depth_histogram(ds: &DatasetHandle, bins: HistogramBins) -> Result<DepthHistogram> {
    let HistogramBins {
        n_bins,
        range: (lo, hi),
    } = bins;
    if n_bins == 0 || !(hi > lo) {
        return Err(Error::InvalidArgument(format!("histogram binning {bins:?}")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    let mut total = 0u64;
    for i in 0..ds.len() {
        let (depth, mask) = ds.ground_truth(i)?;
        for (&d, &m) in depth.iter().zip(mask.iter()) {
            if m {
                let b = ((d as f64 - lo) / width).floor().clamp(0.0, (n_bins - 1) as f64);
                counts[b as usize] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask("histogram over a dataset without valid pixels"));
    }
    Ok(DepthHistogram {
        bin_edges: (0..=n_bins).map(|k| lo + k as f64 * width).collect(),
        mass: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}

/// Histogram intersection `Σ min(aᵢ, bᵢ)`.
pub fn histogram_similarity(a: &DepthHistogram, b: &DepthHistogram) -> Result<f64> {
    let same_edges = a.bin_edges.len() == b.bin_edges.len()
        && a.bin_edges
            .iter()
            .zip(&b.bin_edges)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
    if !same_edges || a.mass.len() != b.mass.len() {
        return Err(Error::InvalidArgument("histograms use different binning".into()));
    }
    Ok(a.mass
        .iter()
        .zip(&b.mass)
        .map(|(x, y)| x.min(*y))
        .sum::<f64>()
        .clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DepthSample;
    use ndarray::{Array2, Array3};

    fn hist(mass: &[f64]) -> DepthHistogram {
        DepthHistogram {
            bin_edges: (0..=mass.len()).map(|k| k as f64).collect(),
            mass: mass.to_vec(),
        }
    }

    fn constant(depth: f32, n: usize) -> DepthSample {
        DepthSample::new(
            Array3::zeros((2, 2, 3)),
            Array2::from_elem((n, 1), depth),
            Array2::from_elem((n, 1), true),
            "c",
        )
        .unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = Array2::from_shape_fn((4, 4), |(i, j)| 1.0 + (i + j) as f64);
        let r = evaluate(gt.view(), gt.view(), Array2::from_elem((4, 4), true).view()).unwrap();
        assert_eq!((r.rmse, r.rel, r.delta1, r.n_valid), (0.0, 0.0, 1.0, 16));
    }

    #[test]
    fn uniform_overestimate() {
        let gt = Array2::from_shape_fn((3, 5), |(i, j)| 0.5 + (i * 5 + j) as f64 * 0.3);
        let pred = gt.mapv(|g| 1.3 * g);
        let r = evaluate(pred.view(), gt.view(), Array2::from_elem((3, 5), true).view()).unwrap();
        assert!((r.rel - 0.3).abs() < 1e-12);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 1.0, 1.0));
        let oracle = (gt.iter().map(|g| (0.3 * g) * (0.3 * g)).sum::<f64>() / 15.0).sqrt();
        assert!((r.rmse - oracle).abs() < 1e-12);
    }

    #[test]
    fn masked_pixels_are_ignored_and_empty_mask_errors() {
        let gt = Array2::from_elem((2, 2), 2.0f32);
        let mut pred = gt.clone();
        pred[[0, 0]] = 100.0;
        let mut mask = Array2::from_elem((2, 2), true);
        mask[[0, 0]] = false;
        assert_eq!(evaluate(pred.view(), gt.view(), mask.view()).unwrap().rmse, 0.0);
        mask.fill(false);
        assert!(matches!(
            evaluate(pred.view(), gt.view(), mask.view()),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn shape_mismatch_and_bad_ground_truth() {
        let a = Array2::<f32>::ones((2, 2));
        let b = Array2::<f32>::ones((2, 3));
        let m = Array2::from_elem((2, 2), true);
        assert!(matches!(
            evaluate(a.view(), b.view(), m.view()),
            Err(Error::Dimension(_))
        ));
        let z = Array2::<f32>::zeros((2, 2));
        assert!(evaluate(a.view(), z.view(), m.view()).is_err());
        let mut nan = a.clone();
        nan[[1, 1]] = f32::NAN;
        assert!(matches!(
            evaluate(nan.view(), a.view(), m.view()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn nonpositive_prediction_is_never_accurate() {
        let gt = Array2::from_elem((1, 2), 1.0f64);
        let pred = ndarray::array![[-1.0f64, 0.0]];
        let r = evaluate(pred.view(), gt.view(), Array2::from_elem((1, 2), true).view()).unwrap();
        assert_eq!(r.delta3, 0.0);
    }

    #[test]
    fn histogram_of_constant_and_split_data() {
        let bins = HistogramBins::default();
        let one = DatasetHandle::new(vec![constant(2.5, 4)], true, "a", 0);
        let h = depth_histogram(&one, bins).unwrap();
        assert_eq!(h.mass.iter().filter(|&&m| m > 0.0).count(), 1);
        assert_eq!(h.mass[12], 1.0);
        assert_eq!(h.bin_edges.len(), h.mass.len() + 1);

        let two = DatasetHandle::new(vec![constant(1.1, 3), constant(7.3, 3)], true, "b", 0);
        let h = depth_histogram(&two, bins).unwrap();
        assert_eq!(h.mass[5], 0.5);
        assert_eq!(h.mass[36], 0.5);
        assert!((h.mass.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_rejects_unlabeled() {
        let ds = DatasetHandle::new(vec![constant(1.0, 1)], false, "u", 0);
        assert!(matches!(
            depth_histogram(&ds, HistogramBins::default()),
            Err(Error::UnlabeledAccess(_))
        ));
    }

    #[test]
    fn similarity_cases() {
        let a = hist(&[0.5, 0.5, 0.0]);
        let b = hist(&[0.5, 0.0, 0.5]);
        assert!((histogram_similarity(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(histogram_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(
            histogram_similarity(&hist(&[1.0, 0.0]), &hist(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert!(histogram_similarity(&a, &hist(&[1.0])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(raw_a in proptest::collection::vec(0.0f64..1.0, 6), raw_b in proptest::collection::vec(0.0f64..1.0, 6)) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum::<f64>() + 1e-12;
                hist(&v.iter().map(|x| x / s).collect::<Vec<_>>())
            };
            let (a, b) = (norm(&raw_a), norm(&raw_b));
            let ab = histogram_similarity(&a, &b).unwrap();
            proptest::prop_assert_eq!(ab, histogram_similarity(&b, &a).unwrap());
            proptest::prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
