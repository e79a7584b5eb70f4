//! Distillation objectives built on the composite loss `L`.
//!
//! Every objective averages per-sample terms over its batch and returns the
//! gradient with respect to each student prediction. Teacher predictions are
//! inputs only; nothing flows back into them.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::composite::composite_loss_with_grad;
use crate::error::{Error, Result};

/// Imitation weight λ in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct KdWeight(f64);

impl KdWeight {
    pub const DEFAULT: KdWeight = KdWeight(0.1);

    pub fn new(lambda: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(KdWeight(lambda))
        } else {
            Err(Error::InvalidArgument(format!("λ = {lambda} outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for KdWeight {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<f64> for KdWeight {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        KdWeight::new(v)
    }
}

impl From<KdWeight> for f64 {
    fn from(w: KdWeight) -> f64 {
        w.0
    }
}

/// How the auxiliary imitation terms are weighted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxWeighting {
    /// Unlabeled-only objective scaled by λ; mixed objective adds the
    /// auxiliary imitation term with unit weight.
    #[default]
    AsWritten,
    /// Both auxiliary imitation terms scaled by λ.
    Normalized,
}

/// One student prediction with everything an objective may compare it to.
#[derive(Debug, Clone, Copy)]
pub struct DistillSample<'a> {
    pub student: ArrayView2<'a, f64>,
    pub teacher: ArrayView2<'a, f64>,
    pub ground_truth: Option<ArrayView2<'a, f64>>,
    pub mask: ArrayView2<'a, bool>,
}

/// Objective value and `∂value/∂student` for each sample of each batch, in
/// the order the batches were passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grads: Vec<Array2<f64>>,
}

impl Objective {
    fn empty() -> Self {
        Objective {
            value: 0.0,
            grads: Vec::new(),
        }
    }

    fn append(mut self, other: Objective) -> Self {
        self.value += other.value;
        self.grads.extend(other.grads);
        self
    }
}

/// `(1/|B|) Σ [w_t · L(s, t) + w_g · L(s, g)]`, skipping zero weights.
fn weighted_mean(batch: &[DistillSample], w_teacher: f64, w_truth: f64) -> Result<Objective> {
    if batch.is_empty() {
        return Ok(Objective::empty());
    }
    let scale = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for s in batch {
        let mut grad = Array2::zeros(s.student.dim());
        if w_teacher != 0.0 {
            let (terms, g) = composite_loss_with_grad(s.student, s.teacher, s.mask)?;
            value += w_teacher * terms.total;
            grad.scaled_add(w_teacher * scale, &g);
        }
        if w_truth != 0.0 {
            let gt = s
                .ground_truth
                .ok_or_else(|| Error::InvalidArgument("objective needs ground truth for every sample".into()))?;
            let (terms, g) = composite_loss_with_grad(s.student, gt, s.mask)?;
            value += w_truth * terms.total;
            grad.scaled_add(w_truth * scale, &g);
        }
        grads.push(grad);
    }
    Ok(Objective {
        value: value * scale,
        grads,
    })
}

fn require_labels(batch: &[DistillSample]) -> Result<()> {
    if batch.iter().any(|s| s.ground_truth.is_none()) {
        return Err(Error::InvalidArgument(
            "labeled objective given a sample without ground truth".into(),
        ));
    }
    Ok(())
}

/// Mean composite loss against ground truth.
pub fn supervised(batch: &[DistillSample]) -> Result<Objective> {
    require_labels(batch)?;
    weighted_mean(batch, 0.0, 1.0)
}

/// `(1/|X|) Σ [λ L(s, t) + (1 − λ) L(s, g)]`.
pub fn kd_standard(batch: &[DistillSample], lambda: KdWeight) -> Result<Objective> {
    require_labels(batch)?;
    let l = lambda.get();
    weighted_mean(batch, l, 1.0 - l)
}

/// `(1/|U|) Σ λ L(s, t)` on unlabeled samples. Supplying ground truth is a
/// contract violation.
pub fn kd_unlabeled_only(batch: &[DistillSample], lambda: KdWeight) -> Result<Objective> {
    if batch.iter().any(|s| s.ground_truth.is_some()) {
        return Err(Error::UnexpectedGroundTruth);
    }
    weighted_mean(batch, lambda.get(), 0.0)
}

/// Standard KD over `X` plus `(1/|U|) Σ L(s, t)` over the unlabeled batch.
pub fn kd_mixed_unlabeled(
    original: &[DistillSample],
    auxiliary: &[DistillSample],
    lambda: KdWeight,
    weighting: AuxWeighting,
) -> Result<Objective> {
    if auxiliary.iter().any(|s| s.ground_truth.is_some()) {
        return Err(Error::UnexpectedGroundTruth);
    }
    let aux_weight = match weighting {
        AuxWeighting::AsWritten => 1.0,
        AuxWeighting::Normalized => lambda.get(),
    };
    Ok(kd_standard(original, lambda)?.append(weighted_mean(auxiliary, aux_weight, 0.0)?))
}

/// Standard KD over both `X` and the labeled auxiliary batch.
pub fn kd_mixed_labeled(
    original: &[DistillSample],
    auxiliary: &[DistillSample],
    lambda: KdWeight,
) -> Result<Objective> {
    Ok(kd_standard(original, lambda)?.append(kd_standard(auxiliary, lambda)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::composite::composite_loss;
    use crate::losses::gradcheck::{random_map, random_pair};
    use ndarray::Array2;

    struct Maps {
        s: Array2<f64>,
        t: Array2<f64>,
        g: Array2<f64>,
        m: Array2<bool>,
    }

    fn maps(seed: u64) -> Maps {
        let (s, t) = random_pair(5, 5, seed);
        Maps {
            s,
            t,
            g: random_map(5, 5, seed + 999, 0.5, 5.0),
            m: Array2::from_elem((5, 5), true),
        }
    }

    fn labeled(m: &Maps) -> DistillSample<'_> {
        DistillSample {
            student: m.s.view(),
            teacher: m.t.view(),
            ground_truth: Some(m.g.view()),
            mask: m.m.view(),
        }
    }

    fn unlabeled(m: &Maps) -> DistillSample<'_> {
        DistillSample {
            ground_truth: None,
            ..labeled(m)
        }
    }

    fn l(a: &Array2<f64>, b: &Array2<f64>, m: &Array2<bool>) -> f64 {
        composite_loss(a.view(), b.view(), m.view()).unwrap().total
    }

    #[test]
    fn lambda_bounds() {
        assert!(KdWeight::new(-0.01).is_err());
        assert!(KdWeight::new(1.01).is_err());
        assert_eq!(KdWeight::default().get(), 0.1);
        assert!(serde_json::from_str::<KdWeight>("1.5").is_err());
    }

    #[test]
    fn standard_kd_endpoints_and_linearity() {
        let ms: Vec<_> = (0..3).map(maps).collect();
        let batch: Vec<_> = ms.iter().map(labeled).collect();
        let v = |lam: f64| kd_standard(&batch, KdWeight::new(lam).unwrap()).unwrap().value;
        let sup: f64 = ms.iter().map(|m| l(&m.s, &m.g, &m.m)).sum::<f64>() / 3.0;
        let imit: f64 = ms.iter().map(|m| l(&m.s, &m.t, &m.m)).sum::<f64>() / 3.0;
        assert!((v(0.0) - sup).abs() < 1e-12);
        assert!((v(1.0) - imit).abs() < 1e-12);
        assert!((supervised(&batch).unwrap().value - sup).abs() < 1e-12);
        for lam in [0.1, 0.37, 0.8] {
            assert!((v(lam) - (lam * v(1.0) + (1.0 - lam) * v(0.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn unlabeled_only_is_scaled_imitation() {
        let m = maps(4);
        let v = kd_unlabeled_only(&[unlabeled(&m)], KdWeight::new(0.1).unwrap()).unwrap();
        assert!((v.value - 0.1 * l(&m.s, &m.t, &m.m)).abs() < 1e-12);
        let one = kd_unlabeled_only(&[unlabeled(&m)], KdWeight::new(1.0).unwrap()).unwrap();
        for (a, b) in v.grads[0].iter().zip(one.grads[0].iter()) {
            assert!((a - 0.1 * b).abs() < 1e-12);
        }
        assert!(matches!(
            kd_unlabeled_only(&[labeled(&m)], KdWeight::DEFAULT),
            Err(Error::UnexpectedGroundTruth)
        ));
    }

    #[test]
    fn mixed_unlabeled_reductions() {
        let (a, b) = (maps(1), maps(2));
        let lam = KdWeight::DEFAULT;
        let x = [labeled(&a)];
        let u = [unlabeled(&b)];
        let eq1 = kd_standard(&x, lam).unwrap();
        assert_eq!(kd_mixed_unlabeled(&x, &[], lam, AuxWeighting::AsWritten).unwrap(), eq1);
        let only_u = kd_mixed_unlabeled(&[], &u, lam, AuxWeighting::AsWritten).unwrap();
        let eq2 = kd_unlabeled_only(&u, KdWeight::new(1.0).unwrap()).unwrap();
        assert_eq!(only_u, eq2);
        let both = kd_mixed_unlabeled(&x, &u, lam, AuxWeighting::AsWritten).unwrap();
        assert!((both.value - eq1.value - l(&b.s, &b.t, &b.m)).abs() < 1e-12);
        assert_eq!(both.grads.len(), 2);
        let norm = kd_mixed_unlabeled(&x, &u, lam, AuxWeighting::Normalized).unwrap();
        assert!((norm.value - eq1.value - 0.1 * l(&b.s, &b.t, &b.m)).abs() < 1e-12);
        assert!(kd_mixed_unlabeled(&x, &[labeled(&b)], lam, AuxWeighting::AsWritten).is_err());
    }

    #[test]
    fn mixed_labeled_reductions() {
        let (a, b) = (maps(5), maps(6));
        let x = [labeled(&a)];
        let u = [labeled(&b)];
        let lam = KdWeight::DEFAULT;
        assert_eq!(kd_mixed_labeled(&x, &[], lam).unwrap(), kd_standard(&x, lam).unwrap());
        let zero = kd_mixed_labeled(&x, &u, KdWeight::new(0.0).unwrap()).unwrap();
        let expected = l(&a.s, &a.g, &a.m) + l(&b.s, &b.g, &b.m);
        assert!((zero.value - expected).abs() < 1e-12);
        assert!(kd_mixed_labeled(&x, &[unlabeled(&b)], lam).is_err());
    }
}
