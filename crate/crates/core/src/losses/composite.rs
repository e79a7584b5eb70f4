//! Depth + gradient + surface-normal error between two depth maps.
//!
//! With `e = pred − target` and `F(x) = ln(|x| + 0.5)`:
//!
//! * `l_depth  = mean F(e)` over valid pixels,
//! * `l_grad   = mean F(∂x e) + mean F(∂y e)` over valid stencils,
//! * `l_normal = mean (1 − cos∠(n_pred, n_target))` with
//!   `n = (−∂x d, −∂y d, 1)`.
//!
//! Spatial derivatives are forward differences with the last row/column
//! replicated. A stencil is valid only if every pixel it touches is valid.
//! `|x|` is evaluated as `sqrt(x² + 1e-12)` so the loss is smooth at zero.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_OFFSET: f64 = 0.5;
pub const ABS_SMOOTHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLossTerms {
    pub l_depth: f64,
    pub l_grad: f64,
    pub l_normal: f64,
    pub total: f64,
}

#[inline]
fn smooth_abs(x: f64) -> f64 {
    (x * x + ABS_SMOOTHING).sqrt()
}

#[inline]
fn log_error(x: f64) -> f64 {
    (smooth_abs(x) + LOG_OFFSET).ln()
}

#[inline]
fn log_error_deriv(x: f64) -> f64 {
    let s = smooth_abs(x);
    x / (s * (s + LOG_OFFSET))
}

/// Loss terms only.
pub fn composite_loss(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    mask: ArrayView2<bool>,
) -> Result<CompositeLossTerms> {
    evaluate(pred, target, mask, false).map(|(terms, _)| terms)
}

/// Loss terms and `∂total/∂pred`.
pub fn composite_loss_with_grad(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    mask: ArrayView2<bool>,
) -> Result<(CompositeLossTerms, Array2<f64>)> {
    evaluate(pred, target, mask, true).map(|(terms, grad)| (terms, grad.expect("requested")))
}

fn evaluate(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    mask: ArrayView2<bool>,
    want_grad: bool,
) -> Result<(CompositeLossTerms, Option<Array2<f64>>)> {
    if pred.dim() != target.dim() || pred.dim() != mask.dim() {
        return Err(Error::Dimension(format!(
            "prediction {:?}, target {:?} and mask {:?} must match",
            pred.dim(),
            target.dim(),
            mask.dim()
        )));
    }
    let (h, w) = pred.dim();
    let n_valid = mask.iter().filter(|&&m| m).count();
    if n_valid == 0 {
        return Err(Error::EmptyMask("composite loss needs at least one valid pixel"));
    }

    let e = &pred - &target;
    let x_ok = |i: usize, j: usize| mask[[i, j]] && mask[[i, (j + 1).min(w - 1)]];
    let y_ok = |i: usize, j: usize| mask[[i, j]] && mask[[(i + 1).min(h - 1), j]];
    let (mut nx, mut ny, mut nn) = (0usize, 0usize, 0usize);
    for i in 0..h {
        for j in 0..w {
            let (a, b) = (x_ok(i, j), y_ok(i, j));
            nx += a as usize;
            ny += b as usize;
            nn += (a && b) as usize;
        }
    }

    let mut grad = want_grad.then(|| Array2::<f64>::zeros((h, w)));
    let (mut sum_depth, mut sum_gx, mut sum_gy, mut sum_normal) = (0.0, 0.0, 0.0, 0.0);
    let inv = |n: usize| if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let (inv_v, inv_x, inv_y, inv_n) = (inv(n_valid), inv(nx), inv(ny), inv(nn));

    for i in 0..h {
        let i1 = (i + 1).min(h - 1);
        for j in 0..w {
            if !mask[[i, j]] {
                continue;
            }
            let j1 = (j + 1).min(w - 1);
            sum_depth += log_error(e[[i, j]]);
            if let Some(g) = grad.as_mut() {
                g[[i, j]] += log_error_deriv(e[[i, j]]) * inv_v;
            }

            let (has_x, has_y) = (x_ok(i, j), y_ok(i, j));
            if has_x {
                let gx = e[[i, j1]] - e[[i, j]];
                sum_gx += log_error(gx);
                if let Some(g) = grad.as_mut() {
                    let d = log_error_deriv(gx) * inv_x;
                    g[[i, j1]] += d;
                    g[[i, j]] -= d;
                }
            }
            if has_y {
                let gy = e[[i1, j]] - e[[i, j]];
                sum_gy += log_error(gy);
                if let Some(g) = grad.as_mut() {
                    let d = log_error_deriv(gy) * inv_y;
                    g[[i1, j]] += d;
                    g[[i, j]] -= d;
                }
            }
            if has_x && has_y {
                let a = [-(pred[[i, j1]] - pred[[i, j]]), -(pred[[i1, j]] - pred[[i, j]]), 1.0];
                let b = [
                    -(target[[i, j1]] - target[[i, j]]),
                    -(target[[i1, j]] - target[[i, j]]),
                    1.0,
                ];
                let na = (a[0] * a[0] + a[1] * a[1] + 1.0).sqrt();
                let nb = (b[0] * b[0] + b[1] * b[1] + 1.0).sqrt();
                let dot = a[0] * b[0] + a[1] * b[1] + 1.0;
                let cos = dot / (na * nb);
                sum_normal += 1.0 - cos;
                if let Some(g) = grad.as_mut() {
                    // ∂(1 − cos)/∂a_k for the two slope components.
                    let da = |k: usize| -(b[k] / (na * nb) - cos * a[k] / (na * na)) * inv_n;
                    let (d0, d1) = (da(0), da(1));
                    g[[i, j1]] -= d0;
                    g[[i, j]] += d0;
                    g[[i1, j]] -= d1;
                    g[[i, j]] += d1;
                }
            }
        }
    }

    let l_depth = sum_depth * inv_v;
    let l_grad = sum_gx * inv_x + sum_gy * inv_y;
    let l_normal = sum_normal * inv_n;
    let terms = CompositeLossTerms {
        l_depth,
        l_grad,
        l_normal,
        total: l_depth + l_grad + l_normal,
    };
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("composite loss {terms:?}")));
    }
    Ok((terms, grad))
}
