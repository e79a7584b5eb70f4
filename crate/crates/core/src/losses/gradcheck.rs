//! Finite-difference oracles shared by the gradient tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_map(h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((h, w), |_| rng.gen_range(lo..hi))
}

/// `(f(x + h·eₖ) − f(x − h·eₖ)) / 2h` for every coordinate `k`.
pub fn central_difference(x: &Array2<f64>, step: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.dim());
    for (idx, &x0) in x.indexed_iter() {
        probe[idx] = x0 + step;
        let up = f(&probe);
        probe[idx] = x0 - step;
        let down = f(&probe);
        probe[idx] = x0;
        out[idx] = (up - down) / (2.0 * step);
    }
    out
}

/// `max |a − n| / max(|a|, |n|, 1e-3)`; the floor keeps near-zero entries
/// from dominating.
pub fn max_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// True when every pixel error and every non-replicated forward difference
/// of the error is at least `margin` away from zero, where the smoothed
/// `|x|` bends within ~1e-6 and a central difference would straddle it.
pub fn away_from_kinks(pred: &Array2<f64>, target: &Array2<f64>, margin: f64) -> bool {
    let e = pred - target;
    let (h, w) = e.dim();
    e.indexed_iter().all(|((i, j), &v)| {
        v.abs() > margin
            && (j + 1 >= w || (e[[i, j + 1]] - v).abs() > margin)
            && (i + 1 >= h || (e[[i + 1, j]] - v).abs() > margin)
    })
}

/// A prediction/target pair drawn from `seed` onward, skipping draws that
/// fail [`away_from_kinks`] with a 1e-3 margin.
pub fn random_pair(h: usize, w: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    (0..)
        .map(|k| {
            let s = seed.wrapping_mul(7919).wrapping_add(k);
            (random_map(h, w, s, 0.5, 5.0), random_map(h, w, s ^ 0xA5A5, 0.5, 5.0))
        })
        .find(|(p, t)| away_from_kinks(p, t, 1e-3))
        .expect("infinite iterator")
}
