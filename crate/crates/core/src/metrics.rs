//! Regression metrics and bootstrap confidence intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Coefficient of determination `1 - SS_res / SS_tot`.
///
/// `None` when the lengths differ, the input is empty, any value is not
/// finite, or the target has zero variance.
pub fn r2<T: Scalar>(y: &[T], pred: &[T]) -> Option<T> {
    if y.len() != pred.len() || y.is_empty() {
        return None;
    }
    if y.iter().chain(pred).any(|v| !v.is_finite()) {
        return None;
    }
    let n = T::from_usize(y.len())?;
    let mean = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let ss_tot = y.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    let ss_res = y.iter().zip(pred).fold(T::zero(), |a, (&v, &p)| a + (v - p) * (v - p));
    if ss_tot <= T::zero() {
        return None;
    }
    let r = T::one() - ss_res / ss_tot;
    r.is_finite().then_some(r)
}

pub fn mse<T: Scalar>(y: &[T], pred: &[T]) -> Option<T> {
    mean_of(y, pred, |e| e * e)
}

pub fn mae<T: Scalar>(y: &[T], pred: &[T]) -> Option<T> {
    mean_of(y, pred, |e| e.abs())
}

fn mean_of<T: Scalar>(y: &[T], pred: &[T], f: impl Fn(T) -> T) -> Option<T> {
    if y.len() != pred.len() || y.is_empty() {
        return None;
    }
    let s = y.iter().zip(pred).fold(T::zero(), |a, (&v, &p)| a + f(v - p));
    let m = s / T::from_usize(y.len())?;
    m.is_finite().then_some(m)
}

/// Median; NaNs sort last. `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap interval for the median.
pub fn bootstrap_median_ci(values: &[f64], iterations: usize, level: f64, seed: u64) -> Option<ConfidenceInterval> {
    let estimate = median(values)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..iterations.max(1))
        .map(|_| {
            let sample: Vec<f64> = (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .collect();
            median(&sample).unwrap()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    Some(ConfidenceInterval {
        estimate,
        lo: quantile_sorted(&stats, alpha / 2.0),
        hi: quantile_sorted(&stats, 1.0 - alpha / 2.0),
    })
}
