//! Small numeric helpers shared across the crate.
//!
//! Transcendental functions go through `libm` so that the crate stays
//! `no_std` and every build produces bit-identical results.

use alloc::vec::Vec;

pub use libm::{cos, exp, fabs, floor, log, log1p, sin, sqrt};

pub const PI: f64 = core::f64::consts::PI;

/// Logistic squashing of a logit into (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn mean(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().sum::<f64>() / a.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let m = mean(a);
    a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / a.len() as f64
}

/// Median of a slice; the mean of the two middle values for even lengths.
pub fn median(a: &[f64]) -> f64 {
    assert!(!a.is_empty(), "median of empty slice");
    let mut v: Vec<f64> = a.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Indices `0..values.len()` ordered by descending value, ties by smaller
/// index first.
pub fn argsort_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Indices ordered by ascending value, ties by smaller index first.
pub fn argsort_asc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 0.999_999);
        assert!(sigmoid(-40.0) < 1e-6);
    }

    #[test]
    fn argsort_breaks_ties_by_index() {
        let v = [1.0, 1.0, 0.0, 2.0];
        assert_eq!(argsort_desc(&v), [3, 0, 1, 2]);
        assert_eq!(argsort_asc(&v), [2, 0, 1, 3]);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn cos_pi_is_exactly_minus_one() {
        assert_eq!(cos(PI), -1.0);
    }
}
