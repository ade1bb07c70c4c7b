//! Softmax cross-entropy for class labels and for per-pixel label masks.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Image;

/// Numerically stable softmax probabilities.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient.
pub fn softmax_xent<T: Real>(logits: &[T], label: usize) -> Result<(f64, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::Contract(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln();
    let loss = log_sum - (logits[label].f64() - max);
    let p = softmax(logits);
    let grad = p.iter().enumerate().map(|(i, &pi)| T::of(if i == label { pi - 1.0 } else { pi })).collect();
    Ok((loss, grad))
}

/// Per-pixel cross-entropy averaged over pixels. `logits` has one channel per class.
pub fn softmax_xent_pixels<T: Real>(logits: &Image<T>, mask: &[u8]) -> Result<(f64, Image<T>)> {
    let (nc, n) = (logits.channels, logits.height * logits.width);
    if mask.len() != n {
        return Err(Error::Shape(format!("mask has {} pixels, logits {n}", mask.len())));
    }
    let mut grad = Image::zeros(nc, logits.height, logits.width);
    let mut loss = 0.0;
    let mut column = vec![T::zero(); nc];
    for (i, &label) in mask.iter().enumerate() {
        for (c, v) in column.iter_mut().enumerate() {
            *v = logits.data[c * n + i];
        }
        let (l, g) = softmax_xent(&column, label as usize)?;
        loss += l;
        for (c, gv) in g.into_iter().enumerate() {
            grad.data[c * n + i] = T::of(gv.f64() / n as f64);
        }
    }
    Ok((loss / n as f64, grad))
}

/// Per-pixel argmax over channels (ties to the lowest class).
pub fn argmax_pixels<T: Real>(logits: &Image<T>) -> Vec<u8> {
    let n = logits.height * logits.width;
    (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..logits.channels {
                if logits.data[c * n + i] > logits.data[best * n + i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff;

    #[test]
    fn uniform_logits_cost_log_classes() {
        let (l, _) = softmax_xent(&[0.4f64, 0.4, 0.4], 2).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_a_contract_violation() {
        assert!(matches!(softmax_xent(&[0.0f64, 1.0], 2), Err(Error::Contract(_))));
    }

    #[test]
    fn large_logits_stay_finite() {
        let (l, g) = softmax_xent(&[1000.0f64, -1000.0], 0).unwrap();
        assert!(l.is_finite() && l < 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let logits = [0.3, -1.1, 2.0, 0.05];
        let (_, g) = softmax_xent(&logits, 1).unwrap();
        let fd = finite_diff(|x| softmax_xent(x, 1).unwrap().0, &logits, 1e-5);
        assert!(crate::tensor::relative_l2(&g, &fd) < 1e-8);

        let img = Image::from_vec(3, 2, 2, vec![0.1, -0.4, 1.0, 0.0, 0.7, 0.2, -0.3, 0.5, 0.0, 0.9, 0.1, -0.6]).unwrap();
        let mask = [0u8, 2, 1, 1];
        let (_, gi) = softmax_xent_pixels(&img, &mask).unwrap();
        let fd = finite_diff(
            |x| softmax_xent_pixels(&Image::from_vec(3, 2, 2, x.to_vec()).unwrap(), &mask).unwrap().0,
            &img.data,
            1e-5,
        );
        assert!(crate::tensor::relative_l2(&gi.data, &fd) < 1e-8);
    }
}
