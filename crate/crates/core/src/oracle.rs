//! Slow reference implementations for tests. Nothing here shares code with the fast paths.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::SemigroupFilter;
use crate::scalespace::MorphOp;
use crate::tensor::{Image, ScaleStack};

/// Direct transcription of the semigroup cross-correlation.
///
/// Terms are accumulated with fused multiply-adds in `(l, c, jy, jx)` order and
/// out-of-grid reads are skipped.
pub fn naive_scale_xcorr(f: &ScaleStack<f64>, h: &SemigroupFilter<f64>, stride: usize) -> Result<ScaleStack<f64>> {
    if h.taps > f.n_scales {
        return Err(Error::Shape(format!("{} taps on {} levels", h.taps, f.n_scales)));
    }
    if h.c_in != f.channels {
        return Err(Error::Shape("channel mismatch".into()));
    }
    let levels = f.n_scales - h.taps + 1;
    let ho = f.height.div_ceil(stride);
    let wo = f.width.div_ceil(stride);
    let r = (h.kernel / 2) as i64;
    let mut out = ScaleStack::zeros(levels, h.c_out, ho, wo);
    for k in 0..levels {
        let dil = 1i64 << k;
        for o in 0..h.c_out {
            for yo in 0..ho {
                for xo in 0..wo {
                    let (y, x) = ((yo * stride) as i64, (xo * stride) as i64);
                    let mut acc = 0.0;
                    for l in 0..h.taps {
                        for c in 0..h.c_in {
                            for dy in -r..=r {
                                let sy = y + dil * dy;
                                if sy < 0 || sy >= f.height as i64 {
                                    continue;
                                }
                                for dx in -r..=r {
                                    let sx = x + dil * dx;
                                    if sx < 0 || sx >= f.width as i64 {
                                        continue;
                                    }
                                    let w = h.get(l, c, o, (dy + r) as usize, (dx + r) as usize);
                                    acc = f.get(k + l, c, sy as usize, sx as usize).mul_add(w, acc);
                                }
                            }
                        }
                    }
                    out.set(k, o, yo, xo, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Full-window quadratic dilation or erosion with an explicit support radius.
///
/// Each candidate is `(f − q(y_c)) − q(y_r)` (signs flipped for erosion), the
/// same rounding the separable path performs.
pub fn naive_morphology(f: &Image<f64>, t: f64, c: f64, op: MorphOp, radius: usize) -> Image<f64> {
    let q = |d: i64| (d * d) as f64 / (4.0 * c * t);
    let r = radius as i64;
    let mut out = Image::zeros(f.channels, f.height, f.width);
    for ch in 0..f.channels {
        for y in 0..f.height as i64 {
            for x in 0..f.width as i64 {
                let mut best = match op {
                    MorphOp::Dilate => f64::NEG_INFINITY,
                    MorphOp::Erode => f64::INFINITY,
                };
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (sy, sx) = match op {
                            MorphOp::Dilate => (y - dy, x - dx),
                            MorphOp::Erode => (y + dy, x + dx),
                        };
                        if sy < 0 || sx < 0 || sy >= f.height as i64 || sx >= f.width as i64 {
                            continue;
                        }
                        let v = f.get(ch, sy as usize, sx as usize);
                        best = match op {
                            MorphOp::Dilate => best.max((v - q(dx)) - q(dy)),
                            MorphOp::Erode => best.min((v + q(dx)) + q(dy)),
                        };
                    }
                }
                out.set(ch, y as usize, x as usize, best);
            }
        }
    }
    out
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff(mut func: impl FnMut(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let plus = func(&x);
            x[i] = orig - step;
            let minus = func(&x);
            x[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Input pixels `(level, row, col)`, relative to the output position, that feed
/// output level `out_level` after `layers` stride-1 cross-correlations with
/// `taps × kernel × kernel` filters, found by walking dependencies backwards.
pub fn trace_receptive_field(layers: usize, taps: usize, kernel: usize, out_level: usize) -> BTreeSet<(usize, i64, i64)> {
    let r = (kernel / 2) as i64;
    let mut front: BTreeSet<(usize, i64, i64)> = BTreeSet::from([(out_level, 0, 0)]);
    for _ in 0..layers {
        let mut next = BTreeSet::new();
        for &(k, y, x) in &front {
            let dil = 1i64 << k;
            for l in 0..taps {
                for dy in -r..=r {
                    for dx in -r..=r {
                        next.insert((k + l, y + dil * dy, x + dil * dx));
                    }
                }
            }
        }
        front = next;
    }
    front
}

/// Side of the bounding square of the traced pixels on one input level (0 if none).
pub fn traced_side(field: &BTreeSet<(usize, i64, i64)>, level: usize) -> usize {
    let ys: Vec<i64> = field.iter().filter(|p| p.0 == level).map(|p| p.1).collect();
    match (ys.iter().min(), ys.iter().max()) {
        (Some(lo), Some(hi)) => (hi - lo + 1) as usize,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let g = finite_diff(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn linear_derivative_is_exact() {
        let g = finite_diff(|x| 2.0 * x[0] - 0.5 * x[1], &[1.0, 7.0], 0.5);
        assert_eq!(g, vec![2.0, -0.5]);
    }

    #[test]
    fn single_layer_field_is_the_kernel() {
        let field = trace_receptive_field(1, 1, 3, 0);
        assert_eq!(field.len(), 9);
        assert_eq!(traced_side(&field, 0), 3);
    }

    #[test]
    fn pointwise_naive_xcorr() {
        let f = ScaleStack::from_vec(2, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let h = SemigroupFilter::new(1, 1, 1, 1, vec![-2.0]).unwrap();
        let g = naive_scale_xcorr(&f, &h, 1).unwrap();
        assert_eq!(g.data, f.data.iter().map(|v| -2.0 * v).collect::<Vec<_>>());
    }
}
