//! Max reductions over the scale axis and over whole stacks, plus ReLU.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Image, ScaleStack};

/// Per-pixel maximum over scale levels, with the winning level of each output.
///
/// Ties go to the smallest level index. NaN wins over any number.
pub fn scale_maxpool<T: Real>(f: &ScaleStack<T>) -> (Image<T>, Vec<u32>) {
    let n = f.channels * f.height * f.width;
    let mut out = Image::from_vec(f.channels, f.height, f.width, f.data[..n].to_vec()).unwrap();
    let mut arg = vec![0u32; n];
    for k in 1..f.n_scales {
        let level = &f.data[k * n..(k + 1) * n];
        for i in 0..n {
            if level[i] > out.data[i] || (level[i].is_nan() && !out.data[i].is_nan()) {
                out.data[i] = level[i];
                arg[i] = k as u32;
            }
        }
    }
    (out, arg)
}

/// Routes each upstream value to the level that won the forward maximum.
pub fn scale_maxpool_backward<T: Real>(argmax: &[u32], n_scales: usize, upstream: &Image<T>) -> Result<ScaleStack<T>> {
    let n = upstream.data.len();
    if argmax.len() != n {
        return Err(Error::Shape(format!("{} argmax entries for {n} upstream values", argmax.len())));
    }
    let mut g = ScaleStack::zeros(n_scales, upstream.channels, upstream.height, upstream.width);
    for (i, (&k, &u)) in argmax.iter().zip(&upstream.data).enumerate() {
        g.data[k as usize * n + i] = u;
    }
    Ok(g)
}

/// Per-channel maximum over scale and space, with the flat index of each winner
/// (first occurrence in `(level, row, col)` order).
pub fn global_maxpool<T: Real>(f: &ScaleStack<T>) -> (Vec<T>, Vec<usize>) {
    let mut best = vec![T::neg_infinity(); f.channels];
    let mut arg = vec![0usize; f.channels];
    for k in 0..f.n_scales {
        for c in 0..f.channels {
            let base = f.index(k, c, 0, 0);
            for (j, &v) in f.plane(k, c).iter().enumerate() {
                if v > best[c] || (v.is_nan() && !best[c].is_nan()) {
                    best[c] = v;
                    arg[c] = base + j;
                }
            }
        }
    }
    (best, arg)
}

pub fn global_maxpool_backward<T: Real>(argmax: &[usize], shape: [usize; 4], upstream: &[T]) -> Result<ScaleStack<T>> {
    if argmax.len() != upstream.len() || shape[1] != upstream.len() {
        return Err(Error::Shape("global pooling gradient does not match the channel count".into()));
    }
    let mut g = ScaleStack::zeros(shape[0], shape[1], shape[2], shape[3]);
    for (&i, &u) in argmax.iter().zip(upstream) {
        g.data[i] += u;
    }
    Ok(g)
}

/// Clamps negatives to zero; NaN passes through.
pub fn relu<T: Real>(f: &ScaleStack<T>) -> ScaleStack<T> {
    let mut out = f.clone();
    for v in &mut out.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// Gradient of ReLU given its forward output.
pub fn relu_backward<T: Real>(output: &ScaleStack<T>, upstream: &ScaleStack<T>) -> ScaleStack<T> {
    let mut g = upstream.clone();
    for (gv, &y) in g.data.iter_mut().zip(&output.data) {
        if !(y > T::zero()) {
            *gv = T::zero();
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_passes_through() {
        let f = ScaleStack::from_vec(1, 2, 2, 2, (0..8).map(f64::from).collect()).unwrap();
        let (m, arg) = scale_maxpool(&f);
        assert_eq!(m.data, f.data);
        assert!(arg.iter().all(|&k| k == 0));
    }

    #[test]
    fn increasing_levels_pick_the_top() {
        let data = (0..4).flat_map(|k| vec![k as f64 * 0.5; 6]).collect();
        let f = ScaleStack::from_vec(4, 1, 2, 3, data).unwrap();
        let (m, arg) = scale_maxpool(&f);
        assert!(m.data.iter().all(|&v| v == 1.5));
        assert!(arg.iter().all(|&k| k == 3));
    }

    #[test]
    fn ties_go_to_the_lowest_level() {
        let f = ScaleStack::<f64>::filled(3, 1, 1, 2, 2.0);
        assert_eq!(scale_maxpool(&f).1, vec![0, 0]);
        let (_, arg) = global_maxpool(&f);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let f = ScaleStack::from_vec(1, 1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&f).data, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn global_pool_of_a_constant() {
        let f = ScaleStack::<f64>::filled(2, 3, 4, 4, -0.25);
        assert_eq!(global_maxpool(&f).0, vec![-0.25; 3]);
    }

    #[test]
    fn global_pool_gradient_hits_one_position_per_channel() {
        let f = ScaleStack::from_vec(2, 2, 2, 2, vec![1., 5., 2., 0., 3., 3., 1., 9., 4., 1., 7., 2., 0., 8., 8., 1.]).unwrap();
        let (v, arg) = global_maxpool(&f);
        assert_eq!(v, vec![7.0, 9.0]);
        let g = global_maxpool_backward(&arg, f.shape(), &[1.5, -2.0]).unwrap();
        for c in 0..2 {
            let hits: Vec<f64> = (0..2).flat_map(|k| g.plane(k, c).to_vec()).filter(|&x| x != 0.0).collect();
            assert_eq!(hits.len(), 1);
        }
        assert_eq!(g.get(1, 0, 1, 0), 1.5);
        assert_eq!(g.get(0, 1, 1, 1), -2.0);
    }
}
