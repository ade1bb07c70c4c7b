use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Image;

/// Sampled 1-D Gaussian of variance `t` on offsets `-radius..=radius`, normalized to unit sum.
pub fn gaussian_kernel(t: f64, radius: usize) -> Result<Vec<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("gaussian variance must be positive, got {t}")));
    }
    if radius == 0 {
        return Err(Error::Domain("gaussian kernel radius must be at least 1".into()));
    }
    let norm = (2.0 * PI * t).sqrt().recip();
    let mut k: Vec<f64> = (-(radius as i64)..=radius as i64).map(|x| norm * (-((x * x) as f64) / (2.0 * t)).exp()).collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    Ok(k)
}

/// Kernel radius covering `sigmas` standard deviations of a variance-`t` Gaussian.
pub(crate) fn blur_radius(t: f64, sigmas: f64) -> usize {
    ((sigmas * t.sqrt()).ceil() as usize).max(1)
}

/// Separable Gaussian blur with edge replication; `t` is the variance in pixels².
pub fn gaussian_blur<T: Real>(f: &Image<T>, t: f64, truncation_sigmas: f64) -> Result<Image<T>> {
    if t == 0.0 {
        return Ok(f.clone());
    }
    let kernel = gaussian_kernel(t, blur_radius(t, truncation_sigmas))?;
    let kernel: Vec<T> = kernel.into_iter().map(T::of).collect();
    let r = (kernel.len() / 2) as i64;
    let (h, w) = (f.height, f.width);
    let mut tmp = Image::zeros(f.channels, h, w);
    let mut out = Image::zeros(f.channels, h, w);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    for c in 0..f.channels {
        let src = f.plane(c);
        let dst = tmp.plane_mut(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = T::zero();
                for (j, &kv) in kernel.iter().enumerate() {
                    acc += kv * row[clamp(x as i64 + j as i64 - r, w)];
                }
                dst[y * w + x] = acc;
            }
        }
        let src = tmp.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (j, &kv) in kernel.iter().enumerate() {
                    acc += kv * src[clamp(y as i64 + j as i64 - r, h) * w + x];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    Ok(out)
}
