//! Dense image and scale-stack containers.

use crate::error::{Error, Result};
use crate::real::Real;

/// A multichannel image stored as `(channels, height, width)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T = f64> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Image { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!("image data has {} entries, expected {channels}x{height}x{width}", data.len())));
        }
        Ok(Image { channels, height, width, data })
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image { channels: self.channels, height: self.height, width: self.width, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Integer translation with zero fill: `out(y, x) = self(y + dy, x + dx)`.
    pub fn shifted(&self, dy: i64, dx: i64) -> Self {
        let mut out = Image::zeros(self.channels, self.height, self.width);
        for c in 0..self.channels {
            for y in 0..self.height {
                let sy = y as i64 + dy;
                if sy < 0 || sy >= self.height as i64 {
                    continue;
                }
                for x in 0..self.width {
                    let sx = x as i64 + dx;
                    if sx < 0 || sx >= self.width as i64 {
                        continue;
                    }
                    out.set(c, y, x, self.get(c, sy as usize, sx as usize));
                }
            }
        }
        out
    }
}

/// A feature volume indexed by `(scale level, channel, row, column)`.
///
/// Level `k` carries the semigroup scale `2^-k`. All levels share one spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleStack<T = f64> {
    pub n_scales: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> ScaleStack<T> {
    pub fn zeros(n_scales: usize, channels: usize, height: usize, width: usize) -> Self {
        Self::filled(n_scales, channels, height, width, T::zero())
    }

    pub fn filled(n_scales: usize, channels: usize, height: usize, width: usize, v: T) -> Self {
        ScaleStack { n_scales, channels, height, width, data: vec![v; n_scales * channels * height * width] }
    }

    pub fn from_vec(n_scales: usize, channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if n_scales == 0 {
            return Err(Error::Shape("scale stack needs at least one level".into()));
        }
        if data.len() != n_scales * channels * height * width {
            return Err(Error::Shape(format!(
                "stack data has {} entries, expected {n_scales}x{channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(ScaleStack { n_scales, channels, height, width, data })
    }

    /// Stacks single-level images into levels `0..images.len()`.
    pub fn from_levels(levels: Vec<Image<T>>) -> Result<Self> {
        let first = levels.first().ok_or_else(|| Error::Shape("scale stack needs at least one level".into()))?;
        let (c, h, w) = (first.channels, first.height, first.width);
        let mut data = Vec::with_capacity(levels.len() * c * h * w);
        for img in &levels {
            if (img.channels, img.height, img.width) != (c, h, w) {
                return Err(Error::Shape("levels disagree in shape".into()));
            }
            data.extend_from_slice(&img.data);
        }
        ScaleStack::from_vec(levels.len(), c, h, w, data)
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        [self.n_scales, self.channels, self.height, self.width]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, k: usize, c: usize, y: usize, x: usize) -> usize {
        ((k * self.channels + c) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(k, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, k: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(k, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, k: usize, c: usize) -> &[T] {
        let n = self.height * self.width;
        let start = (k * self.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, k: usize, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        let start = (k * self.channels + c) * n;
        &mut self.data[start..start + n]
    }

    pub fn level(&self, k: usize) -> Image<T> {
        let n = self.channels * self.height * self.width;
        Image { channels: self.channels, height: self.height, width: self.width, data: self.data[k * n..(k + 1) * n].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ScaleStack<U> {
        ScaleStack {
            n_scales: self.n_scales,
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }
}

/// Relative L2 distance `‖a − b‖ / ‖b‖`.
pub fn relative_l2<T: Real>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x.f64() - y.f64();
        num += d * d;
        den += y.f64() * y.f64();
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}
