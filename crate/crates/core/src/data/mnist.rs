//! IDX parsing and multi-scale rendering of MNIST digits.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Image;

pub const IDX_LABELS: u32 = 0x0000_0801;
pub const IDX_IMAGES: u32 = 0x0000_0803;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    /// Item `i` along the first axis.
    pub fn item(&self, i: usize) -> &[u8] {
        let n: usize = self.dims[1..].iter().product();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.dims[0] == 0
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Format("IDX file shorter than its magic number".into()));
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let rank = match magic {
        IDX_LABELS => 1,
        IDX_IMAGES => 3,
        _ => return Err(Error::Format(format!("bad IDX magic {magic:#010x}"))),
    };
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("IDX header truncated".into()));
    }
    let dims: Vec<usize> = bytes[4..header].chunks_exact(4).map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize).collect();
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let n = n.ok_or_else(|| Error::Format(format!("IDX dims {dims:?} overflow")))?;
    if bytes.len() - header != n {
        return Err(Error::Format(format!("IDX payload has {} bytes, dims {dims:?} need {n}", bytes.len() - header)));
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?)
}

/// Digit side, in pixels, at scale factor one.
pub const UNIT_DIGIT: f64 = 16.0;

/// Bilinear rescale of a single-channel `h × w` byte image by `factor`, centred
/// in a `canvas × canvas` image with intensities in `[0, 1]`. Samples that fall
/// outside the source are zero.
pub fn render_scaled(pixels: &[u8], h: usize, w: usize, factor: f64, canvas: usize) -> Image<f64> {
    let mut out = Image::zeros(1, canvas, canvas);
    let mid = (canvas as f64 - 1.0) / 2.0;
    let (sy0, sx0) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = |y: i64, x: i64| -> f64 {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            0.0
        } else {
            pixels[y as usize * w + x as usize] as f64 / 255.0
        }
    };
    for y in 0..canvas {
        let sy = (y as f64 - mid) / factor + sy0;
        let (y0, ty) = (sy.floor(), sy - sy.floor());
        for x in 0..canvas {
            let sx = (x as f64 - mid) / factor + sx0;
            let (x0, tx) = (sx.floor(), sx - sx.floor());
            let (iy, ix) = (y0 as i64, x0 as i64);
            let top = src(iy, ix) * (1.0 - tx) + src(iy, ix + 1) * tx;
            let bottom = src(iy + 1, ix) * (1.0 - tx) + src(iy + 1, ix + 1) * tx;
            out.data[y * canvas + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

/// Labelled digit images at one scale factor.
#[derive(Clone, Debug)]
pub struct ScaledDigits {
    pub factor: f64,
    pub images: Vec<Image<f64>>,
    pub labels: Vec<u8>,
}

/// Renders digits `range` at `factor` (relative to [`UNIT_DIGIT`]).
pub fn render_digits(
    images: &IdxArray,
    labels: &IdxArray,
    range: Range<usize>,
    factor: f64,
    canvas: usize,
) -> Result<ScaledDigits> {
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::Format("expected an image array and a label array".into()));
    }
    let available = images.len().min(labels.len());
    if range.end > available {
        return Err(Error::Contract(format!("digits {range:?} requested, {available} available")));
    }
    let (h, w) = (images.dims[1], images.dims[2]);
    let resize = factor * UNIT_DIGIT / h as f64;
    let rendered = range.clone().into_par_iter().map(|i| render_scaled(images.item(i), h, w, resize, canvas)).collect();
    Ok(ScaledDigits { factor, images: rendered, labels: labels.data[range].to_vec() })
}

/// Training digits at one factor plus test digits at each test factor.
#[derive(Clone, Debug)]
pub struct MnistScales {
    pub train: ScaledDigits,
    pub test: Vec<ScaledDigits>,
}

#[derive(Clone, Debug)]
pub struct MnistRaw {
    pub train_images: IdxArray,
    pub train_labels: IdxArray,
    pub test_images: IdxArray,
    pub test_labels: IdxArray,
}

impl MnistRaw {
    /// Reads the four standard IDX files from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let d = dir.as_ref();
        Ok(MnistRaw {
            train_images: read_idx(d.join("train-images-idx3-ubyte"))?,
            train_labels: read_idx(d.join("train-labels-idx1-ubyte"))?,
            test_images: read_idx(d.join("t10k-images-idx3-ubyte"))?,
            test_labels: read_idx(d.join("t10k-labels-idx1-ubyte"))?,
        })
    }
}

pub fn build_mnist_large_scale(
    raw: &MnistRaw,
    train_count: usize,
    train_factor: f64,
    test_count: usize,
    test_factors: &[f64],
    canvas: usize,
) -> Result<MnistScales> {
    let train = render_digits(&raw.train_images, &raw.train_labels, 0..train_count, train_factor, canvas)?;
    let test = test_factors
        .iter()
        .map(|&f| render_digits(&raw.test_images, &raw.test_labels, 0..test_count, f, canvas))
        .collect::<Result<_>>()?;
    Ok(MnistScales { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::relative_l2;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn parses_a_small_image_file() {
        let mut b = header(IDX_IMAGES, &[2, 2, 3]);
        b.extend(0u8..12);
        let a = parse_idx(&b).unwrap();
        assert_eq!(a.dims, vec![2, 2, 3]);
        assert_eq!(a.item(1), &[6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut b = header(0x0000_0804, &[1, 1, 1]);
        b.push(0);
        assert!(matches!(parse_idx(&b), Err(Error::Format(_))));
        let mut b = header(IDX_LABELS, &[5]);
        b.extend([1, 2, 3]);
        assert!(matches!(parse_idx(&b), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&header(IDX_IMAGES, &[1])), Err(Error::Format(_))));
    }

    #[test]
    fn unit_factor_in_same_canvas_is_identity() {
        let px: Vec<u8> = (0..28 * 28).map(|i| (i * 37 % 256) as u8).collect();
        let img = render_scaled(&px, 28, 28, 1.0, 28);
        for (a, &b) in img.data.iter().zip(&px) {
            assert_eq!(*a, b as f64 / 255.0);
        }
    }

    #[test]
    fn upscale_then_downscale_round_trip() {
        // A smooth blob stands in for a digit stroke pattern.
        let px: Vec<u8> = (0..28 * 28)
            .map(|i| {
                let (y, x) = ((i / 28) as f64 - 13.5, (i % 28) as f64 - 13.5);
                (255.0 * (-(y * y + x * x) / 40.0).exp()) as u8
            })
            .collect();
        let up = render_scaled(&px, 28, 28, 2.0, 56);
        let bytes: Vec<u8> = up.data.iter().map(|v| (v * 255.0).round() as u8).collect();
        let back = render_scaled(&bytes, 56, 56, 0.5, 28);
        let orig: Vec<f64> = px.iter().map(|&v| v as f64 / 255.0).collect();
        assert!(relative_l2(&back.data, &orig) <= 0.15);
    }
}
