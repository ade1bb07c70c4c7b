//! Synthetic segmentation images of disks and concave stars.
//!
//! Objects are rescaled at rasterization time, so every image stays binary.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Image;

pub const BACKGROUND: u8 = 0;
pub const DISK: u8 = 1;
pub const STAR: u8 = 2;
pub const SHAPE_CLASSES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ShapesConfig {
    pub size: usize,
    pub images: usize,
    /// Inclusive range of objects per image.
    pub objects: (usize, usize),
    pub disk_radius: f64,
    pub star_outer: f64,
    pub star_inner: f64,
    pub star_points: usize,
    /// Objects are rescaled by factors uniform in `[2^-i, 2^i]`.
    pub scale_exponent: f64,
    /// Minimum gap between the bounding circles of two objects.
    pub min_separation: f64,
    /// Position draws per object before the layout is restarted.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for ShapesConfig {
    fn default() -> Self {
        ShapesConfig {
            size: 64,
            images: 100,
            objects: (2, 4),
            disk_radius: 5.0,
            star_outer: 7.0,
            star_inner: 3.0,
            star_points: 4,
            scale_exponent: 0.0,
            min_separation: 2.0,
            max_retries: 100,
            seed: 0,
        }
    }
}

impl ShapesConfig {
    /// The full-resolution variant: 224 pixels with radii scaled to match.
    pub fn full_scale() -> Self {
        let k = 224.0 / 64.0;
        let d = ShapesConfig::default();
        ShapesConfig {
            size: 224,
            images: 10000,
            objects: (4, 8),
            disk_radius: d.disk_radius * k,
            star_outer: d.star_outer * k,
            star_inner: d.star_inner * k,
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.0 > self.objects.1 {
            return Err(Error::Config(format!("object range {:?} is empty", self.objects)));
        }
        if !(self.disk_radius > 0.0) || !(self.star_inner > 0.0) || !(self.star_inner < self.star_outer) {
            return Err(Error::Config("radii must be positive with star_inner < star_outer".into()));
        }
        if self.star_points < 3 {
            return Err(Error::Config("stars need at least 3 points".into()));
        }
        if !(self.scale_exponent >= 0.0) || !self.scale_exponent.is_finite() {
            return Err(Error::Config("scale exponent must be finite and non-negative".into()));
        }
        let largest = self.disk_radius.max(self.star_outer) * 2f64.powf(self.scale_exponent);
        if 2.0 * largest + 2.0 > self.size as f64 {
            return Err(Error::Config(format!("objects of radius {largest:.1} do not fit in a {} pixel image", self.size)));
        }
        if self.max_retries == 0 {
            return Err(Error::Config("max_retries must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    Disk,
    Star { rotation: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacedObject {
    pub kind: ShapeKind,
    pub center: (f64, f64),
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image<f64>,
    /// Row-major labels: 0 background, 1 disk, 2 star.
    pub mask: Vec<u8>,
    pub objects: Vec<PlacedObject>,
}

impl LabeledImage {
    /// Nonzero labels exactly where the image is one.
    pub fn is_consistent(&self) -> bool {
        self.image.data.len() == self.mask.len()
            && self
                .image
                .data
                .iter()
                .zip(&self.mask)
                .all(|(&v, &m)| (v == 1.0 && m != BACKGROUND) || (v == 0.0 && m == BACKGROUND))
    }
}

/// Pixels of a shape inside its bounding box, origin at `(row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryPatch {
    pub origin: (i64, i64),
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryPatch {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Absolute `(row, col)` of every set pixel.
    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (self.origin.0 + (i / self.width) as i64, self.origin.1 + (i % self.width) as i64))
    }
}

/// Scan-line fill of a polygon; pixel centres sit at integer coordinates and
/// vertices are `(row, col)`.
fn fill_polygon(vertices: &[(f64, f64)]) -> BinaryPatch {
    let (mut y0, mut y1, mut x0, mut x1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(y, x) in vertices {
        y0 = y0.min(y);
        y1 = y1.max(y);
        x0 = x0.min(x);
        x1 = x1.max(x);
    }
    let origin = (y0.ceil() as i64, x0.ceil() as i64);
    let height = (y1.floor() as i64 - origin.0 + 1).max(0) as usize;
    let width = (x1.floor() as i64 - origin.1 + 1).max(0) as usize;
    let mut data = vec![false; height * width];
    let mut crossings = Vec::new();
    for r in 0..height {
        let y = (origin.0 + r as i64) as f64;
        crossings.clear();
        for i in 0..vertices.len() {
            let (ay, ax) = vertices[i];
            let (by, bx) = vertices[(i + 1) % vertices.len()];
            // Half-open rule so shared vertices count once.
            if (ay <= y) != (by <= y) {
                crossings.push(ax + (y - ay) / (by - ay) * (bx - ax));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let lo = (pair[0].ceil() as i64 - origin.1).max(0);
            let hi = (pair[1].floor() as i64 - origin.1).min(width as i64 - 1);
            for c in lo..=hi {
                data[r * width + c as usize] = true;
            }
        }
    }
    BinaryPatch { origin, height, width, data }
}

/// Filled star with `points` outer vertices alternating with inner ones.
pub fn rasterize_star(center: (f64, f64), outer: f64, inner: f64, points: usize, rotation: f64) -> Result<BinaryPatch> {
    if points < 3 {
        return Err(Error::Domain(format!("a star needs at least 3 points, got {points}")));
    }
    if !(inner > 0.0) || !(inner < outer) || !outer.is_finite() {
        return Err(Error::Domain(format!("star radii need 0 < inner < outer, got {inner} and {outer}")));
    }
    let vertices: Vec<(f64, f64)> = (0..2 * points)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let a = rotation + k as f64 * PI / points as f64;
            (center.0 - r * a.sin(), center.1 + r * a.cos())
        })
        .collect();
    Ok(fill_polygon(&vertices))
}

pub fn rasterize_disk(center: (f64, f64), radius: f64) -> Result<BinaryPatch> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!("disk radius must be positive, got {radius}")));
    }
    let origin = ((center.0 - radius).ceil() as i64, (center.1 - radius).ceil() as i64);
    let height = ((center.0 + radius).floor() as i64 - origin.0 + 1) as usize;
    let width = ((center.1 + radius).floor() as i64 - origin.1 + 1) as usize;
    let mut data = vec![false; height * width];
    for r in 0..height {
        for c in 0..width {
            let dy = (origin.0 + r as i64) as f64 - center.0;
            let dx = (origin.1 + c as i64) as f64 - center.1;
            data[r * width + c] = dy * dy + dx * dx <= radius * radius;
        }
    }
    Ok(BinaryPatch { origin, height, width, data })
}

fn bounding_radius(cfg: &ShapesConfig, kind: ShapeKind, scale: f64) -> f64 {
    match kind {
        ShapeKind::Disk => cfg.disk_radius * scale,
        ShapeKind::Star { .. } => cfg.star_outer * scale,
    }
}

fn draw_scale(cfg: &ShapesConfig, rng: &mut ChaCha8Rng) -> f64 {
    if cfg.scale_exponent == 0.0 {
        1.0
    } else {
        let e = 2f64.powf(cfg.scale_exponent);
        rng.gen_range(1.0 / e..=e)
    }
}

/// Positions for the given shapes, or `None` when some object could not be placed.
fn try_layout(cfg: &ShapesConfig, shapes: &[(ShapeKind, f64)], rng: &mut ChaCha8Rng) -> Option<Vec<(f64, f64)>> {
    let mut placed: Vec<((f64, f64), f64)> = Vec::with_capacity(shapes.len());
    let hi = (cfg.size - 1) as f64;
    for &(kind, scale) in shapes {
        let r = bounding_radius(cfg, kind, scale);
        let mut spot = None;
        for _ in 0..cfg.max_retries {
            let c = (rng.gen_range(r..=hi - r), rng.gen_range(r..=hi - r));
            let clear = placed.iter().all(|&(p, q)| {
                let d = ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt();
                d >= q + r + cfg.min_separation
            });
            if clear {
                spot = Some(c);
                break;
            }
        }
        placed.push((spot?, r));
    }
    Some(placed.into_iter().map(|(c, _)| c).collect())
}

/// One image from its own random stream.
///
/// Object kinds and scales are drawn first and never redrawn; when placement
/// fails the layout restarts with fresh positions, and after repeated failures
/// the last object is dropped.
pub fn generate_one(cfg: &ShapesConfig, rng: &mut ChaCha8Rng) -> Result<LabeledImage> {
    let n = rng.gen_range(cfg.objects.0..=cfg.objects.1);
    let mut shapes: Vec<(ShapeKind, f64)> = (0..n)
        .map(|_| {
            let kind = if rng.gen_bool(0.5) {
                ShapeKind::Disk
            } else {
                ShapeKind::Star { rotation: rng.gen_range(0.0..2.0 * PI / cfg.star_points as f64) }
            };
            (kind, draw_scale(cfg, rng))
        })
        .collect();
    let centers = loop {
        if let Some(c) = (0..cfg.max_retries).find_map(|_| try_layout(cfg, &shapes, rng)) {
            break c;
        }
        shapes.pop();
    };
    let size = cfg.size;
    let mut image = Image::zeros(1, size, size);
    let mut mask = vec![BACKGROUND; size * size];
    let mut objects = Vec::with_capacity(shapes.len());
    for (&(kind, scale), &center) in shapes.iter().zip(&centers) {
        let (patch, label) = match kind {
            ShapeKind::Disk => (rasterize_disk(center, cfg.disk_radius * scale)?, DISK),
            ShapeKind::Star { rotation } => {
                (rasterize_star(center, cfg.star_outer * scale, cfg.star_inner * scale, cfg.star_points, rotation)?, STAR)
            }
        };
        for (y, x) in patch.pixels() {
            if y >= 0 && x >= 0 && (y as usize) < size && (x as usize) < size {
                let i = y as usize * size + x as usize;
                mask[i] = label;
                image.data[i] = 1.0;
            }
        }
        objects.push(PlacedObject { kind, center, scale });
    }
    Ok(LabeledImage { image, mask, objects })
}

/// `cfg.images` images; image `j` uses stream `j` of a generator seeded with `cfg.seed`.
pub fn generate_shapes(cfg: &ShapesConfig) -> Result<Vec<LabeledImage>> {
    cfg.validate()?;
    (0..cfg.images)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(j as u64);
            generate_one(cfg, &mut rng)
        })
        .collect()
}
