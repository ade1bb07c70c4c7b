//! Dataset generation, ingestion and image files.

pub mod mnist;
pub mod pgm;
pub mod shapes;

pub use mnist::{
    build_mnist_large_scale, parse_idx, read_idx, render_digits, render_scaled, IdxArray, MnistRaw, MnistScales, ScaledDigits,
};
pub use pgm::{read_manifest, read_mask, read_pgm, write_manifest, write_mask, write_pgm, ManifestRecord};
pub use shapes::{generate_shapes, rasterize_disk, rasterize_star, BinaryPatch, LabeledImage, ShapeKind, ShapesConfig};
