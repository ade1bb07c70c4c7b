//! Binary PGM (P5) images and label masks, plus the dataset manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Image;

/// Encodes bytes as a P5 file with maxval 255.
pub fn encode_p5(width: usize, height: usize, bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() != width * height {
        return Err(Error::Shape(format!("{} bytes for a {width}x{height} image", bytes.len())));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    Ok(out)
}

/// Decodes a P5 file with maxval at most 255; returns `(width, height, maxval, bytes)`.
pub fn decode_p5(raw: &[u8]) -> Result<(usize, usize, u32, Vec<u8>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        loop {
            match raw.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while raw.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Format("PGM header truncated".into())),
            }
        }
        let start = pos;
        while raw.get(pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&raw[start..pos]).map_err(|_| Error::Format("PGM header is not ASCII".into()))?);
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("PGM {what} {s:?} is not a number")));
    let (w, h, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} unsupported")));
    }
    if !raw.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format("PGM header not terminated by whitespace".into()));
    }
    pos += 1;
    let n = w * h;
    if raw.len() - pos != n {
        return Err(Error::Format(format!("PGM payload has {} bytes, expected {n}", raw.len() - pos)));
    }
    Ok((w, h, maxval as u32, raw[pos..].to_vec()))
}

/// Writes channel 0 of `img`, clamped to `[0, 1]` and quantized to 255 levels.
pub fn write_pgm(path: impl AsRef<Path>, img: &Image<f64>) -> Result<()> {
    let bytes: Vec<u8> = img.plane(0).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    fs::write(path, encode_p5(img.width, img.height, &bytes)?)?;
    Ok(())
}

/// Reads a P5 file as a one-channel image with values `byte / maxval`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image<f64>> {
    let (w, h, maxval, bytes) = decode_p5(&fs::read(path)?)?;
    Image::from_vec(1, h, w, bytes.iter().map(|&b| b as f64 / maxval as f64).collect())
}

/// Stores raw label values as P5 pixels.
pub fn write_mask(path: impl AsRef<Path>, width: usize, height: usize, labels: &[u8]) -> Result<()> {
    fs::write(path, encode_p5(width, height, labels)?)?;
    Ok(())
}

/// Returns `(width, height, labels)`.
pub fn read_mask(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let (w, h, _, bytes) = decode_p5(&fs::read(path)?)?;
    Ok((w, h, bytes))
}

/// One manifest line: image file, its label (or mask file), and its scale factor.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub image: String,
    pub target: String,
    pub scale: f64,
}

pub const MANIFEST_HEADER: &str = "image,target,scale";

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{MANIFEST_HEADER}")?;
    for r in records {
        writeln!(f, "{},{},{}", r.image, r.target, r.scale)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Format(format!("manifest must start with {MANIFEST_HEADER:?}")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Format(format!("manifest line {l:?} needs 3 fields")));
            }
            let scale = parts[2].parse().map_err(|_| Error::Format(format!("bad scale in manifest line {l:?}")))?;
            Ok(ManifestRecord { image: parts[0].into(), target: parts[1].into(), scale })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let b = encode_p5(64, 64, &[7; 4096]).unwrap();
        assert!(b.starts_with(b"P5\n64 64\n255\n"));
        assert_eq!(b.len(), 13 + 4096);
    }

    #[test]
    fn comments_and_odd_whitespace_are_accepted() {
        let mut raw = b"P5 # made by hand\n2\t1\n# max\n255\n".to_vec();
        raw.extend([3, 250]);
        assert_eq!(decode_p5(&raw).unwrap(), (2, 1, 255, vec![3, 250]));
    }

    #[test]
    fn malformed_headers_are_rejected() {
        for raw in
            [&b"P2\n1 1\n255\n\x00"[..], b"P5\n1 x\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00", b"P5\n1"]
        {
            assert!(matches!(decode_p5(raw), Err(Error::Format(_))), "{raw:?}");
        }
    }
}
