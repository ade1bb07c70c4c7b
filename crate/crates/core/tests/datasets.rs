use std::f64::consts::PI;
use std::path::Path;

use mseq_core::data::shapes::{ShapeKind, DISK, STAR};
use mseq_core::data::*;
use mseq_core::{Error, Image};

/// Kolmogorov–Smirnov statistic of `xs` against the uniform law on `[lo, hi]`.
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

fn hull_area(points: &[(i64, i64)]) -> f64 {
    let mut p: Vec<(i64, i64)> = points.to_vec();
    p.sort();
    p.dedup();
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(i64, i64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let twice: i64 = (0..hull.len())
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice.abs() as f64 / 2.0
}

#[test]
fn object_scales_are_uniform_on_the_interval() {
    let cfg = ShapesConfig { images: 400, scale_exponent: 1.0, seed: 17, ..ShapesConfig::default() };
    let scales: Vec<f64> =
        generate_shapes(&cfg).unwrap().iter().flat_map(|s| s.objects.iter().map(|o| o.scale)).take(1000).collect();
    assert_eq!(scales.len(), 1000);
    let d = ks_uniform(scales, 0.5, 2.0);
    assert!(d < 1.36 / 1000f64.sqrt(), "KS statistic {d}");
}

#[test]
fn ks_statistic_detects_a_wrong_law() {
    let xs: Vec<f64> = (0..1000).map(|i| 0.5 + 1.5 * (i as f64 / 1000.0).powi(2)).collect();
    assert!(ks_uniform(xs, 0.5, 2.0) > 1.36 / 1000f64.sqrt());
}

#[test]
fn fat_star_approaches_the_regular_polygon() {
    let (r, n) = (150.0, 4);
    let patch = rasterize_star((0.3, 0.1), r, r * (1.0 - 1e-9), n, 0.2).unwrap();
    let ratio = patch.count() as f64 / (PI * r * r);
    let expected = n as f64 * (PI / n as f64).sin() / PI;
    assert!((ratio - expected).abs() < 0.01, "{ratio} vs {expected}");
}

#[test]
fn star_rotation_by_one_period_is_invisible() {
    for points in [3, 4, 5, 7] {
        let a = rasterize_star((20.3, 17.7), 12.0, 5.0, points, 0.1).unwrap();
        let b = rasterize_star((20.3, 17.7), 12.0, 5.0, points, 0.1 + 2.0 * PI / points as f64).unwrap();
        let pa: Vec<_> = a.pixels().collect();
        let pb: Vec<_> = b.pixels().collect();
        assert_eq!(pa, pb, "{points} points");
    }
}

#[test]
fn stars_are_concave_and_disks_are_not() {
    let star = rasterize_star((30.2, 30.6), 14.0, 6.0, 4, 0.3).unwrap();
    let pts: Vec<_> = star.pixels().collect();
    assert!(hull_area(&pts) > star.count() as f64);
    let disk = rasterize_disk((30.2, 30.6), 14.0).unwrap();
    let pts: Vec<_> = disk.pixels().collect();
    assert!(hull_area(&pts) < disk.count() as f64);
}

#[test]
fn masks_label_each_object_kind() {
    let cfg = ShapesConfig { images: 30, seed: 5, scale_exponent: 2.0, ..ShapesConfig::default() };
    for s in generate_shapes(&cfg).unwrap() {
        assert!(s.is_consistent());
        for o in &s.objects {
            let (y, x) = (o.center.0.round() as usize, o.center.1.round() as usize);
            let want = match o.kind {
                ShapeKind::Disk => DISK,
                ShapeKind::Star { .. } => STAR,
            };
            assert_eq!(s.mask[y * 64 + x], want);
        }
    }
}

#[test]
fn pgm_and_mask_round_trips_are_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_vec(1, 5, 7, (0..35).map(|i| (i * 7 % 256) as f64 / 255.0).collect()).unwrap();
    let p = dir.path().join("a.pgm");
    write_pgm(&p, &img).unwrap();
    let back = read_pgm(&p).unwrap();
    assert_eq!(back, img);
    let bytes = std::fs::read(&p).unwrap();
    write_pgm(&p, &back).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);

    let labels: Vec<u8> = (0..35).map(|i| (i % 3) as u8).collect();
    let m = dir.path().join("m.pgm");
    write_mask(&m, 7, 5, &labels).unwrap();
    assert_eq!(read_mask(&m).unwrap(), (7, 5, labels));
}

#[test]
fn emitted_pgm_follows_the_netpbm_header_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.pgm");
    write_pgm(&p, &Image::zeros(1, 64, 64)).unwrap();
    let raw = std::fs::read(&p).unwrap();
    let text = String::from_utf8_lossy(&raw[..13]);
    let mut f = text.split_ascii_whitespace();
    assert_eq!(f.next(), Some("P5"));
    assert_eq!(f.next(), Some("64"));
    assert_eq!(f.next(), Some("64"));
    assert_eq!(f.next(), Some("255"));
    assert_eq!(raw[12], b'\n');
    assert_eq!(raw.len(), 13 + 4096);
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.csv");
    let recs = vec![
        ManifestRecord { image: "img/0.pgm".into(), target: "mask/0.pgm".into(), scale: 1.0 },
        ManifestRecord { image: "img/1.pgm".into(), target: "7".into(), scale: 2f64.sqrt() },
    ];
    write_manifest(&p, &recs).unwrap();
    assert_eq!(read_manifest(&p).unwrap(), recs);
}

#[test]
fn reference_mnist_files_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    if !dir.join("train-images-idx3-ubyte").exists() {
        eprintln!("MNIST files absent; run scripts/fetch_mnist.sh");
        return;
    }
    let raw = MnistRaw::load(&dir).unwrap();
    assert_eq!(raw.train_images.dims, vec![60000, 28, 28]);
    assert_eq!(raw.train_labels.dims, vec![60000]);
    assert_eq!(raw.test_images.dims, vec![10000, 28, 28]);
    assert!(raw.train_labels.data.iter().all(|&l| l < 10));
    let mut bytes = std::fs::read(dir.join("t10k-labels-idx1-ubyte")).unwrap();
    bytes[3] = 0x02;
    assert!(matches!(parse_idx(&bytes), Err(Error::Format(_))));
    let s = build_mnist_large_scale(&raw, 4, 2.0, 3, &[1.0, 4.0], 64).unwrap();
    assert_eq!(s.train.images.len(), 4);
    assert_eq!(s.test.len(), 2);
    // Larger renderings carry more ink.
    let ink = |d: &ScaledDigits| d.images.iter().map(|i| i.data.iter().sum::<f64>()).sum::<f64>();
    assert!(ink(&s.test[1]) > 4.0 * ink(&s.test[0]));
}
