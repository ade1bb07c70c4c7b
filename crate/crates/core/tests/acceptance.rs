//! End-to-end acceptance checks. Every test prints one `PASS`/`FAIL` line and
//! then asserts it. The desk-scale experiments run once each, serialized so
//! their wall-clock budgets are measured without competing tests.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use mseq_core::data::pgm::{decode_p5, encode_p5};
use mseq_core::data::{parse_idx, read_pgm, write_pgm, MnistRaw};
use mseq_core::harness::checkpoint::{decode, encode, load_checkpoint, save_checkpoint};
use mseq_core::harness::checks::{self, CheckOutcome};
use mseq_core::harness::experiment::{mnist_splits, new_trainer, shape_samples, shapes_splits};
use mseq_core::harness::report::{accuracy_csv, distance_csv, iou_summary_csv, read_model_series, render_svg, write_text, Chart};
use mseq_core::harness::{run_classification, run_segmentation, ExperimentConfig, MetricsRecord, ModelKind, TaskKind};
use mseq_core::scalespace::LiftingKind;
use mseq_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;
static HEAVY: Mutex<()> = Mutex::new(());

fn report(n: usize, name: &str, passed: bool, detail: &str) {
    // Written to the stdout handle rather than with `println!` so the line shows
    // even when the test harness captures output.
    let line = format!("criterion {n:>2} {} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(passed, "criterion {n} ({name}) failed: {detail}");
}

fn check(n: usize, o: CheckOutcome) {
    report(n, o.name, o.passed, &o.detail);
}

fn artifacts() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn mnist_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn equivariant() -> Vec<ModelKind> {
    ModelKind::PRESET.iter().copied().filter(|&m| m != ModelKind::Cnn).collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn c01_semigroup_algebra() {
    check(1, checks::semigroup_algebra(SEED));
}

#[test]
fn c02_discrete_equivariance() {
    check(2, checks::discrete_equivariance(SEED));
}

#[test]
fn c03_oracle_equivalence() {
    check(3, checks::oracle_equivalence(SEED));
}

#[test]
fn c04_gradient_checks() {
    check(4, checks::gradient_checks(SEED));
}

#[test]
fn c05_lattice_laws() {
    check(5, checks::lattice_laws(SEED));
}

#[test]
fn c06_gaussian_semigroup() {
    check(6, checks::gaussian_semigroup(SEED));
}

#[test]
fn c07_lifting_equivariance() {
    check(7, checks::lifting_equivariance(SEED));
}

#[test]
fn c08_receptive_field_formula() {
    check(8, checks::receptive_fields());
}

struct Segmentation {
    records: Vec<MetricsRecord>,
    minutes: f64,
}

fn segmentation() -> &'static Segmentation {
    static CELL: OnceLock<Segmentation> = OnceLock::new();
    CELL.get_or_init(|| {
        let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        let cfg = ExperimentConfig::for_task(TaskKind::Segment);
        let started = Instant::now();
        let mut records = Vec::new();
        for &seed in &cfg.seeds {
            let data = shapes_splits(&cfg, seed).unwrap();
            for &model in &cfg.models {
                records.push(run_segmentation(&cfg, model, seed, &data).unwrap());
            }
        }
        write_text(artifacts().join("iou_summary.csv"), &iou_summary_csv(&records)).unwrap();
        Segmentation { records, minutes: started.elapsed().as_secs_f64() / 60.0 }
    })
}

/// Seed-averaged mean IoU of `model` on the range ending at `hi`.
fn seg_iou(s: &Segmentation, model: ModelKind, hi: f64) -> f64 {
    mean(s.records.iter().filter(|r| r.model == model).map(|r| r.iou.iter().find(|i| (i.hi - hi).abs() < 1e-9).unwrap().mean))
}

#[test]
fn c09_segmentation_generalization() {
    let s = segmentation();
    let dil = ModelKind::Lifted(LiftingKind::Dilation);
    let cnn = ModelKind::Cnn;
    let mut table = Vec::new();
    for m in ModelKind::PRESET {
        table.push(format!("{m} {:.3}/{:.3}/{:.3}", seg_iou(s, m, 1.0), seg_iou(s, m, 2.0), seg_iou(s, m, 4.0)));
    }
    let scale_one = seg_iou(s, dil, 1.0) >= 0.95;
    let gap = seg_iou(s, dil, 2.0) >= seg_iou(s, cnn, 2.0) + 0.10;
    let wide = equivariant().iter().all(|&m| seg_iou(s, m, 4.0) >= seg_iou(s, cnn, 4.0));
    let budget = s.minutes <= 30.0;
    let detail = format!(
        "IoU at 1 / [1/2,2] / [1/4,4]: {}; dilation>=0.95 at 1: {scale_one}, dilation>=cnn+0.10 on [1/2,2]: {gap}, all lifted>=cnn on [1/4,4]: {wide}, {:.1} min",
        table.join(", "),
        s.minutes
    );
    report(9, "segmentation generalization", scale_one && gap && wide && budget, &detail);
}

struct Classification {
    records: Option<Vec<MetricsRecord>>,
    minutes: f64,
    error: String,
}

fn classification() -> &'static Classification {
    static CELL: OnceLock<Classification> = OnceLock::new();
    CELL.get_or_init(|| {
        let _g = HEAVY.lock().unwrap_or_else(|e| e.into_inner());
        let mut cfg = ExperimentConfig::for_task(TaskKind::Classify);
        cfg.mnist.dir = mnist_dir();
        let raw = match MnistRaw::load(&cfg.mnist.dir) {
            Ok(r) => r,
            Err(e) => {
                return Classification {
                    records: None,
                    minutes: 0.0,
                    error: format!("MNIST unavailable in {} ({e}); run scripts/fetch_mnist.sh", cfg.mnist.dir.display()),
                }
            }
        };
        let started = Instant::now();
        let data = mnist_splits(&cfg, &raw).unwrap();
        let mut records = Vec::new();
        for &seed in &cfg.seeds {
            for &model in &cfg.models {
                records.push(run_classification(&cfg, model, seed, &data).unwrap());
            }
        }
        let dir = artifacts();
        write_text(dir.join("accuracy.csv"), &accuracy_csv(&records)).unwrap();
        write_text(dir.join("distance.csv"), &distance_csv(&records)).unwrap();
        Classification { records: Some(records), minutes: started.elapsed().as_secs_f64() / 60.0, error: String::new() }
    })
}

/// Seed-averaged accuracy curve of `model`.
fn acc_curve(records: &[MetricsRecord], model: ModelKind) -> Vec<(f64, f64)> {
    let runs: Vec<&MetricsRecord> = records.iter().filter(|r| r.model == model).collect();
    runs[0].accuracy.iter().enumerate().map(|(i, &(f, _))| (f, mean(runs.iter().map(|r| r.accuracy[i].1)))).collect()
}

/// Peak minus minimum accuracy over factors in `[lo, hi]`.
fn drop(curve: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let inside: Vec<f64> = curve.iter().filter(|(f, _)| *f >= lo - 1e-9 && *f <= hi + 1e-9).map(|p| p.1).collect();
    inside.iter().cloned().fold(f64::MIN, f64::max) - inside.iter().cloned().fold(f64::MAX, f64::min)
}

fn at(curve: &[(f64, f64)], factor: f64) -> f64 {
    curve.iter().find(|(f, _)| (f - factor).abs() < 1e-9).unwrap().1
}

#[test]
fn c10_classification_generalization() {
    let c = classification();
    let Some(records) = &c.records else {
        report(10, "classification generalization", false, &c.error);
        return;
    };
    let cnn = acc_curve(records, ModelKind::Cnn);
    let (cnn_drop, cnn_drop_28, cnn4) = (drop(&cnn, 1.0, 8.0), drop(&cnn, 2.0, 8.0), at(&cnn, 4.0));
    let mut ok = c.minutes <= 60.0;
    let mut parts = vec![format!("cnn drop {cnn_drop:.3} ([2,8]: {cnn_drop_28:.3}), acc@4 {cnn4:.3}")];
    for m in equivariant() {
        let curve = acc_curve(records, m);
        let (d, d28, a4) = (drop(&curve, 1.0, 8.0), drop(&curve, 2.0, 8.0), at(&curve, 4.0));
        ok &= d <= cnn_drop / 2.0 && a4 >= cnn4 + 0.15;
        parts.push(format!("{m} drop {d:.3} ([2,8]: {d28:.3}), acc@4 {a4:.3}"));
    }
    parts.push(format!("{:.1} min", c.minutes));
    let dir = artifacts();
    let chart = Chart {
        title: "Accuracy by scale".into(),
        x_label: "scale factor".into(),
        y_label: "test accuracy".into(),
        log2_x: true,
        series: read_model_series(dir.join("accuracy.csv")).unwrap(),
    };
    write_text(dir.join("accuracy_by_scale.svg"), &render_svg(&chart)).unwrap();
    report(10, "classification generalization", ok, &parts.join("; "));
}

#[test]
fn c11_feature_distance() {
    let c = classification();
    let Some(records) = &c.records else {
        report(11, "feature distance", false, &c.error);
        return;
    };
    let dist = |r: &MetricsRecord, f: f64| r.distance.iter().find(|(x, _)| (x - f).abs() < 1e-9).unwrap().1;
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in records.iter().map(|r| r.seed).collect::<std::collections::BTreeSet<_>>() {
        let cnn = records.iter().find(|r| r.seed == seed && r.model == ModelKind::Cnn).unwrap();
        for r in records.iter().filter(|r| r.seed == seed && r.model != ModelKind::Cnn) {
            for f in [4.0, 8.0] {
                if dist(r, f).partial_cmp(&dist(cnn, f)) != Some(std::cmp::Ordering::Less) {
                    ok = false;
                    parts.push(format!("seed {seed} {} at {f}: {:.3} vs cnn {:.3}", r.model, dist(r, f), dist(cnn, f)));
                }
            }
        }
    }
    let means: Vec<String> = ModelKind::PRESET
        .iter()
        .map(|&m| {
            let rs: Vec<&MetricsRecord> = records.iter().filter(|r| r.model == m).collect();
            format!("{m} {:.3}/{:.3}", mean(rs.iter().map(|r| dist(r, 4.0))), mean(rs.iter().map(|r| dist(r, 8.0))))
        })
        .collect();
    let detail = format!(
        "mean distance at 4/8: {}{}",
        means.join(", "),
        if ok { String::new() } else { format!("; {}", parts.join("; ")) }
    );
    report(11, "feature distance", ok, &detail);
}

fn tiny_segment_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_task(TaskKind::Segment);
    let s = &mut cfg.shapes;
    s.shapes.size = 24;
    s.shapes.disk_radius = 3.0;
    s.shapes.star_outer = 4.0;
    s.shapes.star_inner = 2.0;
    s.shapes.objects = (1, 2);
    s.train_count = 12;
    s.val_count = 4;
    s.test_exponents = vec![0.0];
    cfg.arch.widths = vec![3, 3];
    cfg.arch.strides = vec![1, 1];
    cfg.lifting.n_scales = 2;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 4;
    cfg.validate().unwrap();
    cfg
}

#[test]
fn c12_format_conformance() {
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    match MnistRaw::load(mnist_dir()) {
        Ok(raw) => {
            let dims = [&raw.train_images.dims, &raw.train_labels.dims, &raw.test_images.dims, &raw.test_labels.dims];
            if dims != [&vec![60000, 28, 28], &vec![60000], &vec![10000, 28, 28], &vec![10000]] {
                failures.push(format!("unexpected MNIST dims {dims:?}"));
            }
            let mut bytes = std::fs::read(mnist_dir().join("t10k-labels-idx1-ubyte")).unwrap();
            bytes[3] ^= 0x40;
            if parse_idx(&bytes).is_ok() {
                failures.push("corrupted IDX magic accepted".into());
            }
            notes.push("IDX accepted and corrupted magic rejected".to_string());
        }
        Err(e) => failures.push(format!("MNIST unavailable ({e}); run scripts/fetch_mnist.sh")),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let bytes: Vec<u8> = (0..37 * 23).map(|_| rng.gen()).collect();
    let (w, h, maxval, back) = decode_p5(&encode_p5(37, 23, &bytes).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_vec(1, 23, 37, bytes.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
    write_pgm(dir.path().join("x.pgm"), &img).unwrap();
    let reread = read_pgm(dir.path().join("x.pgm")).unwrap();
    if (w, h, maxval) != (37, 23, 255) || back != bytes || reread != img {
        failures.push("PGM round trip not bit-exact".into());
    }
    notes.push("PGM bit-exact".into());

    let cfg = tiny_segment_config();
    let model = ModelKind::Lifted(LiftingKind::Closing);
    let data = shapes_splits(&cfg, 4).unwrap();
    let (train, val) = (shape_samples::<f64>(&data.train), shape_samples::<f64>(&data.val));
    let mut full = new_trainer::<f64>(&cfg, model, 4).unwrap();
    full.run(&train, &val).unwrap();
    let blob = encode(&full.state()).unwrap();
    if encode(&decode(&blob).unwrap()).unwrap() != blob {
        failures.push("checkpoint round trip not bit-exact".into());
    }
    notes.push("checkpoint bit-exact".into());

    let path = dir.path().join("resume.ckpt");
    let mut first = new_trainer::<f64>(&cfg, model, 4).unwrap();
    first.run_epoch(&train, &val).unwrap();
    save_checkpoint(&path, &first).unwrap();
    let mut resumed = new_trainer::<f64>(&cfg, model, 4).unwrap();
    load_checkpoint(&path, &mut resumed).unwrap();
    resumed.run(&train, &val).unwrap();
    if encode(&resumed.state()).unwrap() != blob {
        failures.push("resumed training differs from the uninterrupted run".into());
    }
    notes.push("resume bit-identical".into());

    let ok = failures.is_empty();
    report(12, "format conformance", ok, &if ok { notes.join(", ") } else { failures.join("; ") });
}
