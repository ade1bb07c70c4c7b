use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mseq_core::data::pgm::encode_p5;
use mseq_core::data::{write_manifest, write_mask, write_pgm, LabeledImage, ManifestRecord, MnistRaw, ScaledDigits};
use mseq_core::harness::checkpoint::{load_checkpoint, save_checkpoint};
use mseq_core::harness::config::parse_pairs;
use mseq_core::harness::experiment::{
    digit_samples, evaluate_classifier, evaluate_segmenter, mnist_splits, new_trainer, predict_masks, scale_range, shape_samples,
    shapes_split, shapes_splits, MnistSplits,
};
use mseq_core::harness::report::{
    accuracy_csv, distance_csv, history_csv, iou_csv, iou_summary_csv, read_model_series, render_svg, write_text, Chart, Series,
    IOU_SUMMARY_HEADER,
};
use mseq_core::harness::{
    all_checks, run_classification, run_segmentation, ExperimentConfig, MetricsRecord, Precision, TaskKind,
};
use mseq_core::scalespace::LiftingKind;
use mseq_core::{Error, Real, Result};

use crate::Overrides;

const CONFIG_FILE: &str = "config.txt";
const CHECKPOINT_FILE: &str = "model.ckpt";
/// Test images per range whose predicted masks `eval` keeps.
const SAVED_MASKS: usize = 4;

/// Turns `--scales` into the config key it overrides for `task`.
pub fn scales_pair(task: TaskKind, list: &str) -> Result<(String, String)> {
    let bad = |item: &str, why: &str| Error::Config(format!("scales: '{item}' {why}"));
    let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Config("scales: empty list".into()));
    }
    let mut out = Vec::new();
    for item in items {
        match task {
            TaskKind::Segment => {
                let (lo, hi) = match item.split_once(':') {
                    Some((a, b)) => (a.trim().parse::<f64>(), b.trim().parse::<f64>()),
                    None => (item.parse::<f64>(), item.parse::<f64>()),
                };
                let (lo, hi) = match (lo, hi) {
                    (Ok(lo), Ok(hi)) if lo > 0.0 && hi >= lo && hi.is_finite() => (lo, hi),
                    _ => return Err(bad(item, "is not a range lo:hi of positive numbers")),
                };
                let e = hi.log2();
                if (lo.log2() + e).abs() > 1e-9 {
                    return Err(bad(item, "is not symmetric about scale one (lo·hi must equal 1)"));
                }
                out.push(format!("{e:?}"));
            }
            TaskKind::Classify => match item.parse::<f64>() {
                Ok(f) if f > 0.0 && f.is_finite() => out.push(format!("{f:?}")),
                _ => return Err(bad(item, "is not a positive scale factor")),
            },
        }
    }
    let key = match task {
        TaskKind::Segment => "shapes.test_exponents",
        TaskKind::Classify => "mnist.test_factors",
    };
    Ok((key.into(), out.join(",")))
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_pairs(&text)
}

/// Config from `base` pairs, then the config file, then flags.
fn resolve(mut pairs: Vec<(String, String)>, o: &Overrides) -> Result<ExperimentConfig> {
    if let Some(p) = &o.config {
        pairs.extend(read_pairs(p)?);
    }
    let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
    if let Some(t) = &o.task {
        push("task", t.clone());
    }
    if let Some(l) = &o.lifting {
        l.parse::<LiftingKind>().map_err(|_| {
            Error::Config(format!(
                "lifting: unknown value '{l}' (expected gaussian, dilation, closing, identity, erosion or opening)"
            ))
        })?;
        push("model", l.clone());
    }
    if let Some(m) = &o.model {
        push("model", m.clone());
    }
    if let Some(s) = o.seed {
        push("seed", s.to_string());
    }
    if let Some(d) = &o.out {
        push("out", d.display().to_string());
    }
    if let Some(n) = o.threads {
        push("threads", n.to_string());
    }
    for kv in &o.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("set: expected KEY=VALUE, found '{kv}'")))?;
        push(k.trim(), v.trim().to_string());
    }
    if let Some(list) = &o.scales {
        let task = ExperimentConfig::from_pairs(&pairs)?.task;
        let (k, v) = scales_pair(task, list)?;
        pairs.push((k, v));
    }
    let cfg = ExperimentConfig::from_pairs(&pairs)?;
    if cfg.threads > 0 {
        // Fails only if a pool already exists, which then keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    Ok(cfg)
}

/// The resolved config behind a command's outputs, preceded by the command line.
fn write_manifest_text(dir: &Path, name: &str, cfg: &ExperimentConfig) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let text = format!("# mseq {}\n# command: {}\n{}", env!("CARGO_PKG_VERSION"), args.join(" "), cfg.to_text());
    write_text(dir.join(name), &text)
}

fn mean_scale(img: &LabeledImage) -> f64 {
    if img.objects.is_empty() {
        return 1.0;
    }
    img.objects.iter().map(|o| o.scale).sum::<f64>() / img.objects.len() as f64
}

fn write_shape_split(dir: &Path, images: &[LabeledImage]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(images.len());
    for (i, s) in images.iter().enumerate() {
        let (image, target) = (format!("image_{i:05}.pgm"), format!("mask_{i:05}.pgm"));
        write_pgm(dir.join(&image), &s.image)?;
        write_mask(dir.join(&target), s.image.width, s.image.height, &s.mask)?;
        records.push(ManifestRecord { image, target, scale: mean_scale(s) });
    }
    write_manifest(dir.join("manifest.csv"), &records)
}

pub fn gen_shapes(o: &Overrides) -> Result<()> {
    let cfg = resolve(vec![("task".into(), "segment".into())], o)?;
    let splits = shapes_splits(&cfg, cfg.seed)?;
    write_shape_split(&cfg.out.join("train"), &splits.train)?;
    write_shape_split(&cfg.out.join("val"), &splits.val)?;
    for (e, imgs) in &splits.tests {
        let (lo, hi) = scale_range(*e);
        write_shape_split(&cfg.out.join(format!("test_{lo}_{hi}")), imgs)?;
    }
    write_manifest_text(&cfg.out, "manifest.txt", &cfg)?;
    println!("wrote {} split(s) to {}", 2 + splits.tests.len(), cfg.out.display());
    Ok(())
}

fn write_digit_split(dir: &Path, d: &ScaledDigits) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(d.images.len());
    for (i, (img, &label)) in d.images.iter().zip(&d.labels).enumerate() {
        let image = format!("digit_{i:05}.pgm");
        write_pgm(dir.join(&image), img)?;
        records.push(ManifestRecord { image, target: label.to_string(), scale: d.factor });
    }
    write_manifest(dir.join("manifest.csv"), &records)
}

pub fn gen_mnist_scales(o: &Overrides) -> Result<()> {
    let cfg = resolve(vec![("task".into(), "classify".into())], o)?;
    let raw = MnistRaw::load(&cfg.mnist.dir)?;
    let splits = mnist_splits(&cfg, &raw)?;
    write_digit_split(&cfg.out.join("train"), &splits.train)?;
    write_digit_split(&cfg.out.join("val"), &splits.val)?;
    for t in &splits.tests {
        write_digit_split(&cfg.out.join(format!("test_{}", t.factor)), t)?;
    }
    write_manifest_text(&cfg.out, "manifest.txt", &cfg)?;
    println!("wrote {} split(s) to {}", 2 + splits.tests.len(), cfg.out.display());
    Ok(())
}

fn train_typed<T: Real>(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let dir = &cfg.out;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let mut trainer = new_trainer::<T>(cfg, cfg.model, cfg.seed)?;
    if resume {
        load_checkpoint(&ckpt, &mut trainer)?;
        eprintln!("resumed {} after epoch {}", ckpt.display(), trainer.epoch);
    }
    let (train, val) = match cfg.task {
        TaskKind::Segment => {
            let s = shapes_splits(cfg, cfg.seed)?;
            (shape_samples::<T>(&s.train), shape_samples::<T>(&s.val))
        }
        TaskKind::Classify => {
            let raw = MnistRaw::load(&cfg.mnist.dir)?;
            let s = mnist_splits(cfg, &raw)?;
            (digit_samples::<T>(&s.train), digit_samples::<T>(&s.val))
        }
    };
    while trainer.epoch < cfg.train.epochs {
        let rec = trainer.run_epoch(&train, &val)?;
        eprintln!(
            "{} seed {} epoch {}: loss {:.4}, validation {:.4}",
            cfg.model, cfg.seed, rec.epoch, rec.train_loss, rec.val_score
        );
        save_checkpoint(&ckpt, &trainer)?;
    }
    let rec =
        MetricsRecord { history: trainer.history.clone(), seconds: trainer.seconds, ..MetricsRecord::new(cfg.model, cfg.seed) };
    write_text(dir.join("history.csv"), &history_csv(&[rec]))
}

pub fn train(o: &Overrides, resume: bool) -> Result<()> {
    let cfg = resolve(Vec::new(), o)?;
    fs::create_dir_all(&cfg.out)?;
    write_text(cfg.out.join(CONFIG_FILE), &cfg.to_text())?;
    write_manifest_text(&cfg.out, "manifest.txt", &cfg)?;
    match cfg.precision {
        Precision::F32 => train_typed::<f32>(&cfg, resume),
        Precision::F64 => train_typed::<f64>(&cfg, resume),
    }?;
    println!("trained {} (seed {}) into {}", cfg.model, cfg.seed, cfg.out.display());
    Ok(())
}

/// Places image, ground truth and prediction side by side, labels spread over the grey range.
fn comparison_strip(image: &[u8], truth: &[u8], pred: &[u8], w: usize, h: usize) -> Result<Vec<u8>> {
    let gap = 2;
    let width = 3 * w + 2 * gap;
    let mut out = vec![255u8; width * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            out[y * width + x] = image[i];
            out[y * width + w + gap + x] = truth[i].saturating_mul(127);
            out[y * width + 2 * (w + gap) + x] = pred[i].saturating_mul(127);
        }
    }
    encode_p5(width, h, &out)
}

fn eval_typed<T: Real>(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut trainer = new_trainer::<T>(cfg, cfg.model, cfg.seed)?;
    load_checkpoint(dir.join(CHECKPOINT_FILE), &mut trainer)?;
    let mut net = trainer.best_network()?;
    match cfg.task {
        TaskKind::Segment => {
            let tests = cfg
                .shapes
                .test_exponents
                .iter()
                .enumerate()
                .map(|(i, &e)| Ok((e, shapes_split(cfg, cfg.seed, 2 + i as u64, cfg.shapes.test_count, e)?)))
                .collect::<Result<Vec<_>>>()?;
            let ranges = evaluate_segmenter(&mut net, cfg, &tests)?;
            write_text(dir.join("iou.csv"), &iou_csv(&ranges))?;
            let masks = dir.join("masks");
            fs::create_dir_all(&masks)?;
            for (r, (e, imgs)) in tests.iter().enumerate() {
                let keep = &imgs[..imgs.len().min(SAVED_MASKS)];
                let images: Vec<_> = keep.iter().map(|s| s.image.clone()).collect();
                let preds = predict_masks(&mut net, &images, cfg.train.eval_batch)?;
                let (lo, hi) = scale_range(*e);
                for (j, (s, p)) in keep.iter().zip(&preds).enumerate() {
                    let stem = format!("range{r}_{lo}_{hi}_{j:02}");
                    write_pgm(masks.join(format!("{stem}_image.pgm")), &s.image)?;
                    write_mask(masks.join(format!("{stem}_truth.pgm")), s.image.width, s.image.height, &s.mask)?;
                    write_mask(masks.join(format!("{stem}_pred.pgm")), s.image.width, s.image.height, p)?;
                }
            }
            for r in &ranges {
                println!("[{:.3}, {:.3}] mean IoU {:.4}", r.lo, r.hi, r.mean);
            }
        }
        TaskKind::Classify => {
            let raw = MnistRaw::load(&cfg.mnist.dir)?;
            let m = &cfg.mnist;
            let test = |f: f64| mseq_core::data::render_digits(&raw.test_images, &raw.test_labels, 0..m.test_count, f, m.canvas);
            let empty = ScaledDigits { factor: m.train_factor, images: Vec::new(), labels: Vec::new() };
            let data = MnistSplits {
                train: empty.clone(),
                val: empty,
                reference: test(m.train_factor)?,
                tests: m.test_factors.iter().map(|&f| test(f)).collect::<Result<_>>()?,
            };
            let (accuracy, distance) = evaluate_classifier(&mut net, cfg, &data)?;
            let rec = MetricsRecord { accuracy, distance, ..MetricsRecord::new(cfg.model, cfg.seed) };
            write_text(dir.join("accuracy.csv"), &accuracy_csv(std::slice::from_ref(&rec)))?;
            write_text(dir.join("distance.csv"), &distance_csv(std::slice::from_ref(&rec)))?;
            for ((f, a), (_, d)) in rec.accuracy.iter().zip(&rec.distance) {
                println!("factor {f:.3}: accuracy {a:.4}, feature distance {d:.4}");
            }
        }
    }
    Ok(())
}

pub fn eval(run_dir: Option<PathBuf>, o: &Overrides) -> Result<()> {
    let dir = run_dir
        .or_else(|| o.out.clone())
        .ok_or_else(|| Error::Config("out: eval needs a run directory (positional or --out)".into()))?;
    let base = read_pairs(&dir.join(CONFIG_FILE))?;
    let o = Overrides { out: Some(dir.clone()), ..o.clone() };
    let cfg = resolve(base, &o)?;
    write_manifest_text(&dir, "eval_manifest.txt", &cfg)?;
    match cfg.precision {
        Precision::F32 => eval_typed::<f32>(&cfg, &dir),
        Precision::F64 => eval_typed::<f64>(&cfg, &dir),
    }
}

/// Prints the property-suite table; success iff every suite passes.
pub fn equicheck(seed: u64) -> ExitCode {
    let outcomes = all_checks(seed);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    println!("{:<3} {:<width$}  result  detail", "#", "property");
    for (i, o) in outcomes.iter().enumerate() {
        println!("{:<3} {:<width$}  {:<6}  {}", i + 1, o.name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} suites passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

/// Mean IoU per model against the upper end of each range, averaged over seeds.
fn read_iou_series(path: &Path) -> Result<Vec<Series>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(IOU_SUMMARY_HEADER) {
        return Err(Error::Format(format!("{}: expected header {IOU_SUMMARY_HEADER}", path.display())));
    }
    let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (f.len() >= 5).then(|| Some((f[3].parse::<f64>().ok()?, f[4].parse::<f64>().ok()?))).flatten();
        let (hi, iou) = parsed.ok_or_else(|| Error::Format(format!("{}:{}: malformed row", path.display(), i + 2)))?;
        let e = acc.entry(f[0].to_string()).or_default().entry(hi.to_bits()).or_insert((hi, 0.0, 0));
        e.1 += iou;
        e.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(name, pts)| {
            let mut points: Vec<(f64, f64)> = pts.values().map(|&(x, s, n)| (x, s / n as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name, points }
        })
        .collect())
}

fn chart(title: &str, x: &str, y: &str, series: Vec<Series>) -> Chart {
    Chart { title: title.into(), x_label: x.into(), y_label: y.into(), log2_x: true, series }
}

fn mask_comparisons(dir: &Path) -> Result<usize> {
    let masks = dir.join("masks");
    if !masks.is_dir() {
        return Ok(0);
    }
    let mut stems: Vec<String> = fs::read_dir(&masks)?
        .filter_map(|e| e.ok()?.file_name().to_str()?.strip_suffix("_image.pgm").map(String::from))
        .collect();
    stems.sort();
    let out = dir.join("compare");
    fs::create_dir_all(&out)?;
    let read = |name: String| -> Result<(usize, usize, Vec<u8>)> {
        let (w, h, _, bytes) = mseq_core::data::pgm::decode_p5(&fs::read(masks.join(name))?)?;
        Ok((w, h, bytes))
    };
    for stem in &stems {
        let (w, h, image) = read(format!("{stem}_image.pgm"))?;
        let (_, _, truth) = read(format!("{stem}_truth.pgm"))?;
        let (_, _, pred) = read(format!("{stem}_pred.pgm"))?;
        if truth.len() != w * h || pred.len() != w * h {
            return Err(Error::Format(format!("{stem}: mask sizes differ from the image")));
        }
        fs::write(out.join(format!("{stem}.pgm")), comparison_strip(&image, &truth, &pred, w, h)?)?;
    }
    Ok(stems.len())
}

pub fn plot(dir: &Path) -> Result<()> {
    let mut made = Vec::new();
    let accuracy = dir.join("accuracy.csv");
    if accuracy.exists() {
        let c = chart("Accuracy by scale", "scale factor", "test accuracy", read_model_series(&accuracy)?);
        write_text(dir.join("accuracy_by_scale.svg"), &render_svg(&c))?;
        made.push("accuracy_by_scale.svg".to_string());
    }
    let distance = dir.join("distance.csv");
    if distance.exists() {
        let c =
            chart("Feature distance to the training scale", "scale factor", "normalized distance", read_model_series(&distance)?);
        write_text(dir.join("feature_distance.svg"), &render_svg(&c))?;
        made.push("feature_distance.svg".to_string());
    }
    let iou = dir.join("iou_summary.csv");
    if iou.exists() {
        let c = chart("Segmentation by scale range", "upper end of the scale range", "mean IoU", read_iou_series(&iou)?);
        write_text(dir.join("iou_by_range.svg"), &render_svg(&c))?;
        made.push("iou_by_range.svg".to_string());
    }
    let strips = mask_comparisons(dir)?;
    if strips > 0 {
        made.push(format!("{strips} mask comparison(s) in compare/"));
    }
    if made.is_empty() {
        return Err(Error::Empty(format!("nothing to plot in {}", dir.display())));
    }
    for m in made {
        println!("wrote {m}");
    }
    Ok(())
}

pub fn compare(o: &Overrides) -> Result<()> {
    let cfg = resolve(Vec::new(), o)?;
    fs::create_dir_all(&cfg.out)?;
    write_manifest_text(&cfg.out, "manifest.txt", &cfg)?;
    let raw = match cfg.task {
        TaskKind::Classify => Some(MnistRaw::load(&cfg.mnist.dir)?),
        TaskKind::Segment => None,
    };
    let digits = raw.as_ref().map(|r| mnist_splits(&cfg, r)).transpose()?;
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let shapes = match cfg.task {
            TaskKind::Segment => Some(shapes_splits(&cfg, seed)?),
            TaskKind::Classify => None,
        };
        for &model in &cfg.models {
            let rec = match (&digits, &shapes) {
                (Some(d), _) => run_classification(&cfg, model, seed, d)?,
                (_, Some(s)) => run_segmentation(&cfg, model, seed, s)?,
                _ => unreachable!("data exists for the configured task"),
            };
            eprintln!("{model} seed {seed}: {:.0} s", rec.seconds);
            records.push(rec);
            let out = &cfg.out;
            write_text(out.join("history.csv"), &history_csv(&records))?;
            match cfg.task {
                TaskKind::Classify => {
                    write_text(out.join("accuracy.csv"), &accuracy_csv(&records))?;
                    write_text(out.join("distance.csv"), &distance_csv(&records))?;
                }
                TaskKind::Segment => write_text(out.join("iou_summary.csv"), &iou_summary_csv(&records))?,
            }
        }
    }
    println!("{} run(s) written to {}", records.len(), cfg.out.display());
    Ok(())
}
