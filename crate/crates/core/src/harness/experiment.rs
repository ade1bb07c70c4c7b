//! The classification and segmentation protocols: data, networks, training and evaluation.

use std::time::Instant;

use super::config::{ExperimentConfig, ModelKind, Precision, TaskKind};
use super::report::{MetricsRecord, RangeIou};
use crate::data::shapes::SHAPE_CLASSES;
use crate::data::{generate_shapes, render_digits, LabeledImage, MnistRaw, ScaledDigits};
use crate::error::{Error, Result};
use crate::nn::{argmax_pixels, LayerSpec, Network, NetworkSpec, Target};
use crate::real::Real;
use crate::scalespace::LiftingKind;
use crate::tensor::Image;
use crate::train::{accuracy, feature_distance, predict, segmentation_iou, Sample, Trainer};

pub const DIGIT_CLASSES: usize = 10;

/// The lifting a model uses: the configured one with the model's kind, or a
/// single identity level for the CNN.
pub fn lifting_for(cfg: &ExperimentConfig, model: ModelKind) -> crate::scalespace::LiftingSpec {
    let mut l = cfg.lifting.clone();
    match model {
        ModelKind::Lifted(kind) => l.kind = kind,
        ModelKind::Cnn => {
            l.kind = LiftingKind::Identity;
            l.n_scales = 1;
        }
    }
    l
}

/// Classification: lifting, `(scale_xcorr, batchnorm, relu)` per width,
/// global max-pool, dense, softmax. Segmentation: the same blocks at stride 1,
/// a final cross-correlation to the class channels, scale max-pool, softmax.
pub fn network_spec(cfg: &ExperimentConfig, model: ModelKind, seed: u64) -> NetworkSpec {
    let a = &cfg.arch;
    let taps = if model == ModelKind::Cnn { 1 } else { a.taps };
    let mut layers = vec![LayerSpec::Lifting(lifting_for(cfg, model))];
    for (&w, &s) in a.widths.iter().zip(&a.strides) {
        layers.extend([
            LayerSpec::ScaleXcorr { taps, out_channels: w, kernel: a.kernel, stride: s },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
        ]);
    }
    match cfg.task {
        TaskKind::Classify => layers.extend([LayerSpec::GlobalMaxPool, LayerSpec::Dense { units: DIGIT_CLASSES }]),
        TaskKind::Segment => layers.extend([
            LayerSpec::ScaleXcorr { taps, out_channels: SHAPE_CLASSES, kernel: a.kernel, stride: 1 },
            LayerSpec::ScaleMaxPool,
        ]),
    }
    layers.push(LayerSpec::SoftmaxXent);
    NetworkSpec { input_channels: 1, layers, seed }
}

/// Independent data seed for split `split` of run `seed`.
pub fn split_seed(seed: u64, split: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(split.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// `[2^-i, 2^i]`.
pub fn scale_range(exponent: f64) -> (f64, f64) {
    let e = 2f64.powf(exponent);
    (1.0 / e, e)
}

/// Segmentation data for one run.
#[derive(Clone, Debug)]
pub struct ShapesSplits {
    pub train: Vec<LabeledImage>,
    pub val: Vec<LabeledImage>,
    /// `(exponent, images)` per test range.
    pub tests: Vec<(f64, Vec<LabeledImage>)>,
}

pub fn shapes_split(cfg: &ExperimentConfig, seed: u64, split: u64, images: usize, exponent: f64) -> Result<Vec<LabeledImage>> {
    let mut s = cfg.shapes.shapes.clone();
    s.images = images;
    s.seed = split_seed(seed, split);
    s.scale_exponent = exponent;
    generate_shapes(&s)
}

pub fn shapes_splits(cfg: &ExperimentConfig, seed: u64) -> Result<ShapesSplits> {
    let d = &cfg.shapes;
    Ok(ShapesSplits {
        train: shapes_split(cfg, seed, 0, d.train_count, 0.0)?,
        val: shapes_split(cfg, seed, 1, d.val_count, 0.0)?,
        tests: d
            .test_exponents
            .iter()
            .enumerate()
            .map(|(i, &e)| Ok((e, shapes_split(cfg, seed, 2 + i as u64, d.test_count, e)?)))
            .collect::<Result<_>>()?,
    })
}

pub fn shape_samples<T: Real>(images: &[LabeledImage]) -> Vec<Sample<T>> {
    images.iter().map(|s| Sample { image: s.image.cast(), target: Target::Mask(s.mask.clone()) }).collect()
}

/// Classification data for one configuration.
#[derive(Clone, Debug)]
pub struct MnistSplits {
    pub train: ScaledDigits,
    pub val: ScaledDigits,
    /// The test digits at the training factor: the feature-distance reference.
    pub reference: ScaledDigits,
    pub tests: Vec<ScaledDigits>,
}

pub fn mnist_splits(cfg: &ExperimentConfig, raw: &MnistRaw) -> Result<MnistSplits> {
    let m = &cfg.mnist;
    let n_train = m.train_count;
    let train = render_digits(&raw.train_images, &raw.train_labels, 0..n_train, m.train_factor, m.canvas)?;
    let val = render_digits(&raw.train_images, &raw.train_labels, n_train..n_train + m.val_count, m.train_factor, m.canvas)?;
    let test = |f: f64| render_digits(&raw.test_images, &raw.test_labels, 0..m.test_count, f, m.canvas);
    Ok(MnistSplits {
        train,
        val,
        reference: test(m.train_factor)?,
        tests: m.test_factors.iter().map(|&f| test(f)).collect::<Result<_>>()?,
    })
}

pub fn digit_samples<T: Real>(d: &ScaledDigits) -> Vec<Sample<T>> {
    d.images.iter().zip(&d.labels).map(|(img, &l)| Sample { image: img.cast(), target: Target::Class(l as usize) }).collect()
}

/// A fresh trainer for `model` under `cfg`, seeded by `seed`.
pub fn new_trainer<T: Real>(cfg: &ExperimentConfig, model: ModelKind, seed: u64) -> Result<Trainer<T>> {
    let net = Network::new(network_spec(cfg, model, seed))?;
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    Ok(Trainer::new(net, tc))
}

/// Accuracy and feature distance at every test factor.
pub fn evaluate_classifier<T: Real>(
    net: &mut Network<T>,
    cfg: &ExperimentConfig,
    data: &MnistSplits,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let batch = cfg.train.eval_batch;
    let mut acc = Vec::new();
    for t in &data.tests {
        acc.push((t.factor, accuracy(net, &digit_samples::<T>(t), batch)?));
    }
    let imgs = |d: &ScaledDigits| d.images.iter().map(|i| i.cast()).collect::<Vec<Image<T>>>();
    let sets: Vec<(f64, Vec<Image<T>>)> = data.tests.iter().map(|t| (t.factor, imgs(t))).collect();
    let dist = feature_distance(net, &imgs(&data.reference), &sets, batch)?;
    Ok((acc, dist))
}

pub fn evaluate_segmenter<T: Real>(
    net: &mut Network<T>,
    cfg: &ExperimentConfig,
    tests: &[(f64, Vec<LabeledImage>)],
) -> Result<Vec<RangeIou>> {
    tests
        .iter()
        .map(|(e, imgs)| {
            let (per_class, mean) = segmentation_iou(net, &shape_samples::<T>(imgs), cfg.train.eval_batch)?;
            let (lo, hi) = scale_range(*e);
            Ok(RangeIou { lo, hi, per_class, mean })
        })
        .collect()
}

/// Predicted label masks, one per image.
pub fn predict_masks<T: Real>(net: &mut Network<T>, images: &[Image<f64>], batch: usize) -> Result<Vec<Vec<u8>>> {
    let imgs: Vec<Image<T>> = images.iter().map(|i| i.cast()).collect();
    predict(net, &imgs, batch)?.iter().map(|o| Ok(argmax_pixels(&o.stack()?.level(0)))).collect()
}

fn classification_run<T: Real>(cfg: &ExperimentConfig, model: ModelKind, seed: u64, data: &MnistSplits) -> Result<MetricsRecord> {
    let started = Instant::now();
    let mut t = new_trainer::<T>(cfg, model, seed)?;
    t.run(&digit_samples(&data.train), &digit_samples(&data.val))?;
    let mut net = t.best_network()?;
    let (accuracy, distance) = evaluate_classifier(&mut net, cfg, data)?;
    Ok(MetricsRecord {
        accuracy,
        distance,
        history: t.history.clone(),
        seconds: started.elapsed().as_secs_f64(),
        ..MetricsRecord::new(model, seed)
    })
}

fn segmentation_run<T: Real>(cfg: &ExperimentConfig, model: ModelKind, seed: u64, data: &ShapesSplits) -> Result<MetricsRecord> {
    let started = Instant::now();
    let mut t = new_trainer::<T>(cfg, model, seed)?;
    t.run(&shape_samples(&data.train), &shape_samples(&data.val))?;
    let mut net = t.best_network()?;
    let iou = evaluate_segmenter(&mut net, cfg, &data.tests)?;
    Ok(MetricsRecord {
        iou,
        history: t.history.clone(),
        seconds: started.elapsed().as_secs_f64(),
        ..MetricsRecord::new(model, seed)
    })
}

/// Trains `model` on the classification data and measures it at every test factor.
pub fn run_classification(cfg: &ExperimentConfig, model: ModelKind, seed: u64, data: &MnistSplits) -> Result<MetricsRecord> {
    if cfg.task != TaskKind::Classify {
        return Err(Error::Config("task: classification run on a segmentation config".into()));
    }
    match cfg.precision {
        Precision::F32 => classification_run::<f32>(cfg, model, seed, data),
        Precision::F64 => classification_run::<f64>(cfg, model, seed, data),
    }
}

/// Trains `model` on single-scale shapes and measures IoU on every test range.
pub fn run_segmentation(cfg: &ExperimentConfig, model: ModelKind, seed: u64, data: &ShapesSplits) -> Result<MetricsRecord> {
    if cfg.task != TaskKind::Segment {
        return Err(Error::Config("task: segmentation run on a classification config".into()));
    }
    match cfg.precision {
        Precision::F32 => segmentation_run::<f32>(cfg, model, seed, data),
        Precision::F64 => segmentation_run::<f64>(cfg, model, seed, data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for task in [TaskKind::Classify, TaskKind::Segment] {
            let cfg = ExperimentConfig::for_task(task);
            for m in ModelKind::PRESET {
                let spec = network_spec(&cfg, m, 1);
                let got = spec.validate().unwrap();
                let xcorrs = spec.layers.iter().filter(|l| matches!(l, LayerSpec::ScaleXcorr { .. })).count();
                match task {
                    TaskKind::Classify => assert_eq!(xcorrs, 5),
                    TaskKind::Segment => assert_eq!(xcorrs, 6),
                }
                assert_eq!(got == crate::nn::Task::Segment { classes: 3 }, task == TaskKind::Segment);
            }
            let p = ExperimentConfig::full_scale(task);
            assert!(network_spec(&p, ModelKind::Cnn, 0).validate().is_ok());
        }
    }

    #[test]
    fn the_cnn_has_one_level() {
        let cfg = ExperimentConfig::for_task(TaskKind::Classify);
        let spec = network_spec(&cfg, ModelKind::Cnn, 1);
        assert_eq!(spec.lifting().n_scales, 1);
        assert_eq!(spec.lifting().kind, LiftingKind::Identity);
        assert_eq!(network_spec(&cfg, ModelKind::Lifted(LiftingKind::Identity), 1).lifting().n_scales, 5);
    }

    #[test]
    fn tiny_segmentation_run_is_deterministic() {
        let mut cfg = ExperimentConfig::for_task(TaskKind::Segment);
        cfg.shapes.shapes.size = 24;
        cfg.shapes.shapes.disk_radius = 3.0;
        cfg.shapes.shapes.star_outer = 4.0;
        cfg.shapes.shapes.star_inner = 2.0;
        cfg.shapes.shapes.objects = (1, 2);
        cfg.shapes.train_count = 8;
        cfg.shapes.val_count = 4;
        cfg.shapes.test_count = 4;
        cfg.shapes.test_exponents = vec![0.0, 1.0];
        cfg.arch.widths = vec![4, 4];
        cfg.arch.strides = vec![1, 1];
        cfg.lifting.n_scales = 2;
        cfg.train.epochs = 1;
        cfg.train.batch_size = 4;
        cfg.validate().unwrap();
        let data = shapes_splits(&cfg, 5).unwrap();
        let a = run_segmentation(&cfg, ModelKind::Lifted(LiftingKind::Dilation), 5, &data).unwrap();
        let b = run_segmentation(&cfg, ModelKind::Lifted(LiftingKind::Dilation), 5, &data).unwrap();
        assert_eq!(a.iou, b.iou);
        assert_eq!(a.history, b.history);
        assert_eq!(a.iou.len(), 2);
        assert_eq!((a.iou[1].lo, a.iou[1].hi), (0.5, 2.0));
        assert!(a.iou.iter().all(|r| (0.0..=1.0).contains(&r.mean)));
    }
}
