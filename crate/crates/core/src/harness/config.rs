//! Plain `key = value` experiment configuration with dotted keys and `#` comments.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::ShapesConfig;
use crate::error::{Error, Result};
use crate::scalespace::{LiftingKind, LiftingSpec};
use crate::train::{OptimizerKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classify,
    Segment,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classify => "classify",
            TaskKind::Segment => "segment",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(TaskKind::Classify),
            "segment" => Ok(TaskKind::Segment),
            _ => Err(Error::Config(format!("task: unknown value '{s}' (expected classify or segment)"))),
        }
    }
}

/// A lifted scale-equivariant model or the plain CNN baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lifted(LiftingKind),
    /// Same layers on a single level: an ordinary CNN.
    Cnn,
}

impl ModelKind {
    /// The comparison set: erosion and opening are available but left out.
    pub const PRESET: [ModelKind; 5] = [
        ModelKind::Lifted(LiftingKind::Gaussian),
        ModelKind::Lifted(LiftingKind::Dilation),
        ModelKind::Lifted(LiftingKind::Closing),
        ModelKind::Lifted(LiftingKind::Identity),
        ModelKind::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lifted(k) => k.name(),
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "cnn" {
            return Ok(ModelKind::Cnn);
        }
        s.parse::<LiftingKind>().map(ModelKind::Lifted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    /// Output channels of the hidden cross-correlation layers.
    pub widths: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub taps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistConfig {
    pub dir: PathBuf,
    pub train_count: usize,
    pub train_factor: f64,
    /// Held-out training digits, rendered at the training factor.
    pub val_count: usize,
    pub test_count: usize,
    pub test_factors: Vec<f64>,
    pub canvas: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentDataConfig {
    /// Geometry shared by every split; `images`, `seed` and `scale_exponent` are set per split.
    pub shapes: ShapesConfig,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Test ranges `[2^-i, 2^i]`.
    pub test_exponents: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub model: ModelKind,
    /// Models trained by comparison runs.
    pub models: Vec<ModelKind>,
    pub lifting: LiftingSpec,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub precision: Precision,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub mnist: MnistConfig,
    pub shapes: SegmentDataConfig,
    pub out: PathBuf,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a task.
    pub fn for_task(task: TaskKind) -> Self {
        let (n_scales, widths, strides, epochs, batch_size, lr) = match task {
            TaskKind::Classify => (5, vec![8, 8, 16, 16, 32], vec![1, 2, 1, 2, 1], 1, 16, 1e-3),
            TaskKind::Segment => (3, vec![8; 5], vec![1; 5], 3, 8, 2e-3),
        };
        ExperimentConfig {
            task,
            model: ModelKind::Lifted(LiftingKind::Dilation),
            models: ModelKind::PRESET.to_vec(),
            lifting: LiftingSpec::new(LiftingKind::Dilation, n_scales),
            arch: ArchConfig { widths, strides, kernel: 3, taps: 1 },
            train: TrainConfig { epochs, batch_size, lr, ..TrainConfig::default() },
            precision: Precision::F32,
            seed: 1,
            seeds: vec![1, 2, 3],
            mnist: MnistConfig {
                dir: PathBuf::from("data/mnist"),
                train_count: 10000,
                train_factor: 2.0,
                val_count: 500,
                test_count: 300,
                test_factors: (0..7).map(|i| 2f64.powf(i as f64 / 2.0)).collect(),
                canvas: 64,
            },
            shapes: SegmentDataConfig {
                shapes: ShapesConfig::default(),
                train_count: 2000,
                val_count: 200,
                test_count: 300,
                test_exponents: vec![0.0, 1.0, 2.0],
            },
            out: PathBuf::from("runs/default"),
            threads: 0,
        }
    }

    /// The full-resolution variant of a task's defaults.
    pub fn full_scale(task: TaskKind) -> Self {
        let mut c = ExperimentConfig::for_task(task);
        match task {
            TaskKind::Classify => {
                c.arch.widths = vec![16, 16, 32, 32, 64];
                c.mnist.canvas = 112;
                c.mnist.test_factors = (-4..=12).map(|i| 2f64.powf(i as f64 / 4.0)).collect();
                c.mnist.test_count = 10000;
            }
            TaskKind::Segment => {
                c.arch.widths = vec![16; 5];
                c.shapes.shapes = ShapesConfig::full_scale();
                c.shapes.train_count = 10000;
                c.shapes.test_count = 500;
            }
        }
        c.precision = Precision::F64;
        c
    }

    /// Builds a config from `(key, value)` pairs; `task` is applied first so
    /// the other keys override that task's defaults.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let task =
            pairs.iter().rev().find(|(k, _)| k == "task").map(|(_, v)| v.parse()).transpose()?.unwrap_or(TaskKind::Classify);
        let mut c = ExperimentConfig::for_task(task);
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        ExperimentConfig::from_pairs(&parse_pairs(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
        ExperimentConfig::parse(&text)
    }

    /// Sets one key; the error names the key on unknown keys or bad values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |what: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a finite number ({what})")))
        };
        let count = || -> Result<usize> {
            v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
        };
        let list_f = || -> Result<Vec<f64>> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a list of numbers")))
        };
        let list_u = || -> Result<Vec<usize>> {
            v.split(',')
                .map(|s| s.trim().parse::<usize>().ok())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a list of integers")))
        };
        let named = |e: Error| Error::Config(format!("{key}: {}", bare(&e)));
        match key {
            "task" => self.task = v.parse()?,
            "model" => self.model = v.parse().map_err(named)?,
            "models" => self.models = v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>().map_err(named)?,
            "lifting.n_scales" => self.lifting.n_scales = count()?,
            "lifting.s0" => self.lifting.s0 = num("base scale")?,
            "lifting.c" => self.lifting.c = num("structuring parameter")?,
            "lifting.truncation" => self.lifting.truncation_radius_sigmas = num("sigmas")?,
            "lifting.radius_factor" => self.lifting.morph_radius_factor = num("radius factor")?,
            "lifting.gamma" => {
                if num("scale base")? != 2.0 {
                    return Err(Error::Config(format!("{key}: only the dyadic base 2 is supported")));
                }
            }
            "arch.widths" => self.arch.widths = list_u()?,
            "arch.strides" => self.arch.strides = list_u()?,
            "arch.kernel" => self.arch.kernel = count()?,
            "arch.taps" => self.arch.taps = count()?,
            "optimizer.kind" => {
                self.train.optimizer = match v {
                    "adam" => OptimizerKind::adam(),
                    "sgd" => OptimizerKind::SgdMomentum { momentum: 0.9 },
                    _ => return Err(Error::Config(format!("{key}: unknown optimizer '{v}' (expected adam or sgd)"))),
                }
            }
            "optimizer.lr" => self.train.lr = num("learning rate")?,
            "optimizer.momentum" | "optimizer.beta1" | "optimizer.beta2" | "optimizer.eps" => {
                let x = num("optimizer parameter")?;
                match (&mut self.train.optimizer, key) {
                    (OptimizerKind::SgdMomentum { momentum }, "optimizer.momentum") => *momentum = x,
                    (OptimizerKind::Adam { beta1, .. }, "optimizer.beta1") => *beta1 = x,
                    (OptimizerKind::Adam { beta2, .. }, "optimizer.beta2") => *beta2 = x,
                    (OptimizerKind::Adam { eps, .. }, "optimizer.eps") => *eps = x,
                    _ => {
                        return Err(Error::Config(format!("{key}: does not apply to optimizer {}", self.train.optimizer.name())))
                    }
                }
            }
            "train.epochs" => self.train.epochs = count()?,
            "train.batch_size" => self.train.batch_size = count()?,
            "train.eval_batch" => self.train.eval_batch = count()?,
            "train.precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("{key}: unknown precision '{v}' (expected f32 or f64)"))),
                }
            }
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not an integer")))?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().ok())
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a list of integers")))?
            }
            "out" => self.out = PathBuf::from(v),
            "threads" => self.threads = count()?,
            "mnist.dir" => self.mnist.dir = PathBuf::from(v),
            "mnist.train_count" => self.mnist.train_count = count()?,
            "mnist.train_factor" => self.mnist.train_factor = num("scale factor")?,
            "mnist.val_count" => self.mnist.val_count = count()?,
            "mnist.test_count" => self.mnist.test_count = count()?,
            "mnist.test_factors" => self.mnist.test_factors = list_f()?,
            "mnist.canvas" => self.mnist.canvas = count()?,
            "shapes.size" => self.shapes.shapes.size = count()?,
            "shapes.train_count" => self.shapes.train_count = count()?,
            "shapes.val_count" => self.shapes.val_count = count()?,
            "shapes.test_count" => self.shapes.test_count = count()?,
            "shapes.test_exponents" => self.shapes.test_exponents = list_f()?,
            "shapes.objects_min" => self.shapes.shapes.objects.0 = count()?,
            "shapes.objects_max" => self.shapes.shapes.objects.1 = count()?,
            "shapes.disk_radius" => self.shapes.shapes.disk_radius = num("radius")?,
            "shapes.star_outer" => self.shapes.shapes.star_outer = num("radius")?,
            "shapes.star_inner" => self.shapes.shapes.star_inner = num("radius")?,
            "shapes.star_points" => self.shapes.shapes.star_points = count()?,
            "shapes.min_separation" => self.shapes.shapes.min_separation = num("distance")?,
            "shapes.max_retries" => self.shapes.shapes.max_retries = count()?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config(format!("{key}: {msg}")));
        if self.arch.widths.is_empty() || self.arch.widths.contains(&0) {
            return bad("arch.widths", "needs at least one positive width");
        }
        if self.arch.widths.len() != self.arch.strides.len() {
            return bad("arch.strides", "needs one stride per width");
        }
        if self.arch.strides.contains(&0) {
            return bad("arch.strides", "strides must be positive");
        }
        if self.task == TaskKind::Segment && self.arch.strides.iter().any(|&s| s != 1) {
            return bad("arch.strides", "segmentation networks keep full resolution (stride 1)");
        }
        if self.arch.kernel.is_multiple_of(2) {
            return bad("arch.kernel", "must be odd");
        }
        if self.arch.taps == 0 {
            return bad("arch.taps", "must be at least 1");
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 || self.train.eval_batch == 0 {
            return bad("train", "epochs and batch sizes must be positive");
        }
        if !(self.train.lr >= 0.0) {
            return bad("optimizer.lr", "must be non-negative");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "needs at least one seed");
        }
        if self.models.is_empty() {
            return bad("models", "needs at least one model");
        }
        if self.mnist.test_factors.iter().chain([&self.mnist.train_factor]).any(|&f| f <= 0.0) {
            return bad("mnist.test_factors", "scale factors must be positive");
        }
        self.lifting.validate().map_err(|e| Error::Config(format!("lifting: {}", bare(&e))))?;
        let mut geom = self.shapes.shapes.clone();
        for &e in &self.shapes.test_exponents {
            geom.scale_exponent = e;
            geom.validate().map_err(|err| Error::Config(format!("shapes: {}", bare(&err))))?;
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`ExperimentConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let f = |xs: &[f64]| join(&xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>());
        let u = |xs: &[usize]| join(&xs.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let mut lines = vec![
            format!("task = {}", self.task),
            format!("model = {}", self.model),
            format!("models = {}", join(&self.models.iter().map(|m| m.to_string()).collect::<Vec<_>>())),
            format!("lifting.n_scales = {}", self.lifting.n_scales),
            format!("lifting.s0 = {:?}", self.lifting.s0),
            format!("lifting.c = {:?}", self.lifting.c),
            format!("lifting.truncation = {:?}", self.lifting.truncation_radius_sigmas),
            format!("lifting.radius_factor = {:?}", self.lifting.morph_radius_factor),
            format!("arch.widths = {}", u(&self.arch.widths)),
            format!("arch.strides = {}", u(&self.arch.strides)),
            format!("arch.kernel = {}", self.arch.kernel),
            format!("arch.taps = {}", self.arch.taps),
        ];
        match self.train.optimizer {
            OptimizerKind::Adam { beta1, beta2, eps } => lines.extend([
                "optimizer.kind = adam".to_string(),
                format!("optimizer.beta1 = {beta1:?}"),
                format!("optimizer.beta2 = {beta2:?}"),
                format!("optimizer.eps = {eps:?}"),
            ]),
            OptimizerKind::SgdMomentum { momentum } => {
                lines.extend(["optimizer.kind = sgd".to_string(), format!("optimizer.momentum = {momentum:?}")])
            }
        }
        let s = &self.shapes.shapes;
        lines.extend([
            format!("optimizer.lr = {:?}", self.train.lr),
            format!("train.epochs = {}", self.train.epochs),
            format!("train.batch_size = {}", self.train.batch_size),
            format!("train.eval_batch = {}", self.train.eval_batch),
            format!("train.precision = {}", if self.precision == Precision::F32 { "f32" } else { "f64" }),
            format!("seed = {}", self.seed),
            format!("seeds = {}", join(&self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>())),
            format!("out = {}", self.out.display()),
            format!("threads = {}", self.threads),
            format!("mnist.dir = {}", self.mnist.dir.display()),
            format!("mnist.train_count = {}", self.mnist.train_count),
            format!("mnist.train_factor = {:?}", self.mnist.train_factor),
            format!("mnist.val_count = {}", self.mnist.val_count),
            format!("mnist.test_count = {}", self.mnist.test_count),
            format!("mnist.test_factors = {}", f(&self.mnist.test_factors)),
            format!("mnist.canvas = {}", self.mnist.canvas),
            format!("shapes.size = {}", s.size),
            format!("shapes.train_count = {}", self.shapes.train_count),
            format!("shapes.val_count = {}", self.shapes.val_count),
            format!("shapes.test_count = {}", self.shapes.test_count),
            format!("shapes.test_exponents = {}", f(&self.shapes.test_exponents)),
            format!("shapes.objects_min = {}", s.objects.0),
            format!("shapes.objects_max = {}", s.objects.1),
            format!("shapes.disk_radius = {:?}", s.disk_radius),
            format!("shapes.star_outer = {:?}", s.star_outer),
            format!("shapes.star_inner = {:?}", s.star_inner),
            format!("shapes.star_points = {}", s.star_points),
            format!("shapes.min_separation = {:?}", s.min_separation),
            format!("shapes.max_retries = {}", s.max_retries),
        ]);
        lines.join("\n") + "\n"
    }
}

/// An error's message without its kind prefix, for re-wrapping under a key.
fn bare(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Domain(m) | Error::Range(m) | Error::Contract(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Splits config text into `(key, value)` pairs, dropping blank lines and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
                _ => Err(Error::Config(format!("line {}: expected key = value, found '{line}'", i + 1))),
            })
        })
        .collect()
}
